//! Transformer scaling arithmetic, checked against an instrumented model.
//!
//! [`cost`] holds the closed-form flop, memory, data and dollar estimates.
//! [`model`], [`kv`] and [`train`] implement a small double-precision
//! decoder-only transformer whose every multiply-add passes through a
//! [`FlopLedger`], so the estimates can be compared against what the model
//! actually spends. [`verify`] runs that comparison for one configuration.
//!
//! ```
//! use flopscale::{cost, forward, FlopLedger, ModelConfig, ParameterSet, Preset};
//!
//! let cfg = ModelConfig::new(8, 11, 8, 2, 2)?;
//! let params = ParameterSet::init(&cfg, 0);
//! let mut ledger = FlopLedger::new();
//! forward(&[1, 2, 3, 4, 5, 6, 7, 8], &params, &mut ledger)?;
//! assert_eq!(ledger.total() as u128, cost::forward_flops(&cfg, 8));
//!
//! let a = cost::use_case_report(Preset::A, &Default::default());
//! assert!((a.training_flops as f64 / 2.7e21 - 1.0).abs() < 0.1);
//! # Ok::<(), flopscale::Error>(())
//! ```

pub mod checkpoint;
pub mod cost;
pub mod error;
pub mod kv;
pub mod ledger;
pub mod model;
pub mod tensor;
pub mod train;
pub mod verify;

pub use checkpoint::Checkpoint;
pub use cost::{CostReport, HardwareProfile, MoEScenario, Preset, VocabTerms};
pub use error::{Error, Result};
pub use kv::{decode_step, generate, generate_uncached, prefill, KVCache, Prefix};
pub use ledger::{Category, Direction, FlopLedger, LedgerReport};
pub use model::{forward, ModelConfig, ParameterSet};
pub use tensor::Matrix;
pub use train::{GradientSet, TrainingConfig};
