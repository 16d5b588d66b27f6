//! Measured-versus-analytic cross-check of one small configuration.
//!
//! Runs the instrumented model and compares its ledger against the closed
//! forms category by category, then checks the cached decoder, the backward
//! ledger ratio and the gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cost::{
    forward_flops, forward_flops_by_category, incremental_flops_with, IncrementalTerms,
};
use crate::error::{Error, Result};
use crate::kv::{decode_step, prefill};
use crate::ledger::{Category, Direction, FlopLedger};
use crate::model::{forward, ModelConfig, ParameterSet};
use crate::train::{grad_check_params, loss_and_gradients};

/// Largest forward pass `verify` agrees to instrument.
pub const DESK_FLOP_LIMIT: u128 = 1_000_000_000;
/// Cached logits must match recomputed ones to this relative tolerance.
pub const KV_TOLERANCE: f64 = 1e-9;
/// Finite-difference step and acceptance bound for the gradient check.
pub const GRAD_EPSILON: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    pub grad_samples: usize,
    /// Perturbs one expected value so the failure path can be exercised.
    pub corrupt_expected: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            grad_samples: 256,
            corrupt_expected: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CategoryComparison {
    pub category: Category,
    pub measured: u128,
    pub predicted: u128,
}

impl CategoryComparison {
    pub fn exact(&self) -> bool {
        self.measured == self.predicted
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub config: ModelConfig,
    pub forward: Vec<CategoryComparison>,
    pub forward_measured: u128,
    pub forward_predicted: u128,
    /// Cache lengths whose decode ledger disagreed with the closed form.
    pub decode_mismatches: Vec<usize>,
    pub decode_steps: usize,
    pub decode_max_rel_diff: f64,
    pub forward_matmul: u64,
    pub backward_matmul: u64,
    pub grad_samples: usize,
    pub grad_max_rel_error: f64,
}

impl VerifyReport {
    pub fn forward_exact(&self) -> bool {
        self.forward.iter().all(CategoryComparison::exact)
            && self.forward_measured == self.forward_predicted
    }

    pub fn decode_exact(&self) -> bool {
        self.decode_mismatches.is_empty()
    }

    pub fn kv_equivalent(&self) -> bool {
        self.decode_max_rel_diff <= KV_TOLERANCE
    }

    pub fn backward_ratio_exact(&self) -> bool {
        self.backward_matmul == 2 * self.forward_matmul
    }

    pub fn gradients_ok(&self) -> bool {
        self.grad_max_rel_error <= GRAD_TOLERANCE
    }

    pub fn passed(&self) -> bool {
        self.forward_exact()
            && self.decode_exact()
            && self.kv_equivalent()
            && self.backward_ratio_exact()
            && self.gradients_ok()
    }
}

/// Maximum of `|a − b| / max(|a|, |b|)` over paired entries, with a tiny
/// floor so exact zeros compare equal.
pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300))
        .fold(0.0, f64::max)
}

pub fn verify(cfg: &ModelConfig, options: &VerifyOptions) -> Result<VerifyReport> {
    cfg.validate()?;
    let predicted_total = forward_flops(cfg, cfg.context);
    if predicted_total > DESK_FLOP_LIMIT {
        return Err(Error::TooLarge {
            flops: predicted_total,
            limit: DESK_FLOP_LIMIT,
        });
    }
    if cfg.context < 2 {
        return Err(Error::Config(
            "verification needs a context of at least 2".into(),
        ));
    }

    let params = ParameterSet::init(cfg, options.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(17));
    let tokens: Vec<usize> = (0..cfg.context)
        .map(|_| rng.gen_range(0..cfg.vocab))
        .collect();

    let mut ledger = FlopLedger::new();
    let logits = forward(&tokens, &params, &mut ledger)?;
    let mut comparisons: Vec<CategoryComparison> = forward_flops_by_category(cfg, cfg.context)
        .into_iter()
        .map(|(category, predicted)| CategoryComparison {
            category,
            measured: ledger.get(category, Direction::Forward) as u128,
            predicted,
        })
        .collect();
    let mut forward_predicted = predicted_total;
    if options.corrupt_expected {
        comparisons[0].predicted += 1;
        forward_predicted += 1;
    }

    let (mut cache, _) = prefill(&tokens[..1], &params, &mut FlopLedger::new())?;
    let mut decode_mismatches = Vec::new();
    let mut decode_max_rel_diff: f64 = 0.0;
    for (t, &tok) in tokens.iter().enumerate().skip(1) {
        let mut step = FlopLedger::new();
        let row = decode_step(&mut cache, tok, &params, &mut step)?;
        if step.total() as u128 != incremental_flops_with(cfg, t + 1, IncrementalTerms::ALL) {
            decode_mismatches.push(t);
        }
        decode_max_rel_diff = decode_max_rel_diff.max(max_rel_diff(&row, logits.row(t)));
    }

    let mut train_ledger = FlopLedger::new();
    loss_and_gradients(&tokens, &params, &mut train_ledger)?;
    let grad = grad_check_params(
        &params,
        &tokens,
        GRAD_EPSILON,
        options.grad_samples,
        options.seed,
    )?;

    Ok(VerifyReport {
        config: *cfg,
        forward: comparisons,
        forward_measured: ledger.direction_total(Direction::Forward) as u128,
        forward_predicted,
        decode_mismatches,
        decode_steps: cfg.context - 1,
        decode_max_rel_diff,
        forward_matmul: train_ledger.matmul_total(Direction::Forward),
        backward_matmul: train_ledger.matmul_total(Direction::Backward),
        grad_samples: grad.entries.len(),
        grad_max_rel_error: grad.max_rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_config_passes() {
        let cfg = ModelConfig::new(4, 11, 8, 2, 2).unwrap();
        let report = verify(&cfg, &VerifyOptions::default()).unwrap();
        assert!(report.passed(), "{report:#?}");
        assert_eq!(report.forward_measured, 7136);
    }

    #[test]
    fn corrupted_expectation_fails() {
        let cfg = ModelConfig::new(4, 11, 8, 2, 2).unwrap();
        let options = VerifyOptions {
            corrupt_expected: true,
            ..VerifyOptions::default()
        };
        assert!(!verify(&cfg, &options).unwrap().passed());
    }

    #[test]
    fn refuses_large_configs() {
        let cfg = ModelConfig::new(2048, 32_768, 4096, 32, 32).unwrap();
        assert!(matches!(
            verify(&cfg, &VerifyOptions::default()),
            Err(Error::TooLarge { .. })
        ));
    }
}
