//! Instrumented reference decoder-only transformer.

mod config;
mod forward;
mod params;
mod sample;

pub use config::{Activation, ModelConfig};
pub(crate) use forward::{activate, activate_grad, embed_at};
pub use forward::{
    attention, check_tokens, embed, feed_forward, forward, forward_traced, positional_encoding,
    transformer_layer, AttentionTrace, ForwardTrace, LayerTrace,
};
pub use params::{LayerParams, ParamId, ParamRole, ParameterSet};
pub use sample::{argmax, sample_next, sample_next_seeded};
