use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// tanh-approximated GELU.
    #[default]
    Gelu,
    /// No nonlinearity; makes the feed-forward block linear.
    Identity,
}

/// Architecture scalars of a decoder-only transformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Context window length `n`.
    pub context: usize,
    /// Vocabulary size `V`.
    pub vocab: usize,
    pub d_emb: usize,
    pub heads: usize,
    pub layers: usize,
    /// Feed-forward inner width, `4·d_emb` unless overridden.
    pub d_ff: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelConfig {
    pub fn new(
        context: usize,
        vocab: usize,
        d_emb: usize,
        heads: usize,
        layers: usize,
    ) -> Result<Self> {
        let cfg = Self {
            context,
            vocab,
            d_emb,
            heads,
            layers,
            d_ff: 4 * d_emb,
            activation: Activation::Gelu,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_d_ff(mut self, d_ff: usize) -> Result<Self> {
        self.d_ff = d_ff;
        self.validate()?;
        Ok(self)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    /// Zero layers is accepted: the model degenerates to embed + unembed.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("context", self.context),
            ("vocab", self.vocab),
            ("d_emb", self.d_emb),
            ("heads", self.heads),
            ("d_ff", self.d_ff),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !self.d_emb.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_emb {} is not divisible by heads {}",
                self.d_emb, self.heads
            )));
        }
        Ok(())
    }

    /// Per-head width `d_emb / heads`.
    pub fn d_head(&self) -> usize {
        self.d_emb / self.heads
    }

    /// Exact scalar count of a [`ParameterSet`](crate::ParameterSet) for this config.
    pub fn parameter_count(&self) -> usize {
        let d = self.d_emb;
        let per_layer = 4 * d * d + 2 * d * self.d_ff + 4 * d;
        self.layers * per_layer + 2 * self.vocab * d
    }
}
