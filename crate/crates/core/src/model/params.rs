use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ModelConfig;
use crate::tensor::Matrix;

/// Which weight a tensor plays in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    Embedding,
    Query,
    Key,
    Value,
    Output,
    FfnExpand,
    FfnContract,
    Norm1Gain,
    Norm1Bias,
    Norm2Gain,
    Norm2Bias,
    Unembedding,
}

impl ParamRole {
    pub const ALL: [ParamRole; 12] = [
        ParamRole::Embedding,
        ParamRole::Query,
        ParamRole::Key,
        ParamRole::Value,
        ParamRole::Output,
        ParamRole::FfnExpand,
        ParamRole::FfnContract,
        ParamRole::Norm1Gain,
        ParamRole::Norm1Bias,
        ParamRole::Norm2Gain,
        ParamRole::Norm2Bias,
        ParamRole::Unembedding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamRole::Embedding => "E",
            ParamRole::Query => "W_Q",
            ParamRole::Key => "W_K",
            ParamRole::Value => "W_V",
            ParamRole::Output => "O",
            ParamRole::FfnExpand => "W1",
            ParamRole::FfnContract => "W2",
            ParamRole::Norm1Gain => "norm1.gain",
            ParamRole::Norm1Bias => "norm1.bias",
            ParamRole::Norm2Gain => "norm2.gain",
            ParamRole::Norm2Bias => "norm2.bias",
            ParamRole::Unembedding => "U",
        }
    }
}

/// Location of one tensor inside a [`ParameterSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ParamId {
    pub role: ParamRole,
    pub layer: Option<usize>,
    pub head: Option<usize>,
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.layer {
            write!(f, "layer{l}.")?;
        }
        f.write_str(self.role.name())?;
        if let Some(h) = self.head {
            write!(f, "[head{h}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Per-head `d_emb × d_head` projection blocks.
    pub w_q: Vec<Matrix>,
    pub w_k: Vec<Matrix>,
    pub w_v: Vec<Matrix>,
    /// `d_emb × d_emb` output projection applied to the concatenated heads.
    pub w_o: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
    pub norm1_gain: Matrix,
    pub norm1_bias: Matrix,
    pub norm2_gain: Matrix,
    pub norm2_bias: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub cfg: ModelConfig,
    /// `V × d_emb` lookup table.
    pub embedding: Matrix,
    pub layers: Vec<LayerParams>,
    /// `d_emb × V`, independent of `embedding`.
    pub unembedding: Matrix,
}

impl ParameterSet {
    /// Uniform weights in `±1/sqrt(fan_in)`; norm gains 1, biases 0.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, dh, dff) = (cfg.d_emb, cfg.d_head(), cfg.d_ff);
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
        };
        let embedding = uniform(cfg.vocab, d, d);
        let mut layers = Vec::with_capacity(cfg.layers);
        for _ in 0..cfg.layers {
            let w_q = (0..cfg.heads).map(|_| uniform(d, dh, d)).collect();
            let w_k = (0..cfg.heads).map(|_| uniform(d, dh, d)).collect();
            let w_v = (0..cfg.heads).map(|_| uniform(d, dh, d)).collect();
            let w_o = uniform(d, d, d);
            let w1 = uniform(d, dff, d);
            let w2 = uniform(dff, d, dff);
            layers.push(LayerParams {
                w_q,
                w_k,
                w_v,
                w_o,
                w1,
                w2,
                norm1_gain: Matrix::filled(1, d, 1.0),
                norm1_bias: Matrix::zeros(1, d),
                norm2_gain: Matrix::filled(1, d, 1.0),
                norm2_bias: Matrix::zeros(1, d),
            });
        }
        let unembedding = uniform(d, cfg.vocab, d);
        Self {
            cfg: *cfg,
            embedding,
            layers,
            unembedding,
        }
    }

    /// Same shapes, every entry zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, m) in out.tensors_mut() {
            m.data_mut().fill(0.0);
        }
        out
    }

    /// Every tensor in canonical order: E, then per layer
    /// (W_Q, W_K, W_V heads, O, W1, W2, norms), then U.
    pub fn tensors(&self) -> Vec<(ParamId, &Matrix)> {
        let mut out = vec![(id(ParamRole::Embedding, None, None), &self.embedding)];
        for (l, layer) in self.layers.iter().enumerate() {
            for (role, blocks) in [
                (ParamRole::Query, &layer.w_q),
                (ParamRole::Key, &layer.w_k),
                (ParamRole::Value, &layer.w_v),
            ] {
                for (h, m) in blocks.iter().enumerate() {
                    out.push((id(role, Some(l), Some(h)), m));
                }
            }
            for (role, m) in [
                (ParamRole::Output, &layer.w_o),
                (ParamRole::FfnExpand, &layer.w1),
                (ParamRole::FfnContract, &layer.w2),
                (ParamRole::Norm1Gain, &layer.norm1_gain),
                (ParamRole::Norm1Bias, &layer.norm1_bias),
                (ParamRole::Norm2Gain, &layer.norm2_gain),
                (ParamRole::Norm2Bias, &layer.norm2_bias),
            ] {
                out.push((id(role, Some(l), None), m));
            }
        }
        out.push((id(ParamRole::Unembedding, None, None), &self.unembedding));
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(ParamId, &mut Matrix)> {
        let mut out = vec![(id(ParamRole::Embedding, None, None), &mut self.embedding)];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (role, blocks) in [
                (ParamRole::Query, &mut layer.w_q),
                (ParamRole::Key, &mut layer.w_k),
                (ParamRole::Value, &mut layer.w_v),
            ] {
                for (h, m) in blocks.iter_mut().enumerate() {
                    out.push((id(role, Some(l), Some(h)), m));
                }
            }
            for (role, m) in [
                (ParamRole::Output, &mut layer.w_o),
                (ParamRole::FfnExpand, &mut layer.w1),
                (ParamRole::FfnContract, &mut layer.w2),
                (ParamRole::Norm1Gain, &mut layer.norm1_gain),
                (ParamRole::Norm1Bias, &mut layer.norm1_bias),
                (ParamRole::Norm2Gain, &mut layer.norm2_gain),
                (ParamRole::Norm2Bias, &mut layer.norm2_bias),
            ] {
                out.push((id(role, Some(l), None), m));
            }
        }
        out.push((
            id(ParamRole::Unembedding, None, None),
            &mut self.unembedding,
        ));
        out
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    /// True when both sets have identical tensor shapes in the same order.
    pub fn congruent(&self, other: &ParameterSet) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|((ia, ma), (ib, mb))| ia == ib && ma.shape() == mb.shape())
    }
}

fn id(role: ParamRole, layer: Option<usize>, head: Option<usize>) -> ParamId {
    ParamId { role, layer, head }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn init_is_deterministic() {
        let cfg = ModelConfig::new(4, 11, 8, 2, 2).unwrap();
        let a = ParameterSet::init(&cfg, 7);
        let b = ParameterSet::init(&cfg, 7);
        assert_eq!(a, b);
        assert!(a.tensors().iter().zip(b.tensors()).all(|((_, x), (_, y))| x
            .data()
            .iter()
            .zip(y.data())
            .all(|(p, q)| p.to_bits() == q.to_bits())));
        assert_ne!(a, ParameterSet::init(&cfg, 8));
    }

    #[test]
    fn zero_layers_leaves_embeddings_only() {
        let cfg = ModelConfig::new(4, 11, 8, 2, 0).unwrap();
        assert_eq!(ParameterSet::init(&cfg, 0).scalar_count(), 2 * 11 * 8);
    }

    #[test]
    fn small_config_count() {
        // Summed matrix by matrix: per layer 3 projections of 8x8 split into
        // heads, O 8x8, W1 8x32, W2 32x8, four norm vectors of 8.
        let per_layer = 3 * 2 * (8 * 4) + 64 + 8 * 32 + 32 * 8 + 4 * 8;
        let expect = 11 * 8 + 2 * per_layer + 8 * 11;
        assert_eq!(expect, 1776);
        let cfg = ModelConfig::new(4, 11, 8, 2, 2).unwrap();
        assert_eq!(ParameterSet::init(&cfg, 0).scalar_count(), expect);
    }

    #[test]
    fn norms_start_as_identity() {
        let cfg = ModelConfig::new(4, 11, 8, 2, 1).unwrap();
        let p = ParameterSet::init(&cfg, 1);
        assert!(p.layers[0].norm1_gain.data().iter().all(|&g| g == 1.0));
        assert!(p.layers[0].norm2_bias.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn weights_bounded_by_fan_in() {
        let cfg = ModelConfig::new(4, 11, 16, 4, 1).unwrap();
        let p = ParameterSet::init(&cfg, 3);
        assert!(p.layers[0].w1.max_abs() <= 0.25);
        assert!(p.layers[0].w2.max_abs() <= 1.0 / 8.0);
    }

    proptest! {
        #[test]
        fn parameter_count_identity(
            heads in 1usize..5, dh in 1usize..5, layers in 0usize..4, vocab in 1usize..20,
        ) {
            let d = heads * dh;
            let cfg = ModelConfig::new(8, vocab, d, heads, layers).unwrap();
            let p = ParameterSet::init(&cfg, 0);
            let expect = 12 * layers * d * d + 4 * layers * d + 2 * vocab * d;
            prop_assert_eq!(p.scalar_count(), expect);
            prop_assert_eq!(cfg.parameter_count(), expect);
        }
    }
}
