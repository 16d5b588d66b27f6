//! Forward evaluation of the reference decoder.
//!
//! Every public entry point here is a thin wrapper over the traced variants,
//! so cached decoding, training and plain inference share one arithmetic path.

use super::config::{Activation, ModelConfig};
use super::params::{LayerParams, ParameterSet};
use crate::error::{Error, Result};
use crate::ledger::{Category, Direction, FlopLedger};
use crate::tensor::{layer_norm_rows, matmul, softmax_rows, Matrix, NormOutput};

const FWD: Direction = Direction::Forward;

/// Sinusoidal position code for one position.
pub fn positional_encoding(position: usize, d_emb: usize) -> Vec<f64> {
    (0..d_emb)
        .map(|j| {
            let pair = (j / 2) as f64;
            let angle = position as f64 / 10_000f64.powf(2.0 * pair / d_emb as f64);
            if j % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Checks `1 ≤ len ≤ n` and every id `< V`.
pub fn check_tokens(cfg: &ModelConfig, tokens: &[usize]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::Sequence {
            len: 0,
            reason: "empty",
        });
    }
    if tokens.len() > cfg.context {
        return Err(Error::Sequence {
            len: tokens.len(),
            reason: "longer than the context window",
        });
    }
    if let Some(&id) = tokens.iter().find(|&&t| t >= cfg.vocab) {
        return Err(Error::Vocabulary {
            id,
            vocab: cfg.vocab,
        });
    }
    Ok(())
}

/// Embedding lookup plus position code. Lookups are not ledgered.
pub fn embed(tokens: &[usize], params: &ParameterSet, _ledger: &mut FlopLedger) -> Result<Matrix> {
    check_tokens(&params.cfg, tokens)?;
    Ok(embed_at(tokens, 0, params))
}

/// Embeds `tokens` as if they start at position `offset`.
pub(crate) fn embed_at(tokens: &[usize], offset: usize, params: &ParameterSet) -> Matrix {
    let d = params.cfg.d_emb;
    let mut x = Matrix::zeros(tokens.len(), d);
    for (k, &tok) in tokens.iter().enumerate() {
        let pe = positional_encoding(offset + k, d);
        let row = x.row_mut(k);
        for ((dst, e), p) in row.iter_mut().zip(params.embedding.row(tok)).zip(&pe) {
            *dst = e + p;
        }
    }
    x
}

pub(crate) fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let inner = C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub(crate) fn activate(act: Activation, x: &Matrix) -> Matrix {
    match act {
        Activation::Gelu => x.map(gelu),
        Activation::Identity => x.clone(),
    }
}

pub(crate) fn activate_grad(act: Activation, x: f64) -> f64 {
    match act {
        Activation::Gelu => gelu_grad(x),
        Activation::Identity => 1.0,
    }
}

/// Intermediates of one attention block, per head.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub q: Vec<Matrix>,
    pub k: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub probs: Vec<Matrix>,
    pub concat: Matrix,
    pub out: Matrix,
}

pub(crate) fn attention_traced(
    x: &Matrix,
    layer: &LayerParams,
    ledger: &mut FlopLedger,
    causal: bool,
) -> Result<AttentionTrace> {
    let m = x.rows();
    let heads = layer.w_q.len();
    let d_head = layer.w_q[0].cols();
    let scale = 1.0 / (d_head as f64).sqrt();
    let mut concat = Matrix::zeros(m, x.cols());
    let mut trace = AttentionTrace {
        q: Vec::with_capacity(heads),
        k: Vec::with_capacity(heads),
        v: Vec::with_capacity(heads),
        probs: Vec::with_capacity(heads),
        concat: Matrix::zeros(1, 1),
        out: Matrix::zeros(1, 1),
    };
    for h in 0..heads {
        let q = matmul(x, &layer.w_q[h], ledger, Category::QkvProjection, FWD)?;
        let k = matmul(x, &layer.w_k[h], ledger, Category::QkvProjection, FWD)?;
        let v = matmul(x, &layer.w_v[h], ledger, Category::QkvProjection, FWD)?;
        let mut scores = matmul(&q, &k.transpose(), ledger, Category::AttentionScores, FWD)?;
        scores.scale(scale);
        if causal {
            for i in 0..m {
                scores.row_mut(i)[i + 1..].fill(f64::NEG_INFINITY);
            }
        }
        let probs = softmax_rows(&scores)?;
        let head_out = matmul(&probs, &v, ledger, Category::AttentionValues, FWD)?;
        concat.set_columns(h * d_head, &head_out);
        trace.q.push(q);
        trace.k.push(k);
        trace.v.push(v);
        trace.probs.push(probs);
    }
    trace.out = matmul(&concat, &layer.w_o, ledger, Category::OutputProjection, FWD)?;
    trace.concat = concat;
    Ok(trace)
}

/// Multi-head self-attention over the rows of `x`.
pub fn attention(
    x: &Matrix,
    layer: &LayerParams,
    ledger: &mut FlopLedger,
    causal: bool,
) -> Result<Matrix> {
    Ok(attention_traced(x, layer, ledger, causal)?.out)
}

/// Row-wise two-layer MLP: `act(x·W1)·W2`.
pub fn feed_forward(
    x: &Matrix,
    layer: &LayerParams,
    activation: Activation,
    ledger: &mut FlopLedger,
) -> Result<Matrix> {
    let pre = matmul(x, &layer.w1, ledger, Category::FfnExpand, FWD)?;
    let act = activate(activation, &pre);
    matmul(&act, &layer.w2, ledger, Category::FfnContract, FWD)
}

#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub input: Matrix,
    pub norm1: NormOutput,
    pub attention: AttentionTrace,
    pub mid: Matrix,
    pub norm2: NormOutput,
    pub ffn_pre: Matrix,
    pub ffn_act: Matrix,
    pub output: Matrix,
}

pub(crate) fn layer_traced(
    x: &Matrix,
    layer: &LayerParams,
    activation: Activation,
    ledger: &mut FlopLedger,
) -> Result<LayerTrace> {
    let norm1 = layer_norm_rows(x, &layer.norm1_gain, &layer.norm1_bias, ledger);
    let attention = attention_traced(&norm1.out, layer, ledger, true)?;
    let mid = x.add(&attention.out)?;
    let norm2 = layer_norm_rows(&mid, &layer.norm2_gain, &layer.norm2_bias, ledger);
    let ffn_pre = matmul(&norm2.out, &layer.w1, ledger, Category::FfnExpand, FWD)?;
    let ffn_act = activate(activation, &ffn_pre);
    let ffn_out = matmul(&ffn_act, &layer.w2, ledger, Category::FfnContract, FWD)?;
    let output = mid.add(&ffn_out)?;
    Ok(LayerTrace {
        input: x.clone(),
        norm1,
        attention,
        mid,
        norm2,
        ffn_pre,
        ffn_act,
        output,
    })
}

/// Pre-norm block: `x + attn(norm1(x))`, then `+ ffn(norm2(·))`.
pub fn transformer_layer(
    x: &Matrix,
    layer: &LayerParams,
    activation: Activation,
    ledger: &mut FlopLedger,
) -> Result<Matrix> {
    Ok(layer_traced(x, layer, activation, ledger)?.output)
}

/// All intermediates of a full forward pass, retained for backprop and
/// for populating a KV cache.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub tokens: Vec<usize>,
    pub layers: Vec<LayerTrace>,
    pub hidden: Matrix,
    pub logits: Matrix,
}

impl ForwardTrace {
    /// Attention probabilities of one head; rows are query positions.
    pub fn attention_probs(&self, layer: usize, head: usize) -> &Matrix {
        &self.layers[layer].attention.probs[head]
    }
}

pub fn forward_traced(
    tokens: &[usize],
    params: &ParameterSet,
    ledger: &mut FlopLedger,
) -> Result<ForwardTrace> {
    let mut x = embed(tokens, params, ledger)?;
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let trace = layer_traced(&x, layer, params.cfg.activation, ledger)?;
        x = trace.output.clone();
        layers.push(trace);
    }
    let logits = matmul(
        &x,
        &params.unembedding,
        ledger,
        Category::LogitProjection,
        FWD,
    )?;
    Ok(ForwardTrace {
        tokens: tokens.to_vec(),
        layers,
        hidden: x,
        logits,
    })
}

/// Logits for every position, `m × V`.
pub fn forward(tokens: &[usize], params: &ParameterSet, ledger: &mut FlopLedger) -> Result<Matrix> {
    Ok(forward_traced(tokens, params, ledger)?.logits)
}
