//! Autoregressive decoding with per-layer K/V caches.
//!
//! After a prefill only the newest token is projected; its query attends to
//! every cached key, so a step costs `12·d² + 2·t·d` per layer instead of a
//! full forward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ledger::{Category, Direction, FlopLedger};
use crate::model::{self, activate, embed_at, sample_next, ModelConfig, ParameterSet};
use crate::tensor::{layer_norm_rows, matmul, softmax_rows, Matrix};

const FWD: Direction = Direction::Forward;

/// Appendable row storage that doubles its allocation, never beyond
/// `max_rows`.
#[derive(Debug, Clone, PartialEq)]
struct RowBuffer {
    cols: usize,
    rows: usize,
    max_rows: usize,
    data: Vec<f64>,
}

impl RowBuffer {
    fn new(cols: usize, max_rows: usize) -> Self {
        Self {
            cols,
            rows: 0,
            max_rows,
            data: Vec::new(),
        }
    }

    fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.cols);
        debug_assert!(self.rows < self.max_rows);
        let needed = (self.rows + 1) * self.cols;
        if needed > self.data.capacity() {
            let target_rows = if self.rows == 0 {
                1
            } else {
                (self.rows * 2).min(self.max_rows)
            };
            self.data
                .reserve_exact(target_rows * self.cols - self.data.len());
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    fn allocated_rows(&self) -> usize {
        self.data.capacity() / self.cols
    }

    /// Columns `start..start + width` of every stored row.
    fn column_block(&self, start: usize, width: usize) -> Matrix {
        Matrix::from_fn(self.rows, width, |i, j| {
            self.data[i * self.cols + start + j]
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerCache {
    keys: RowBuffer,
    values: RowBuffer,
}

/// Post-projection keys and values of every cached position, all layers.
#[derive(Debug, Clone, PartialEq)]
pub struct KVCache {
    cfg: ModelConfig,
    layers: Vec<LayerCache>,
    len: usize,
}

impl KVCache {
    pub fn new(cfg: &ModelConfig) -> Self {
        let layers = (0..cfg.layers)
            .map(|_| LayerCache {
                keys: RowBuffer::new(cfg.d_emb, cfg.context),
                values: RowBuffer::new(cfg.d_emb, cfg.context),
            })
            .collect();
        Self {
            cfg: *cfg,
            layers,
            len: 0,
        }
    }

    /// Cached token count `t`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.cfg.context
    }

    /// Stored scalars, `2·L·t·d_emb`.
    pub fn scalar_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.keys.data.len() + l.values.data.len())
            .sum()
    }

    /// Rows currently allocated per buffer (for inspecting growth).
    pub fn allocated_rows(&self) -> usize {
        self.layers.first().map_or(0, |l| l.keys.allocated_rows())
    }

    /// `t × d_emb` keys of one layer, heads side by side.
    pub fn keys(&self, layer: usize) -> Option<Matrix> {
        let buf = &self.layers[layer].keys;
        (buf.rows > 0).then(|| buf.column_block(0, buf.cols))
    }

    pub fn values(&self, layer: usize) -> Option<Matrix> {
        let buf = &self.layers[layer].values;
        (buf.rows > 0).then(|| buf.column_block(0, buf.cols))
    }
}

/// Runs the full forward pass over `tokens`, keeping every layer's K/V.
/// Returns the cache and the last row of logits.
pub fn prefill(
    tokens: &[usize],
    params: &ParameterSet,
    ledger: &mut FlopLedger,
) -> Result<(KVCache, Vec<f64>)> {
    let trace = model::forward_traced(tokens, params, ledger)?;
    let mut cache = KVCache::new(&params.cfg);
    let d_head = params.cfg.d_head();
    for (layer_trace, layer_cache) in trace.layers.iter().zip(cache.layers.iter_mut()) {
        let att = &layer_trace.attention;
        let mut row = vec![0.0; params.cfg.d_emb];
        for i in 0..tokens.len() {
            for (h, k) in att.k.iter().enumerate() {
                row[h * d_head..(h + 1) * d_head].copy_from_slice(k.row(i));
            }
            layer_cache.keys.push(&row);
            for (h, v) in att.v.iter().enumerate() {
                row[h * d_head..(h + 1) * d_head].copy_from_slice(v.row(i));
            }
            layer_cache.values.push(&row);
        }
    }
    cache.len = tokens.len();
    let last = trace.logits.row(tokens.len() - 1).to_vec();
    Ok((cache, last))
}

/// Appends one token and returns its logits row.
pub fn decode_step(
    cache: &mut KVCache,
    token: usize,
    params: &ParameterSet,
    ledger: &mut FlopLedger,
) -> Result<Vec<f64>> {
    let cfg = &params.cfg;
    if cache.cfg != *cfg {
        return Err(Error::Config(
            "cache was built for a different model".into(),
        ));
    }
    if cache.len + 1 > cfg.context {
        return Err(Error::WindowFull {
            capacity: cfg.context,
        });
    }
    if token >= cfg.vocab {
        return Err(Error::Vocabulary {
            id: token,
            vocab: cfg.vocab,
        });
    }
    let d_head = cfg.d_head();
    let scale = 1.0 / (d_head as f64).sqrt();
    let mut x = embed_at(&[token], cache.len, params);

    for (layer, lc) in params.layers.iter().zip(cache.layers.iter_mut()) {
        let a = layer_norm_rows(&x, &layer.norm1_gain, &layer.norm1_bias, ledger).out;
        let mut queries = Vec::with_capacity(cfg.heads);
        let mut k_row = Matrix::zeros(1, cfg.d_emb);
        let mut v_row = Matrix::zeros(1, cfg.d_emb);
        for h in 0..cfg.heads {
            queries.push(matmul(
                &a,
                &layer.w_q[h],
                ledger,
                Category::QkvProjection,
                FWD,
            )?);
            k_row.set_columns(
                h * d_head,
                &matmul(&a, &layer.w_k[h], ledger, Category::QkvProjection, FWD)?,
            );
            v_row.set_columns(
                h * d_head,
                &matmul(&a, &layer.w_v[h], ledger, Category::QkvProjection, FWD)?,
            );
        }
        lc.keys.push(k_row.row(0));
        lc.values.push(v_row.row(0));

        let mut concat = Matrix::zeros(1, cfg.d_emb);
        for (h, q) in queries.iter().enumerate() {
            let keys = lc.keys.column_block(h * d_head, d_head);
            let values = lc.values.column_block(h * d_head, d_head);
            let mut scores = matmul(q, &keys.transpose(), ledger, Category::AttentionScores, FWD)?;
            scores.scale(scale);
            let probs = softmax_rows(&scores)?;
            concat.set_columns(
                h * d_head,
                &matmul(&probs, &values, ledger, Category::AttentionValues, FWD)?,
            );
        }
        let attn = matmul(&concat, &layer.w_o, ledger, Category::OutputProjection, FWD)?;
        let mid = x.add(&attn)?;
        let b = layer_norm_rows(&mid, &layer.norm2_gain, &layer.norm2_bias, ledger).out;
        let pre = matmul(&b, &layer.w1, ledger, Category::FfnExpand, FWD)?;
        let ffn = matmul(
            &activate(cfg.activation, &pre),
            &layer.w2,
            ledger,
            Category::FfnContract,
            FWD,
        )?;
        x = mid.add(&ffn)?;
    }
    cache.len += 1;
    let logits = matmul(
        &x,
        &params.unembedding,
        ledger,
        Category::LogitProjection,
        FWD,
    )?;
    Ok(logits.into_data())
}

/// A prefilled prompt that can seed any number of continuations.
#[derive(Debug, Clone)]
pub struct Prefix {
    pub tokens: Vec<usize>,
    pub cache: KVCache,
    pub last_logits: Vec<f64>,
}

impl Prefix {
    pub fn new(tokens: &[usize], params: &ParameterSet, ledger: &mut FlopLedger) -> Result<Self> {
        let (cache, last_logits) = prefill(tokens, params, ledger)?;
        Ok(Self {
            tokens: tokens.to_vec(),
            cache,
            last_logits,
        })
    }

    /// Continues from this prefix: feeds `suffix` incrementally, then samples
    /// `steps` tokens. The prefix itself is left untouched.
    pub fn generate(
        &self,
        suffix: &[usize],
        steps: usize,
        temperature: f64,
        seed: u64,
        params: &ParameterSet,
        ledger: &mut FlopLedger,
    ) -> Result<Vec<usize>> {
        let total = self.tokens.len() + suffix.len() + steps;
        if total > params.cfg.context {
            return Err(Error::WindowFull {
                capacity: params.cfg.context,
            });
        }
        let mut cache = self.cache.clone();
        let mut logits = self.last_logits.clone();
        for &tok in suffix {
            logits = decode_step(&mut cache, tok, params, ledger)?;
        }
        let mut out: Vec<usize> = self.tokens.iter().chain(suffix).copied().collect();
        sample_loop(
            &mut out,
            &mut cache,
            logits,
            steps,
            temperature,
            seed,
            params,
            ledger,
        )?;
        Ok(out)
    }
}

#[allow(clippy::too_many_arguments)]
fn sample_loop(
    out: &mut Vec<usize>,
    cache: &mut KVCache,
    mut logits: Vec<f64>,
    steps: usize,
    temperature: f64,
    seed: u64,
    params: &ParameterSet,
    ledger: &mut FlopLedger,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for step in 0..steps {
        let next = sample_next(&logits, temperature, &mut rng)?;
        out.push(next);
        if step + 1 < steps {
            logits = decode_step(cache, next, params, ledger)?;
        }
    }
    Ok(())
}

/// Prompt followed by `steps` sampled tokens, decoded through the cache.
/// `temperature == 0` is greedy.
pub fn generate(
    prompt: &[usize],
    steps: usize,
    temperature: f64,
    seed: u64,
    params: &ParameterSet,
) -> Result<Vec<usize>> {
    generate_with_ledger(
        prompt,
        steps,
        temperature,
        seed,
        params,
        &mut FlopLedger::new(),
    )
}

pub fn generate_with_ledger(
    prompt: &[usize],
    steps: usize,
    temperature: f64,
    seed: u64,
    params: &ParameterSet,
    ledger: &mut FlopLedger,
) -> Result<Vec<usize>> {
    check_budget(prompt, steps, &params.cfg)?;
    if steps == 0 {
        model::check_tokens(&params.cfg, prompt)?;
        return Ok(prompt.to_vec());
    }
    let (mut cache, logits) = prefill(prompt, params, ledger)?;
    let mut out = prompt.to_vec();
    sample_loop(
        &mut out,
        &mut cache,
        logits,
        steps,
        temperature,
        seed,
        params,
        ledger,
    )?;
    Ok(out)
}

/// Reference decoder without a cache: every step reruns the full forward
/// pass over the whole sequence and reads the last logits row.
pub fn generate_uncached(
    prompt: &[usize],
    steps: usize,
    temperature: f64,
    seed: u64,
    params: &ParameterSet,
) -> Result<Vec<usize>> {
    check_budget(prompt, steps, &params.cfg)?;
    model::check_tokens(&params.cfg, prompt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = prompt.to_vec();
    for _ in 0..steps {
        let logits = model::forward(&out, params, &mut FlopLedger::new())?;
        out.push(sample_next(
            logits.row(out.len() - 1),
            temperature,
            &mut rng,
        )?);
    }
    Ok(out)
}

fn check_budget(prompt: &[usize], steps: usize, cfg: &ModelConfig) -> Result<()> {
    if prompt.len() + steps > cfg.context {
        return Err(Error::WindowFull {
            capacity: cfg.context,
        });
    }
    Ok(())
}
