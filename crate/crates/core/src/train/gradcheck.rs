//! Central-difference verification of the analytic gradients.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::backward::{loss_all_positions, loss_and_gradients};
use crate::error::Result;
use crate::ledger::FlopLedger;
use crate::model::{forward, ModelConfig, ParamId, ParamRole, ParameterSet};

/// Default number of parameters probed by [`grad_check`].
pub const DEFAULT_SAMPLES: usize = 256;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckEntry {
    pub param: ParamId,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn roles_covered(&self) -> BTreeSet<ParamRole> {
        self.entries.iter().map(|e| e.param.role).collect()
    }
}

/// `|a − n| / max(|a|, |n|)`, zero when both vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Compares `analytic[i]` with `(f(x + εeᵢ) − f(x − εeᵢ)) / 2ε` for each
/// requested index. Returns `(numeric, rel_error)` pairs.
pub fn central_difference(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    epsilon: f64,
    indices: &[usize],
) -> Vec<(f64, f64)> {
    let mut probe = x.to_vec();
    indices
        .iter()
        .map(|&i| {
            let orig = probe[i];
            probe[i] = orig + epsilon;
            let plus = f(&probe);
            probe[i] = orig - epsilon;
            let minus = f(&probe);
            probe[i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            (numeric, relative_error(analytic[i], numeric))
        })
        .collect()
}

/// Deterministic token sequence filling the context window.
pub fn probe_tokens(cfg: &ModelConfig, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    (0..cfg.context.max(2))
        .map(|_| rng.gen_range(0..cfg.vocab))
        .collect()
}

/// Gradient check of a freshly initialized model on a seeded sequence.
pub fn grad_check(cfg: &ModelConfig, seed: u64, epsilon: f64) -> Result<GradCheckReport> {
    let params = ParameterSet::init(cfg, seed);
    let tokens = probe_tokens(cfg, seed);
    grad_check_params(&params, &tokens, epsilon, DEFAULT_SAMPLES, seed)
}

/// Probes about `samples` parameters spread evenly over every tensor, so each
/// role (E, W_Q, W_K, W_V, O, W1, W2, norms, U) is covered.
pub fn grad_check_params(
    params: &ParameterSet,
    tokens: &[usize],
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, grads) = loss_and_gradients(tokens, params, &mut FlopLedger::new())?;
    let tensor_count = params.tensors().len();
    let per_tensor = samples.div_ceil(tensor_count).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c0d_e11a);
    let mut entries = Vec::new();
    let mut probe = params.clone();

    for (ti, (pid, g)) in grads.tensors().into_iter().enumerate() {
        let len = g.len();
        let picks = sample(&mut rng, len, per_tensor.min(len)).into_vec();
        let base = params.tensors()[ti].1.data().to_vec();
        let loss_at = |values: &[f64], probe: &mut ParameterSet| -> f64 {
            probe.tensors_mut()[ti].1.data_mut().copy_from_slice(values);
            let logits = forward(tokens, probe, &mut FlopLedger::new()).expect("probe forward");
            loss_all_positions(&logits, tokens).expect("probe loss")
        };
        let results =
            central_difference(|v| loss_at(v, &mut probe), &base, g.data(), epsilon, &picks);
        probe.tensors_mut()[ti].1.data_mut().copy_from_slice(&base);
        for (&index, (numeric, rel_error)) in picks.iter().zip(results) {
            entries.push(GradCheckEntry {
                param: pid,
                index,
                analytic: g.data()[index],
                numeric,
                rel_error,
            });
        }
    }
    let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        epsilon,
        entries,
        max_rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{Category, Direction};
    use crate::model::Activation;
    use crate::tensor::{matmul, Matrix};

    #[test]
    fn linear_map_is_exact_to_roundoff() {
        // f(W) = Σ (A·W·B) ⊙ C is linear in W; ∇f = Aᵀ·C·Bᵀ.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rand = |r, c| Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
        let (a, w, b, c) = (rand(3, 4), rand(4, 5), rand(5, 2), rand(3, 2));
        let mut l = FlopLedger::new();
        let f = |wv: &[f64]| {
            let w = Matrix::new(4, 5, wv.to_vec()).unwrap();
            let mut l = FlopLedger::new();
            let y = matmul(
                &matmul(&a, &w, &mut l, Category::Other, Direction::Forward).unwrap(),
                &b,
                &mut l,
                Category::Other,
                Direction::Forward,
            )
            .unwrap();
            y.data()
                .iter()
                .zip(c.data())
                .map(|(p, q)| p * q)
                .sum::<f64>()
        };
        let cb = matmul(
            &c,
            &b.transpose(),
            &mut l,
            Category::Other,
            Direction::Backward,
        )
        .unwrap();
        let grad = matmul(
            &a.transpose(),
            &cb,
            &mut l,
            Category::Other,
            Direction::Backward,
        )
        .unwrap();
        let all: Vec<usize> = (0..20).collect();
        for (_, rel) in central_difference(f, w.data(), grad.data(), 1e-5, &all) {
            assert!(rel <= 1e-9, "{rel}");
        }
    }

    #[test]
    fn relative_error_conventions() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 0.5), 0.5);
    }

    #[test]
    fn report_covers_every_role() {
        let cfg = ModelConfig::new(4, 7, 4, 2, 1).unwrap();
        let report = grad_check(&cfg, 3, 1e-5).unwrap();
        assert_eq!(report.roles_covered().len(), ParamRole::ALL.len());
    }

    #[test]
    fn identity_activation_model_checks() {
        let cfg = ModelConfig::new(5, 7, 4, 2, 1)
            .unwrap()
            .with_activation(Activation::Identity);
        let report = grad_check(&cfg, 4, 1e-5).unwrap();
        assert!(report.max_rel_error <= 1e-5, "{:?}", report.worst());
    }
}
