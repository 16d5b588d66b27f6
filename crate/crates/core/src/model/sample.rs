use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Draws a token from `softmax(logits / temperature)`. A temperature of
/// exactly zero selects the argmax.
pub fn sample_next<R: Rng + ?Sized>(
    logits: &[f64],
    temperature: f64,
    rng: &mut R,
) -> Result<usize> {
    if logits.is_empty() {
        return Err(Error::Sequence {
            len: 0,
            reason: "no logits to sample",
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    if !temperature.is_finite() || temperature < 0.0 {
        return Err(Error::Config(format!(
            "temperature must be >= 0, got {temperature}"
        )));
    }
    if temperature == 0.0 {
        return Ok(argmax(logits));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits
        .iter()
        .map(|v| ((v - max) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return Ok(i);
        }
        u -= w;
    }
    // roundoff left u just past the last bucket
    Ok(weights.iter().rposition(|&w| w > 0.0).unwrap_or(0))
}

/// One-shot [`sample_next`] with a fresh generator.
pub fn sample_next_seeded(logits: &[f64], temperature: f64, seed: u64) -> Result<usize> {
    sample_next(logits, temperature, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_picks_argmax() {
        assert_eq!(sample_next_seeded(&[10.0, 0.0, 0.0], 0.0, 1).unwrap(), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn same_seed_same_token() {
        let logits = [0.3, -0.2, 1.1, 0.0, 0.7];
        for seed in 0..20 {
            assert_eq!(
                sample_next_seeded(&logits, 1.0, seed).unwrap(),
                sample_next_seeded(&logits, 1.0, seed).unwrap()
            );
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(sample_next_seeded(&[0.0, f64::NAN], 1.0, 0).is_err());
        assert!(sample_next_seeded(&[0.0, f64::INFINITY], 1.0, 0).is_err());
        assert!(sample_next_seeded(&[0.0, 1.0], -1.0, 0).is_err());
        assert!(sample_next_seeded(&[], 1.0, 0).is_err());
    }

    #[test]
    fn uniform_logits_sample_uniformly() {
        let v = 5usize;
        let draws = 10_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = vec![0usize; v];
        for _ in 0..draws {
            counts[sample_next(&[0.25; 5], 1.0, &mut rng).unwrap()] += 1;
        }
        let p = 1.0 / v as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!(
                (c as f64 - draws as f64 * p).abs() <= 5.0 * sigma,
                "count {c}"
            );
        }
    }
}
