use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backward::{backward_into, loss_and_logit_grad, sgd_step, GradientSet};
use super::corpus::{CharVocab, DEMO_CORPUS};
use crate::error::{Error, Result};
use crate::ledger::FlopLedger;
use crate::model::{forward_traced, ModelConfig, ParameterSet};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Text file to train on; `None` uses the bundled demo corpus.
    pub corpus: Option<PathBuf>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            steps: 200,
            batch_size: 8,
            seed: 0,
            corpus: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Training(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.steps == 0 {
            return Err(Error::Training("steps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Training("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Mean batch loss before each update.
    pub losses: Vec<f64>,
    pub params: ParameterSet,
    pub vocab: CharVocab,
    pub ledger: FlopLedger,
}

impl TrainOutcome {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least one step")
    }
}

/// Trains on `tcfg.corpus` (or the bundled text). `cfg.vocab` caps the
/// character vocabulary; the trained model's vocabulary is the one actually
/// built from the text.
pub fn train_demo(cfg: &ModelConfig, tcfg: &TrainingConfig) -> Result<TrainOutcome> {
    let text = match &tcfg.corpus {
        Some(path) => std::fs::read(path)?,
        None => DEMO_CORPUS.as_bytes().to_vec(),
    };
    train_on_text(cfg, tcfg, &text)
}

pub fn train_on_text(
    cfg: &ModelConfig,
    tcfg: &TrainingConfig,
    text: &[u8],
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    cfg.validate()?;
    let vocab = CharVocab::from_text(text, cfg.vocab)?;
    let corpus = vocab.encode(text)?;
    let model_cfg = ModelConfig {
        vocab: vocab.len(),
        ..*cfg
    };
    if model_cfg.context < 2 {
        return Err(Error::Training(
            "context must hold at least 2 tokens".into(),
        ));
    }

    let mut params = ParameterSet::init(&model_cfg, tcfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed ^ 0x5eed_da7a);
    let mut ledger = FlopLedger::new();
    let mut losses = Vec::with_capacity(tcfg.steps);
    let window = model_cfg.context;
    let weight = 1.0 / tcfg.batch_size as f64;

    for _ in 0..tcfg.steps {
        let mut grads = GradientSet::zeros_like(&params);
        let mut batch_loss = 0.0;
        for _ in 0..tcfg.batch_size {
            let start = rng.gen_range(0..corpus.len());
            let tokens: Vec<usize> = (0..window)
                .map(|i| corpus[(start + i) % corpus.len()])
                .collect();
            let trace = forward_traced(&tokens, &params, &mut ledger)?;
            let (loss, mut dlogits) = loss_and_logit_grad(&trace.logits, &tokens)?;
            dlogits.scale(weight);
            backward_into(&trace, &dlogits, &params, &mut grads, &mut ledger)?;
            batch_loss += loss * weight;
        }
        losses.push(batch_loss);
        sgd_step(&mut params, &grads, tcfg.learning_rate)?;
    }

    Ok(TrainOutcome {
        losses,
        params,
        vocab,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig::new(16, 64, 16, 2, 1).unwrap()
    }

    #[test]
    fn identical_seed_identical_history() {
        let tcfg = TrainingConfig {
            steps: 5,
            batch_size: 2,
            ..TrainingConfig::default()
        };
        let a = train_demo(&tiny(), &tcfg).unwrap();
        let b = train_demo(&tiny(), &tcfg).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn initial_loss_near_log_vocab() {
        let tcfg = TrainingConfig {
            steps: 1,
            ..TrainingConfig::default()
        };
        let out = train_demo(&tiny(), &tcfg).unwrap();
        let ln_v = (out.vocab.len() as f64).ln();
        assert!(
            (out.initial_loss() - ln_v).abs() <= 0.1 * ln_v,
            "{} vs {ln_v}",
            out.initial_loss()
        );
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = TrainingConfig {
            learning_rate: 0.0,
            ..TrainingConfig::default()
        };
        assert!(train_demo(&tiny(), &bad).is_err());
        let bad = TrainingConfig {
            steps: 0,
            ..TrainingConfig::default()
        };
        assert!(train_demo(&tiny(), &bad).is_err());
        assert!(matches!(
            train_on_text(&tiny(), &TrainingConfig::default(), b""),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn missing_corpus_file_is_io_error() {
        let tcfg = TrainingConfig {
            corpus: Some("/nonexistent/corpus.txt".into()),
            ..TrainingConfig::default()
        };
        assert!(matches!(train_demo(&tiny(), &tcfg), Err(Error::Io(_))));
    }
}
