use std::io::Write;

use flopscale::train::{train_demo, TrainingConfig};
use flopscale::Checkpoint;

use super::demo_model;
use crate::error::{exit, CliError, CliResult};
use crate::TrainArgs;

/// Prints `step<TAB>loss` per step, then `#`-prefixed summary lines.
pub fn run(args: &TrainArgs, out: &mut dyn Write) -> CliResult<u8> {
    let cfg = args.model.resolve(demo_model())?;
    if let Some(path) = &args.corpus {
        if !path.is_file() {
            return Err(CliError::usage(format!(
                "corpus {} not found",
                path.display()
            )));
        }
    }
    let tcfg = TrainingConfig {
        learning_rate: args.lr,
        steps: args.steps,
        batch_size: args.batch,
        seed: args.seed,
        corpus: args.corpus.clone(),
    };
    let outcome = train_demo(&cfg, &tcfg)?;

    for (step, loss) in outcome.losses.iter().enumerate() {
        writeln!(out, "{step}\t{loss:.6}")?;
    }
    let vocab = outcome.vocab.len();
    let (initial, last) = (outcome.initial_loss(), outcome.final_loss());
    writeln!(out, "# vocab {vocab}, ln V {:.6}", (vocab as f64).ln())?;
    writeln!(out, "# initial loss {initial:.6}")?;
    writeln!(out, "# final loss {last:.6}")?;
    writeln!(out, "# final/initial {:.4}", last / initial)?;
    writeln!(out, "# training flops {}", outcome.ledger.total())?;

    if let Some(path) = &args.save {
        Checkpoint {
            params: outcome.params,
            seed: args.seed,
            vocab: Some(outcome.vocab),
        }
        .save(path)?;
        writeln!(out, "# saved {}", path.display())?;
    }
    Ok(exit::SUCCESS)
}
