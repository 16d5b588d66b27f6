use std::io::Write;

use flopscale::train::{CharVocab, DEMO_CORPUS};
use flopscale::{generate, generate_uncached, Checkpoint, ModelConfig, ParameterSet};

use super::demo_model;
use crate::error::{exit, CliError, CliResult};
use crate::GenerateArgs;

fn load_model(args: &GenerateArgs) -> CliResult<(ParameterSet, CharVocab)> {
    if let Some(path) = &args.checkpoint {
        let ck = Checkpoint::load(path)?;
        let vocab = ck
            .vocab
            .ok_or_else(|| CliError::usage(format!("{} has no vocabulary", path.display())))?;
        return Ok((ck.params, vocab));
    }
    let cfg = args.model.resolve(demo_model())?;
    let vocab = CharVocab::from_text(DEMO_CORPUS.as_bytes(), cfg.vocab)?;
    let cfg = ModelConfig {
        vocab: vocab.len(),
        ..cfg
    };
    Ok((ParameterSet::init(&cfg, args.seed), vocab))
}

/// Prints the prompt followed by the generated characters.
pub fn run(args: &GenerateArgs, out: &mut dyn Write) -> CliResult<u8> {
    let (params, vocab) = load_model(args)?;
    let prompt = vocab.encode(args.prompt.as_bytes())?;
    if prompt.is_empty() {
        return Err(CliError::usage("prompt must not be empty"));
    }
    let window = params.cfg.context;
    if prompt.len() + args.steps > window {
        return Err(CliError::usage(format!(
            "prompt ({} tokens) plus {} steps exceeds the {window}-token context",
            prompt.len(),
            args.steps
        )));
    }
    let temperature = if args.greedy { 0.0 } else { args.temperature };
    let tokens = if args.reference {
        generate_uncached(&prompt, args.steps, temperature, args.seed, &params)?
    } else {
        generate(&prompt, args.steps, temperature, args.seed, &params)?
    };
    writeln!(out, "{}", vocab.decode(&tokens))?;
    Ok(exit::SUCCESS)
}
