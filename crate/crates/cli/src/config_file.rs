//! `key=value` files for model dimensions and hardware profiles.
//!
//! Blank lines and `#` comments are ignored. Unknown or repeated keys are
//! errors that name the offending line.
//!
//! ```text
//! # model file
//! n=8
//! vocab=11
//! d_emb=8
//! heads=2
//! layers=2
//! d_ff=32        # optional, defaults to 4 * d_emb
//! ```
//!
//! Hardware files use the keys `flops_per_second`, `cost_per_year` and
//! `seconds_per_year`; missing keys keep their defaults.

use std::collections::BTreeMap;
use std::path::Path;

use flopscale::{HardwareProfile, ModelConfig};

use crate::error::{CliError, CliResult};

pub const MODEL_KEYS: [&str; 6] = ["n", "vocab", "d_emb", "heads", "layers", "d_ff"];
pub const HARDWARE_KEYS: [&str; 3] = ["flops_per_second", "cost_per_year", "seconds_per_year"];

/// Parsed entries with the line each came from.
fn parse_pairs<'a>(
    text: &'a str,
    origin: &str,
    allowed: &[&str],
) -> CliResult<BTreeMap<&'a str, (usize, &'a str)>> {
    let mut pairs = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::usage(format!(
                "{origin}:{line_no}: expected key=value, got {line:?}"
            )));
        };
        let (key, value) = (key.trim(), value.trim());
        if !allowed.contains(&key) {
            return Err(CliError::usage(format!(
                "{origin}:{line_no}: unknown key {key:?} (expected one of {})",
                allowed.join(", ")
            )));
        }
        if let Some((first, _)) = pairs.insert(key, (line_no, value)) {
            return Err(CliError::usage(format!(
                "{origin}:{line_no}: key {key:?} already set on line {first}"
            )));
        }
    }
    Ok(pairs)
}

fn parse_value<T: std::str::FromStr>(
    origin: &str,
    line: usize,
    key: &str,
    value: &str,
) -> CliResult<T> {
    value.parse().map_err(|_| {
        CliError::usage(format!(
            "{origin}:{line}: invalid value {value:?} for {key}"
        ))
    })
}

pub fn parse_model_config(text: &str, origin: &str) -> CliResult<ModelConfig> {
    let pairs = parse_pairs(text, origin, &MODEL_KEYS)?;
    let mut dims = BTreeMap::new();
    for (key, (line, value)) in &pairs {
        dims.insert(*key, parse_value::<usize>(origin, *line, key, value)?);
    }
    let required = |key: &str| {
        dims.get(key)
            .copied()
            .ok_or_else(|| CliError::usage(format!("{origin}: missing required key {key:?}")))
    };
    let cfg = ModelConfig::new(
        required("n")?,
        required("vocab")?,
        required("d_emb")?,
        required("heads")?,
        required("layers")?,
    )
    .map_err(|e| CliError::usage(format!("{origin}: {e}")))?;
    match dims.get("d_ff") {
        Some(&d_ff) => cfg
            .with_d_ff(d_ff)
            .map_err(|e| CliError::usage(format!("{origin}: {e}"))),
        None => Ok(cfg),
    }
}

pub fn parse_hardware(
    text: &str,
    origin: &str,
    base: HardwareProfile,
) -> CliResult<HardwareProfile> {
    let pairs = parse_pairs(text, origin, &HARDWARE_KEYS)?;
    let mut hw = base;
    for (key, (line, value)) in pairs {
        let v: f64 = parse_value(origin, line, key, value)?;
        match key {
            "flops_per_second" => hw.flops_per_second = v,
            "cost_per_year" => hw.cost_per_year = v,
            _ => hw.seconds_per_year = v,
        }
    }
    hw.validate()
        .map_err(|e| CliError::usage(format!("{origin}: {e}")))?;
    Ok(hw)
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

pub fn load_model_config(path: &Path) -> CliResult<ModelConfig> {
    parse_model_config(&read(path)?, &path.display().to_string())
}

pub fn load_hardware(path: &Path, base: HardwareProfile) -> CliResult<HardwareProfile> {
    parse_hardware(&read(path)?, &path.display().to_string(), base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_config() {
        let cfg = parse_model_config(
            "# toy\nn=4\nvocab=11\nd_emb = 8\nheads=2\nlayers=2 # two\n",
            "toy.cfg",
        )
        .unwrap();
        assert_eq!(cfg, ModelConfig::new(4, 11, 8, 2, 2).unwrap());
        assert_eq!(cfg.d_ff, 32);
    }

    #[test]
    fn explicit_d_ff() {
        let cfg =
            parse_model_config("n=4\nvocab=11\nd_emb=8\nheads=2\nlayers=2\nd_ff=10", "x").unwrap();
        assert_eq!(cfg.d_ff, 10);
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse_model_config("n=4\nvocab=11\nwidth=8\n", "toy.cfg").unwrap_err();
        assert!(err.to_string().starts_with("toy.cfg:3:"), "{err}");
        let err = parse_model_config("n=4\nn=5\n", "toy.cfg").unwrap_err();
        assert!(err.to_string().contains("toy.cfg:2:"), "{err}");
        let err = parse_model_config("n=4\nvocab\n", "toy.cfg").unwrap_err();
        assert!(err.to_string().contains("toy.cfg:2:"), "{err}");
        let err = parse_model_config("n=four\n", "toy.cfg").unwrap_err();
        assert!(err.to_string().contains("toy.cfg:1:"), "{err}");
    }

    #[test]
    fn missing_and_invalid_dims() {
        assert!(parse_model_config("n=4\nvocab=11\n", "x").is_err());
        assert!(parse_model_config("n=4\nvocab=11\nd_emb=9\nheads=2\nlayers=1\n", "x").is_err());
    }

    #[test]
    fn hardware_overrides_keep_defaults() {
        let hw = parse_hardware(
            "flops_per_second=600e12\n",
            "hw",
            HardwareProfile::default(),
        )
        .unwrap();
        assert_eq!(hw.flops_per_second, 600e12);
        assert_eq!(hw.cost_per_year, HardwareProfile::default().cost_per_year);
        assert!(parse_hardware("cost_per_year=-1\n", "hw", HardwareProfile::default()).is_err());
        assert!(parse_hardware("price=1\n", "hw", HardwareProfile::default()).is_err());
    }
}
