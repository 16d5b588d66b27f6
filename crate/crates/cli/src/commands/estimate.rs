use std::io::Write;

use flopscale::cost::{moe_scenario_report, ReportOptions};
use flopscale::{CostReport, HardwareProfile, MoEScenario, Preset};

use crate::config_file::{load_hardware, load_model_config};
use crate::error::{exit, CliError, CliResult};
use crate::render::{write_records, EstimateRecord};
use crate::{EstimateArgs, HardwareArgs, Scenario};

/// Defaults, then the profile file, then individual flags.
pub fn resolve_hardware(args: &HardwareArgs) -> CliResult<HardwareProfile> {
    let mut hw = match &args.hardware {
        Some(path) => load_hardware(path, HardwareProfile::default())?,
        None => HardwareProfile::default(),
    };
    if let Some(v) = args.gpu_flops {
        hw.flops_per_second = v;
    }
    if let Some(v) = args.gpu_cost {
        hw.cost_per_year = v;
    }
    if let Some(v) = args.seconds_per_year {
        hw.seconds_per_year = v;
    }
    hw.validate()?;
    Ok(hw)
}

pub fn records(args: &EstimateArgs) -> CliResult<Vec<EstimateRecord>> {
    let hw = resolve_hardware(&args.hardware)?;
    if args.bytes_per_element == 0 {
        return Err(CliError::usage("--bytes-per-element must be at least 1"));
    }
    let bytes = u128::from(args.bytes_per_element);
    let options = ReportOptions {
        training_vocab_terms: args.vocab_terms,
    };
    let dense = |name: &str, cfg| {
        let report = CostReport::for_config(&cfg, &hw, options);
        EstimateRecord::dense(name, &cfg, &hw, &report, bytes)
    };

    let source = &args.source;
    if let Some(id) = &source.preset {
        let presets = if id.eq_ignore_ascii_case("all") {
            Preset::ALL.to_vec()
        } else {
            vec![id.parse::<Preset>().map_err(|_| {
                CliError::usage(format!(
                    "unknown preset {id:?} (expected A, B, C, D-low, D-high or all)"
                ))
            })?]
        };
        return Ok(presets
            .into_iter()
            .map(|p| dense(p.id(), p.config()))
            .collect());
    }
    if let Some(path) = &source.config {
        let cfg = load_model_config(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        return Ok(vec![dense(&name, cfg)]);
    }
    match source.scenario {
        Some(Scenario::Deepseek) => {
            let scenario = MoEScenario::deepseek_v3();
            let moe = moe_scenario_report(&scenario, &hw)?;
            Ok(vec![EstimateRecord::moe(
                "deepseek-v3",
                &scenario.active_inference,
                &hw,
                &moe,
                bytes,
            )])
        }
        None => Err(CliError::usage(
            "one of --preset, --config or --scenario is required",
        )),
    }
}

pub fn run(args: &EstimateArgs, out: &mut dyn Write) -> CliResult<u8> {
    let records = records(args)?;
    write_records(&records, args.format, out)?;
    Ok(exit::SUCCESS)
}
