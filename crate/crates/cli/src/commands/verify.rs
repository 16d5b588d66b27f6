use std::io::Write;

use flopscale::verify::{verify, VerifyOptions, VerifyReport, GRAD_TOLERANCE, KV_TOLERANCE};
use serde::Serialize;

use super::verify_model;
use crate::error::{exit, CliError, CliResult};
use crate::{Format, VerifyArgs};

#[derive(Debug, Serialize)]
struct Checks {
    forward_exact: bool,
    decode_exact: bool,
    kv_equivalent: bool,
    backward_ratio_exact: bool,
    gradients_ok: bool,
}

#[derive(Debug, Serialize)]
struct Run<'a> {
    report: &'a VerifyReport,
    checks: Checks,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    runs: Vec<Run<'a>>,
    /// Forward and backward totals agree across every head count tried.
    heads_consistent: bool,
    passed: bool,
}

fn status(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn write_report(r: &VerifyReport, out: &mut dyn Write) -> std::io::Result<()> {
    let c = &r.config;
    writeln!(
        out,
        "config: n={} vocab={} d_emb={} heads={} layers={} d_ff={}",
        c.context, c.vocab, c.d_emb, c.heads, c.layers, c.d_ff
    )?;
    writeln!(
        out,
        "{:<16} {:>12} {:>12}  status",
        "category", "measured", "predicted"
    )?;
    for cmp in &r.forward {
        let status = if cmp.exact() { "exact" } else { "MISMATCH" };
        writeln!(
            out,
            "{:<16} {:>12} {:>12}  {status}",
            cmp.category.name(),
            cmp.measured,
            cmp.predicted
        )?;
    }
    let total_status = if r.forward_measured == r.forward_predicted {
        "exact"
    } else {
        "MISMATCH"
    };
    writeln!(
        out,
        "{:<16} {:>12} {:>12}  {total_status}",
        "total", r.forward_measured, r.forward_predicted
    )?;
    if r.decode_exact() {
        writeln!(out, "decode: {} steps, every step exact", r.decode_steps)?;
    } else {
        writeln!(
            out,
            "decode: MISMATCH at cache lengths {:?}",
            r.decode_mismatches
        )?;
    }
    writeln!(
        out,
        "kv cache: max relative logit difference {:.2e} (tolerance {KV_TOLERANCE:e}) {}",
        r.decode_max_rel_diff,
        status(r.kv_equivalent())
    )?;
    writeln!(
        out,
        "backward: {} matmul flops vs {} forward ({}x) {}",
        r.backward_matmul,
        r.forward_matmul,
        r.backward_matmul as f64 / r.forward_matmul.max(1) as f64,
        status(r.backward_ratio_exact())
    )?;
    writeln!(
        out,
        "gradients: {} samples, max relative error {:.2e} (tolerance {GRAD_TOLERANCE:e}) {}",
        r.grad_samples,
        r.grad_max_rel_error,
        status(r.gradients_ok())
    )?;
    writeln!(out, "result: {}", if r.passed() { "PASS" } else { "FAIL" })
}

pub fn run(args: &VerifyArgs, out: &mut dyn Write) -> CliResult<u8> {
    if args.format == Format::Csv {
        return Err(CliError::usage("verify supports table and json output"));
    }
    let configs = args.model.resolve_all(verify_model())?;
    let options = VerifyOptions {
        seed: args.seed,
        grad_samples: args.grad_samples,
        corrupt_expected: args.corrupt_expected,
    };
    let reports = configs
        .iter()
        .map(|cfg| verify(cfg, &options))
        .collect::<Result<Vec<_>, _>>()?;

    let totals = |r: &VerifyReport| (r.forward_measured, r.forward_matmul, r.backward_matmul);
    let heads_consistent = reports.windows(2).all(|w| totals(&w[0]) == totals(&w[1]));
    let passed = heads_consistent && reports.iter().all(VerifyReport::passed);

    match args.format {
        Format::Json => {
            let summary = Summary {
                runs: reports
                    .iter()
                    .map(|r| Run {
                        report: r,
                        checks: Checks {
                            forward_exact: r.forward_exact(),
                            decode_exact: r.decode_exact(),
                            kv_equivalent: r.kv_equivalent(),
                            backward_ratio_exact: r.backward_ratio_exact(),
                            gradients_ok: r.gradients_ok(),
                        },
                        passed: r.passed(),
                    })
                    .collect(),
                heads_consistent,
                passed,
            };
            serde_json::to_writer_pretty(&mut *out, &summary)
                .map_err(|e| CliError::usage(format!("cannot write JSON: {e}")))?;
            writeln!(out)?;
        }
        _ => {
            for (i, r) in reports.iter().enumerate() {
                if i > 0 {
                    writeln!(out)?;
                }
                write_report(r, out)?;
            }
            if reports.len() > 1 {
                writeln!(out)?;
                let heads: Vec<String> =
                    reports.iter().map(|r| r.config.heads.to_string()).collect();
                writeln!(
                    out,
                    "totals across heads {}: {}",
                    heads.join(","),
                    if heads_consistent {
                        "identical"
                    } else {
                        "DIFFER"
                    }
                )?;
            }
        }
    }
    Ok(if passed {
        exit::SUCCESS
    } else {
        exit::VERIFY_FAILED
    })
}
