//! Estimate records and their table, JSON and CSV renderings.
//!
//! JSON records always carry the keys of [`EstimateRecord`]; counts are
//! exact integers, money and time are floats. CSV uses the same fields
//! flattened, with `config_`, `hardware_` and `memory_bytes_` prefixes.

use std::io::Write;

use flopscale::cost::{incremental_price_per_mtok, MoeReport};
use flopscale::{CostReport, HardwareProfile, ModelConfig};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::Format;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConfigRecord {
    pub n: usize,
    pub vocab: usize,
    pub d_emb: usize,
    pub heads: usize,
    pub layers: usize,
    pub d_ff: usize,
}

impl From<&ModelConfig> for ConfigRecord {
    fn from(cfg: &ModelConfig) -> Self {
        Self {
            n: cfg.context,
            vocab: cfg.vocab,
            d_emb: cfg.d_emb,
            heads: cfg.heads,
            layers: cfg.layers,
            d_ff: cfg.d_ff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemoryRecord {
    pub parameters: u128,
    pub activations: u128,
    pub kv_cache: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub name: String,
    pub config: ConfigRecord,
    pub hardware: HardwareProfile,
    /// Total parameters; for a mixture of experts, the latent total.
    pub parameters: u128,
    /// Parameters touched per inference token.
    pub active_parameters: u128,
    pub activations_memory: u128,
    pub kv_cache_memory: u128,
    pub forward_flops: u128,
    pub incremental_flops: u128,
    pub chinchilla_tokens: u128,
    pub training_flops: u128,
    pub gpu_years: f64,
    pub dollars: f64,
    /// Dollars per million incremental tokens at a full window.
    pub price_per_mtok: f64,
    pub bytes_per_element: u128,
    pub memory_bytes: MemoryRecord,
}

impl EstimateRecord {
    pub fn dense(
        name: &str,
        cfg: &ModelConfig,
        hw: &HardwareProfile,
        report: &CostReport,
        bytes: u128,
    ) -> Self {
        Self::build(name, cfg, hw, report, report.parameters, bytes)
    }

    pub fn moe(
        name: &str,
        cfg: &ModelConfig,
        hw: &HardwareProfile,
        moe: &MoeReport,
        bytes: u128,
    ) -> Self {
        Self::build(
            name,
            cfg,
            hw,
            &moe.report,
            moe.active_inference_parameters,
            bytes,
        )
    }

    fn build(
        name: &str,
        cfg: &ModelConfig,
        hw: &HardwareProfile,
        r: &CostReport,
        active_parameters: u128,
        bytes: u128,
    ) -> Self {
        let mem = r.memory_bytes(bytes);
        Self {
            name: name.to_string(),
            config: cfg.into(),
            hardware: *hw,
            parameters: r.parameters,
            active_parameters,
            activations_memory: r.activations_memory,
            kv_cache_memory: r.kv_cache_memory,
            forward_flops: r.forward_flops,
            incremental_flops: r.incremental_flops,
            chinchilla_tokens: r.chinchilla_tokens,
            training_flops: r.training_flops,
            gpu_years: r.gpu_years,
            dollars: r.dollars,
            price_per_mtok: incremental_price_per_mtok(cfg, hw),
            bytes_per_element: bytes,
            memory_bytes: MemoryRecord {
                parameters: mem.parameters,
                activations: mem.activations,
                kv_cache: mem.kv_cache,
            },
        }
    }

    /// Flattened `(column, value)` pairs in CSV column order.
    pub fn flat_fields(&self) -> Vec<(&'static str, String)> {
        let c = &self.config;
        let h = &self.hardware;
        vec![
            ("name", self.name.clone()),
            ("config_n", c.n.to_string()),
            ("config_vocab", c.vocab.to_string()),
            ("config_d_emb", c.d_emb.to_string()),
            ("config_heads", c.heads.to_string()),
            ("config_layers", c.layers.to_string()),
            ("config_d_ff", c.d_ff.to_string()),
            ("hardware_flops_per_second", h.flops_per_second.to_string()),
            ("hardware_cost_per_year", h.cost_per_year.to_string()),
            ("hardware_seconds_per_year", h.seconds_per_year.to_string()),
            ("parameters", self.parameters.to_string()),
            ("active_parameters", self.active_parameters.to_string()),
            ("activations_memory", self.activations_memory.to_string()),
            ("kv_cache_memory", self.kv_cache_memory.to_string()),
            ("forward_flops", self.forward_flops.to_string()),
            ("incremental_flops", self.incremental_flops.to_string()),
            ("chinchilla_tokens", self.chinchilla_tokens.to_string()),
            ("training_flops", self.training_flops.to_string()),
            ("gpu_years", self.gpu_years.to_string()),
            ("dollars", self.dollars.to_string()),
            ("price_per_mtok", self.price_per_mtok.to_string()),
            ("bytes_per_element", self.bytes_per_element.to_string()),
            (
                "memory_bytes_parameters",
                self.memory_bytes.parameters.to_string(),
            ),
            (
                "memory_bytes_activations",
                self.memory_bytes.activations.to_string(),
            ),
            (
                "memory_bytes_kv_cache",
                self.memory_bytes.kv_cache.to_string(),
            ),
        ]
    }
}

/// Three significant digits in scientific notation, e.g. `2.70e21`.
pub fn sci(v: f64) -> String {
    format!("{v:.2e}")
}

fn table_rows(r: &EstimateRecord) -> Vec<(&'static str, String)> {
    let c = &r.config;
    vec![
        ("n", c.n.to_string()),
        ("vocab", c.vocab.to_string()),
        ("d_emb", c.d_emb.to_string()),
        ("heads", c.heads.to_string()),
        ("layers", c.layers.to_string()),
        ("d_ff", c.d_ff.to_string()),
        ("parameters", sci(r.parameters as f64)),
        ("active parameters", sci(r.active_parameters as f64)),
        ("activations", sci(r.activations_memory as f64)),
        ("kv cache", sci(r.kv_cache_memory as f64)),
        ("forward flops", sci(r.forward_flops as f64)),
        ("incremental flops", sci(r.incremental_flops as f64)),
        ("chinchilla tokens", sci(r.chinchilla_tokens as f64)),
        ("training flops", sci(r.training_flops as f64)),
        ("gpu-years", sci(r.gpu_years)),
        ("dollars", sci(r.dollars)),
        ("$ per M tokens", sci(r.price_per_mtok)),
        ("parameter bytes", sci(r.memory_bytes.parameters as f64)),
        ("activation bytes", sci(r.memory_bytes.activations as f64)),
        ("kv cache bytes", sci(r.memory_bytes.kv_cache as f64)),
    ]
}

/// One row per quantity, one column per record.
pub fn write_table(records: &[EstimateRecord], out: &mut dyn Write) -> std::io::Result<()> {
    let columns: Vec<Vec<(&str, String)>> = records.iter().map(table_rows).collect();
    let label_width = columns[0].iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let widths: Vec<usize> = records
        .iter()
        .zip(&columns)
        .map(|(r, col)| {
            col.iter()
                .map(|(_, v)| v.len())
                .chain([r.name.len()])
                .max()
                .unwrap_or(0)
        })
        .collect();

    write!(out, "{:label_width$}", "")?;
    for (r, w) in records.iter().zip(&widths) {
        write!(out, "  {:>w$}", r.name)?;
    }
    writeln!(out)?;
    for row in 0..columns[0].len() {
        write!(out, "{:label_width$}", columns[0][row].0)?;
        for (col, w) in columns.iter().zip(&widths) {
            write!(out, "  {:>w$}", col[row].1)?;
        }
        writeln!(out)?;
    }
    let hw = &records[0].hardware;
    writeln!(
        out,
        "hardware: {} flop/s, ${} per device-year, {} s/year",
        sci(hw.flops_per_second),
        hw.cost_per_year,
        hw.seconds_per_year
    )
}

/// A single record renders as an object, several as an array.
pub fn write_json(records: &[EstimateRecord], out: &mut dyn Write) -> CliResult<()> {
    let result = match records {
        [one] => serde_json::to_writer_pretty(&mut *out, one),
        many => serde_json::to_writer_pretty(&mut *out, many),
    };
    result.map_err(|e| CliError::usage(format!("cannot write JSON: {e}")))?;
    writeln!(out)?;
    Ok(())
}

pub fn write_csv(records: &[EstimateRecord], out: &mut dyn Write) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| CliError::usage(format!("cannot write CSV: {e}"));
    let header: Vec<&str> = records[0].flat_fields().iter().map(|(k, _)| *k).collect();
    w.write_record(&header).map_err(to_err)?;
    for r in records {
        w.write_record(r.flat_fields().iter().map(|(_, v)| v))
            .map_err(to_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records(
    records: &[EstimateRecord],
    format: Format,
    out: &mut dyn Write,
) -> CliResult<()> {
    match format {
        Format::Table => Ok(write_table(records, out)?),
        Format::Json => write_json(records, out),
        Format::Csv => write_csv(records, out),
    }
}
