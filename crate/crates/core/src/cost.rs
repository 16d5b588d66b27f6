//! Closed-form flop, memory and cost estimates.
//!
//! Counts are exact `u128` integers under the same conventions as the
//! ledger: one multiply-add per flop, attention at exactly `2·m²·d` per
//! layer, and `d` flops per layer-norm row. With `d_ff = 4·d_emb` the
//! formulas reduce to the familiar `12·L·d²` forms; other widths use the
//! per-block sums.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ledger::Category;
use crate::model::ModelConfig;

/// Whether the vocabulary-dependent terms (embedding, unembedding, logits)
/// participate in an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabTerms {
    #[default]
    Include,
    Exclude,
}

impl VocabTerms {
    fn vocab(self, cfg: &ModelConfig) -> u128 {
        match self {
            VocabTerms::Include => cfg.vocab as u128,
            VocabTerms::Exclude => 0,
        }
    }
}

struct Dims {
    n: u128,
    v: u128,
    d: u128,
    l: u128,
    ff: u128,
}

fn dims(cfg: &ModelConfig) -> Dims {
    Dims {
        n: cfg.context as u128,
        v: cfg.vocab as u128,
        d: cfg.d_emb as u128,
        l: cfg.layers as u128,
        ff: cfg.d_ff as u128,
    }
}

/// Weight-matrix scalars of one layer: `4d² + 2·d·d_ff` (`12d²` by default).
fn layer_matrix_params(x: &Dims) -> u128 {
    4 * x.d * x.d + 2 * x.d * x.ff
}

/// `12·L·d² + 4·L·d + 2·V·d`.
pub fn param_count(cfg: &ModelConfig) -> u128 {
    param_count_with(cfg, VocabTerms::Include)
}

pub fn param_count_with(cfg: &ModelConfig, vocab: VocabTerms) -> u128 {
    let x = dims(cfg);
    x.l * (layer_matrix_params(&x) + 4 * x.d) + 2 * vocab.vocab(cfg) * x.d
}

/// Forward multiply-adds over `m` tokens:
/// `12·L·m·d² + 2·L·m²·d + (2L + V)·m·d`.
pub fn forward_flops(cfg: &ModelConfig, m: usize) -> u128 {
    forward_flops_with(cfg, m, VocabTerms::Include)
}

pub fn forward_flops_with(cfg: &ModelConfig, m: usize, vocab: VocabTerms) -> u128 {
    let x = dims(cfg);
    let m = m as u128;
    x.l * (m * layer_matrix_params(&x) + 2 * m * m * x.d + 2 * m * x.d) + m * x.d * vocab.vocab(cfg)
}

/// [`forward_flops`] split into ledger categories; the parts sum to the total.
pub fn forward_flops_by_category(cfg: &ModelConfig, m: usize) -> Vec<(Category, u128)> {
    let x = dims(cfg);
    let m = m as u128;
    let per_layer = [
        (Category::QkvProjection, 3 * m * x.d * x.d),
        (Category::AttentionScores, m * m * x.d),
        (Category::AttentionValues, m * m * x.d),
        (Category::OutputProjection, m * x.d * x.d),
        (Category::FfnExpand, m * x.d * x.ff),
        (Category::FfnContract, m * x.ff * x.d),
    ];
    let mut out: Vec<(Category, u128)> = per_layer.into_iter().map(|(c, v)| (c, v * x.l)).collect();
    out.push((Category::LogitProjection, m * x.d * x.v));
    out.push((Category::LayerNorm, 2 * m * x.d * x.l));
    out.push((Category::Other, 0));
    out
}

/// Optional extras on top of the per-layer incremental cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct IncrementalTerms {
    /// One `d·V` logit row.
    pub logits: bool,
    /// Two normalized rows per layer, `2·d·L`.
    pub layer_norm: bool,
}

impl IncrementalTerms {
    /// Everything the instrumented decoder charges.
    pub const ALL: IncrementalTerms = IncrementalTerms {
        logits: true,
        layer_norm: true,
    };
}

/// Cost of one more token whose query attends to `context` positions
/// (itself included): `(12·d² + 2·context·d)·L`.
pub fn incremental_flops(cfg: &ModelConfig, context: usize) -> u128 {
    incremental_flops_with(cfg, context, IncrementalTerms::default())
}

pub fn incremental_flops_with(cfg: &ModelConfig, context: usize, terms: IncrementalTerms) -> u128 {
    let x = dims(cfg);
    let t = context as u128;
    let mut per_layer = layer_matrix_params(&x) + 2 * t * x.d;
    if terms.layer_norm {
        per_layer += 2 * x.d;
    }
    let mut total = per_layer * x.l;
    if terms.logits {
        total += x.d * x.v;
    }
    total
}

/// Activation elements for a full window: `13·n·d + n·V`.
pub fn activations_memory(cfg: &ModelConfig) -> u128 {
    activations_memory_with(cfg, VocabTerms::Include)
}

pub fn activations_memory_with(cfg: &ModelConfig, vocab: VocabTerms) -> u128 {
    let x = dims(cfg);
    // embed 1, qkv 3, attention 1, O 1, expand d_ff/d, contract 1, norms 2
    9 * x.n * x.d + x.n * x.ff + x.n * vocab.vocab(cfg)
}

/// Cached K and V scalars at `t` tokens: `2·L·t·d`.
pub fn kv_cache_memory(cfg: &ModelConfig, t: usize) -> u128 {
    let x = dims(cfg);
    2 * x.l * t as u128 * x.d
}

/// Twenty tokens per weight-matrix parameter: `240·L·d² + 40·V·d`.
pub fn chinchilla_tokens(cfg: &ModelConfig) -> u128 {
    chinchilla_tokens_with(cfg, VocabTerms::Include)
}

pub fn chinchilla_tokens_with(cfg: &ModelConfig, vocab: VocabTerms) -> u128 {
    let x = dims(cfg);
    20 * (x.l * layer_matrix_params(&x) + 2 * vocab.vocab(cfg) * x.d)
}

/// Forward plus backward flops per trained token, one full window amortized
/// over its `n` predictions: `(6·n·d + 36·d²)·L + 3·V·d`.
pub fn per_token_train_flops(cfg: &ModelConfig, vocab: VocabTerms) -> u128 {
    let x = dims(cfg);
    3 * (x.l * (layer_matrix_params(&x) + 2 * x.n * x.d) + vocab.vocab(cfg) * x.d)
}

/// Chinchilla-optimal training cost. With vocabulary terms excluded this is
/// `240·L²·d³·(6n + 36d)`.
pub fn training_flops(cfg: &ModelConfig, vocab: VocabTerms) -> u128 {
    chinchilla_tokens_with(cfg, vocab) * per_token_train_flops(cfg, vocab)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HardwareProfile {
    /// Sustained device throughput, flops per second.
    pub flops_per_second: f64,
    /// Dollars per device-year.
    pub cost_per_year: f64,
    pub seconds_per_year: f64,
}

impl Default for HardwareProfile {
    fn default() -> Self {
        Self {
            flops_per_second: 300e12,
            cost_per_year: 10_000.0,
            seconds_per_year: 3.156e7,
        }
    }
}

impl HardwareProfile {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("device throughput", self.flops_per_second),
            ("device cost", self.cost_per_year),
            ("seconds per year", self.seconds_per_year),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn dollars_per_flop(&self) -> f64 {
        self.cost_per_year / (self.flops_per_second * self.seconds_per_year)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Economics {
    pub gpu_years: f64,
    pub dollars: f64,
}

pub fn economics(flops: f64, hw: &HardwareProfile) -> Economics {
    let gpu_years = flops / (hw.flops_per_second * hw.seconds_per_year);
    Economics {
        gpu_years,
        dollars: gpu_years * hw.cost_per_year,
    }
}

/// Dollars per million incremental tokens at a full context window.
pub fn incremental_price_per_mtok(cfg: &ModelConfig, hw: &HardwareProfile) -> f64 {
    incremental_price_per_mtok_at(cfg, cfg.context, hw)
}

pub fn incremental_price_per_mtok_at(
    cfg: &ModelConfig,
    context: usize,
    hw: &HardwareProfile,
) -> f64 {
    incremental_flops(cfg, context) as f64 * 1e6 * hw.dollars_per_flop()
}

/// Knobs for [`CostReport::for_config`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ReportOptions {
    /// Add the vocabulary terms to the training-flop estimate.
    pub training_vocab_terms: bool,
}

/// All headline quantities for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostReport {
    pub parameters: u128,
    pub activations_memory: u128,
    pub kv_cache_memory: u128,
    pub forward_flops: u128,
    pub incremental_flops: u128,
    pub chinchilla_tokens: u128,
    pub training_flops: u128,
    pub gpu_years: f64,
    pub dollars: f64,
}

/// Memory fields converted to bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemoryBytes {
    pub bytes_per_element: u128,
    pub parameters: u128,
    pub activations: u128,
    pub kv_cache: u128,
}

impl CostReport {
    pub fn for_config(cfg: &ModelConfig, hw: &HardwareProfile, options: ReportOptions) -> Self {
        let vocab = if options.training_vocab_terms {
            VocabTerms::Include
        } else {
            VocabTerms::Exclude
        };
        let training_flops = training_flops(cfg, vocab);
        let econ = economics(training_flops as f64, hw);
        Self {
            parameters: param_count(cfg),
            activations_memory: activations_memory(cfg),
            kv_cache_memory: kv_cache_memory(cfg, cfg.context),
            forward_flops: forward_flops(cfg, cfg.context),
            incremental_flops: incremental_flops(cfg, cfg.context),
            chinchilla_tokens: chinchilla_tokens(cfg),
            training_flops,
            gpu_years: econ.gpu_years,
            dollars: econ.dollars,
        }
    }

    pub fn memory_bytes(&self, bytes_per_element: u128) -> MemoryBytes {
        MemoryBytes {
            bytes_per_element,
            parameters: self.parameters * bytes_per_element,
            activations: self.activations_memory * bytes_per_element,
            kv_cache: self.kv_cache_memory * bytes_per_element,
        }
    }
}

/// Named configurations spanning academic to frontier scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Preset {
    A,
    B,
    C,
    DLow,
    DHigh,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::A, Preset::B, Preset::C, Preset::DLow, Preset::DHigh];

    pub fn id(self) -> &'static str {
        match self {
            Preset::A => "A",
            Preset::B => "B",
            Preset::C => "C",
            Preset::DLow => "D-low",
            Preset::DHigh => "D-high",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::A => "small-scale academic model (7B class)",
            Preset::B => "mid-scale enterprise assistant (33B-40B class)",
            Preset::C => "large-scale 2021 model (GPT-3 class)",
            Preset::DLow => "2025 frontier model, low end",
            Preset::DHigh => "2025 frontier model, high end",
        }
    }

    pub fn config(self) -> ModelConfig {
        // (n, V, d_emb, H, L); "32K"/"64K" vocabularies read as powers of two
        let (n, v, d, h, l) = match self {
            Preset::A => (2048, 32_768, 4096, 32, 32),
            Preset::B => (4096, 65_536, 6144, 48, 60),
            Preset::C => (8192, 80_000, 12_288, 96, 96),
            Preset::DLow => (100_000, 100_000, 16_384, 128, 120),
            Preset::DHigh => (200_000, 200_000, 20_480, 160, 160),
        };
        ModelConfig::new(n, v, d, h, l).expect("preset configs are valid")
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Preset::A),
            "b" => Ok(Preset::B),
            "c" => Ok(Preset::C),
            "d-low" | "dlow" | "d_low" => Ok(Preset::DLow),
            "d-high" | "dhigh" | "d_high" => Ok(Preset::DHigh),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

pub fn use_case_report(preset: Preset, hw: &HardwareProfile) -> CostReport {
    CostReport::for_config(&preset.config(), hw, ReportOptions::default())
}

/// A mixture-of-experts model: per-token dims differ from the latent
/// parameter total that drives the data budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoEScenario {
    /// Routed per-token dims during training.
    pub active_training: ModelConfig,
    pub total_parameters: u128,
    pub dataset_tokens: u128,
    /// Routed per-token dims during inference.
    pub active_inference: ModelConfig,
    pub vocab_terms: VocabTerms,
}

impl MoEScenario {
    pub fn validate(&self) -> Result<()> {
        let active = param_count_with(&self.active_training, self.vocab_terms);
        if self.total_parameters < active {
            return Err(Error::Config(format!(
                "total parameters {} below active parameter count {active}",
                self.total_parameters
            )));
        }
        Ok(())
    }

    /// DeepSeek-V3: 61 layers of width 7168 and 128 heads, trained mostly at
    /// a 32K window over 14.8T tokens, 671B latent parameters, served at a
    /// 128K window. Vocabulary terms are left out of every figure.
    pub fn deepseek_v3() -> Self {
        let vocab = 129_280;
        Self {
            active_training: ModelConfig::new(32_768, vocab, 7168, 128, 61).expect("valid"),
            total_parameters: 671_000_000_000,
            dataset_tokens: 14_800_000_000_000,
            active_inference: ModelConfig::new(128_000, vocab, 7168, 128, 61).expect("valid"),
            vocab_terms: VocabTerms::Exclude,
        }
    }

    pub fn active_inference_parameters(&self) -> u128 {
        param_count_with(&self.active_inference, self.vocab_terms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoeReport {
    /// `parameters` is the latent total; memory and inference figures come
    /// from the inference dims.
    pub report: CostReport,
    pub active_inference_parameters: u128,
    pub active_training_parameters: u128,
}

pub fn moe_scenario_report(s: &MoEScenario, hw: &HardwareProfile) -> Result<MoeReport> {
    s.validate()?;
    let inf = &s.active_inference;
    let training_flops =
        per_token_train_flops(&s.active_training, s.vocab_terms) * s.dataset_tokens;
    let econ = economics(training_flops as f64, hw);
    let report = CostReport {
        parameters: s.total_parameters,
        activations_memory: activations_memory_with(inf, s.vocab_terms),
        kv_cache_memory: kv_cache_memory(inf, inf.context),
        forward_flops: forward_flops_with(inf, inf.context, s.vocab_terms),
        incremental_flops: incremental_flops(inf, inf.context),
        chinchilla_tokens: 20 * s.total_parameters,
        training_flops,
        gpu_years: econ.gpu_years,
        dollars: econ.dollars,
    };
    Ok(MoeReport {
        report,
        active_inference_parameters: s.active_inference_parameters(),
        active_training_parameters: param_count_with(&s.active_training, s.vocab_terms),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> ModelConfig {
        ModelConfig::new(4, 11, 8, 2, 2).unwrap()
    }

    #[test]
    fn small_config_counts() {
        assert_eq!(param_count(&small()), 1776);
        assert_eq!(forward_flops(&small(), 4), 7008 + 128);
        assert_eq!(kv_cache_memory(&small(), 4), 128);
        assert_eq!(incremental_flops(&small(), 4) / 2, 832);
    }

    #[test]
    fn category_split_sums_to_total() {
        for m in 1..=4 {
            let total: u128 = forward_flops_by_category(&small(), m)
                .iter()
                .map(|(_, v)| v)
                .sum();
            assert_eq!(total, forward_flops(&small(), m));
        }
    }

    #[test]
    fn zero_layers_leaves_vocab_terms() {
        let cfg = ModelConfig::new(4, 11, 8, 2, 0).unwrap();
        assert_eq!(param_count(&cfg), 2 * 11 * 8);
    }

    #[test]
    fn trivial_limits() {
        let cfg = Preset::A.config();
        assert_eq!(incremental_flops(&cfg, 0), 12 * 4096 * 4096 * 32);
        assert_eq!(kv_cache_memory(&cfg, 0), 0);
        let one = ModelConfig { context: 1, ..cfg };
        assert_eq!(activations_memory(&one), 13 * 4096 + 32_768);
    }

    #[test]
    fn training_flops_closed_form() {
        for p in Preset::ALL {
            let c = p.config();
            let (n, d, l) = (c.context as u128, c.d_emb as u128, c.layers as u128);
            assert_eq!(
                training_flops(&c, VocabTerms::Exclude),
                240 * l * l * d * d * d * (6 * n + 36 * d)
            );
        }
    }

    #[test]
    fn per_token_train_is_three_forward_per_token() {
        let c = small();
        // forward without norms, divided by n
        let fwd_per_token = (forward_flops(&c, 4) - 2 * 2 * 4 * 8) / 4;
        assert_eq!(
            per_token_train_flops(&c, VocabTerms::Include),
            3 * fwd_per_token
        );
    }

    #[test]
    fn chinchilla_close_to_twenty_per_parameter() {
        for p in Preset::ALL {
            let c = p.config();
            let ratio = chinchilla_tokens(&c) as f64 / (20.0 * param_count(&c) as f64);
            assert!((ratio - 1.0).abs() < 0.005, "{p}: {ratio}");
            assert_eq!(
                20 * param_count(&c) - chinchilla_tokens(&c),
                80 * c.layers as u128 * c.d_emb as u128
            );
        }
    }

    #[test]
    fn economics_identities() {
        let hw = HardwareProfile::default();
        let e = economics(1e18, &hw);
        assert!((e.dollars - 1.0).abs() < 0.06);
        let fast = HardwareProfile {
            flops_per_second: 600e12,
            ..hw
        };
        let slow = economics(2.7e21, &hw);
        assert!((economics(2.7e21, &fast).gpu_years * 2.0 - slow.gpu_years).abs() < 1e-12);
    }

    #[test]
    fn price_floor_at_empty_context() {
        let cfg = Preset::A.config();
        let hw = HardwareProfile {
            flops_per_second: 1e12,
            cost_per_year: 1.0,
            seconds_per_year: 1e6,
        };
        let expect = 12.0 * 4096f64.powi(2) * 32.0 * 1e-12;
        assert!((incremental_price_per_mtok_at(&cfg, 0, &hw) - expect).abs() < 1e-12 * expect);
        let price_a = incremental_price_per_mtok(&cfg, &HardwareProfile::default());
        assert!((price_a - 0.007).abs() < 0.001, "{price_a}");
    }

    #[test]
    fn presets_parse() {
        for p in Preset::ALL {
            assert_eq!(p.id().parse::<Preset>().unwrap(), p);
        }
        assert!(matches!(
            "E".parse::<Preset>(),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn custom_config_equal_to_preset_gives_same_report() {
        let hw = HardwareProfile::default();
        let custom = ModelConfig::new(2048, 32_768, 4096, 32, 32).unwrap();
        assert_eq!(
            CostReport::for_config(&custom, &hw, ReportOptions::default()),
            use_case_report(Preset::A, &hw)
        );
    }

    #[test]
    fn moe_rejects_too_few_total_parameters() {
        let mut s = MoEScenario::deepseek_v3();
        s.total_parameters = 1;
        assert!(moe_scenario_report(&s, &HardwareProfile::default()).is_err());
    }

    #[test]
    fn deepseek_per_token_cost() {
        let s = MoEScenario::deepseek_v3();
        let per_token = per_token_train_flops(&s.active_training, VocabTerms::Exclude) as f64;
        assert!((per_token / 1.99e11 - 1.0).abs() < 0.005, "{per_token}");
    }

    #[test]
    fn bytes_view_scales_memory() {
        let r = use_case_report(Preset::A, &HardwareProfile::default());
        let b = r.memory_bytes(2);
        assert_eq!(b.kv_cache, 2 * r.kv_cache_memory);
        assert_eq!(b.parameters, 2 * r.parameters);
    }

    fn fields(r: &CostReport) -> [f64; 9] {
        [
            r.parameters as f64,
            r.activations_memory as f64,
            r.kv_cache_memory as f64,
            r.forward_flops as f64,
            r.incremental_flops as f64,
            r.chinchilla_tokens as f64,
            r.training_flops as f64,
            r.gpu_years,
            r.dollars,
        ]
    }

    proptest! {
        #[test]
        fn reports_are_monotone(
            n in 1usize..5000, v in 1usize..5000, heads in 1usize..8, dh in 1usize..64, l in 0usize..50,
            which in 0usize..4, bump in 1usize..100,
        ) {
            let base = ModelConfig::new(n, v, heads * dh, heads, l).unwrap();
            let bigger = match which {
                0 => ModelConfig { context: n + bump, ..base },
                1 => ModelConfig { vocab: v + bump, ..base },
                2 => ModelConfig::new(n, v, heads * (dh + bump), heads, l).unwrap(),
                _ => ModelConfig { layers: l + bump, ..base },
            };
            let hw = HardwareProfile::default();
            let a = fields(&CostReport::for_config(&base, &hw, ReportOptions::default()));
            let b = fields(&CostReport::for_config(&bigger, &hw, ReportOptions::default()));
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(y >= x);
            }
        }

        #[test]
        fn formulas_are_pure(n in 1usize..100, d in 1usize..64, l in 0usize..8) {
            let c = ModelConfig::new(n, 17, d, 1, l).unwrap();
            prop_assert_eq!(forward_flops(&c, n), forward_flops(&c, n));
            prop_assert_eq!(training_flops(&c, VocabTerms::Include), training_flops(&c, VocabTerms::Include));
        }
    }
}
