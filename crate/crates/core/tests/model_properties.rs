use flopscale::cost::{forward_flops, incremental_flops, incremental_flops_with, IncrementalTerms};
use flopscale::ledger::{Category, Direction, FlopLedger};
use flopscale::train::{grad_check_params, probe_tokens};
use flopscale::{
    decode_step, forward, generate, generate_uncached, prefill, ModelConfig, ParameterSet,
};
use proptest::prelude::*;

fn config() -> impl Strategy<Value = ModelConfig> {
    (2usize..24, 2usize..20, 1usize..4, 1usize..6, 0usize..3)
        .prop_map(|(n, v, h, dh, l)| ModelConfig::new(n, v, h * dh, h, l).unwrap())
}

fn config_and_tokens() -> impl Strategy<Value = (ModelConfig, Vec<usize>, u64)> {
    (config(), any::<u64>()).prop_flat_map(|(cfg, seed)| {
        (
            Just(cfg),
            proptest::collection::vec(0..cfg.vocab, cfg.context),
            Just(seed),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forward_and_decode_ledgers_match_closed_forms((cfg, tokens, seed) in config_and_tokens()) {
        let params = ParameterSet::init(&cfg, seed);
        let mut ledger = FlopLedger::new();
        forward(&tokens, &params, &mut ledger).unwrap();
        prop_assert_eq!(ledger.direction_total(Direction::Forward) as u128, forward_flops(&cfg, cfg.context));
        prop_assert_eq!(ledger.direction_total(Direction::Backward), 0);

        let (mut cache, _) = prefill(&tokens[..1], &params, &mut FlopLedger::new()).unwrap();
        for (t, &tok) in tokens.iter().enumerate().skip(1) {
            let mut step = FlopLedger::new();
            decode_step(&mut cache, tok, &params, &mut step).unwrap();
            prop_assert_eq!(step.total() as u128, incremental_flops_with(&cfg, t + 1, IncrementalTerms::ALL));
            let core: u64 = Category::ALL
                .into_iter()
                .filter(|&c| c.is_matmul() && c != Category::LogitProjection)
                .map(|c| step.get(c, Direction::Forward))
                .sum();
            prop_assert_eq!(core as u128, incremental_flops(&cfg, t + 1));
        }
    }

    #[test]
    fn logits_at_earlier_positions_ignore_later_tokens((cfg, tokens, seed) in config_and_tokens(), j in 0usize..24, bump in 1usize..20) {
        let j = j % cfg.context;
        let params = ParameterSet::init(&cfg, seed);
        let base = forward(&tokens, &params, &mut FlopLedger::new()).unwrap();
        let mut changed = tokens.clone();
        changed[j] = (changed[j] + bump) % cfg.vocab;
        let other = forward(&changed, &params, &mut FlopLedger::new()).unwrap();
        for i in 0..j {
            prop_assert_eq!(base.row(i), other.row(i));
        }
    }

    #[test]
    fn sampled_cached_generation_matches_reference((cfg, tokens, seed) in config_and_tokens(), temperature in 0.1f64..2.0) {
        prop_assume!(cfg.context >= 2);
        let params = ParameterSet::init(&cfg, seed);
        let prompt_len = 1 + (seed as usize) % (cfg.context - 1);
        let steps = cfg.context - prompt_len;
        let cached = generate(&tokens[..prompt_len], steps, temperature, seed, &params).unwrap();
        let reference = generate_uncached(&tokens[..prompt_len], steps, temperature, seed, &params).unwrap();
        prop_assert_eq!(cached, reference);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Entries of at least 1e-4 are resolved by central differences to far
    /// better than 1e-5 relative; smaller ones are held to an absolute bound.
    #[test]
    fn resolvable_gradients_agree(seed in any::<u64>(), heads in 1usize..3, layers in 1usize..3) {
        let cfg = ModelConfig::new(8, 11, 4 * heads, heads, layers).unwrap();
        let params = ParameterSet::init(&cfg, seed);
        let report = grad_check_params(&params, &probe_tokens(&cfg, seed), 1e-5, 200, seed).unwrap();
        for e in &report.entries {
            if e.analytic.abs() >= 1e-4 {
                prop_assert!(e.rel_error <= 1e-5, "{} {:e} vs {:e}", e.param, e.analytic, e.numeric);
            } else {
                prop_assert!((e.analytic - e.numeric).abs() <= 1e-9, "{} {:e} vs {:e}", e.param, e.analytic, e.numeric);
            }
        }
    }
}
