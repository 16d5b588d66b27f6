use std::path::Path;
use std::process::{Command, Output};

fn flopscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flopscale"))
        .args(args)
        .env_remove("FLOPSCALE_HARDWARE")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(args: &[&str]) -> serde_json::Value {
    let out = flopscale(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const TOY: &str = "# small test model\nn=4\nvocab=11\nd_emb=8\nheads=2\nlayers=2\n";

#[test]
fn estimate_preset_a_json() {
    let v = json(&["estimate", "--preset", "A", "--format", "json"]);
    let training = v["training_flops"].as_f64().unwrap();
    assert!((training / 2.7e21 - 1.0).abs() < 0.1, "{training}");
    assert_eq!(v["name"], "A");
    assert_eq!(v["config"]["d_emb"], 4096);
}

#[test]
fn estimate_json_key_set_is_stable() {
    let keys =
        |v: &serde_json::Value| -> Vec<String> { v.as_object().unwrap().keys().cloned().collect() };
    let a = json(&["estimate", "--preset", "A", "--format", "json"]);
    let d = json(&["estimate", "--scenario", "deepseek", "--format", "json"]);
    assert_eq!(keys(&a), keys(&d));
    let expected = [
        "name",
        "config",
        "hardware",
        "parameters",
        "active_parameters",
        "activations_memory",
        "kv_cache_memory",
        "forward_flops",
        "incremental_flops",
        "chinchilla_tokens",
        "training_flops",
        "gpu_years",
        "dollars",
        "price_per_mtok",
        "bytes_per_element",
        "memory_bytes",
    ];
    let mut want: Vec<String> = expected.iter().map(|s| s.to_string()).collect();
    want.sort();
    assert_eq!(keys(&a), want);
    let all = json(&["estimate", "--preset", "all", "--format", "json"]);
    assert_eq!(all.as_array().unwrap().len(), 5);
}

#[test]
fn estimate_config_file_small_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "toy.cfg", TOY);
    let v = json(&["estimate", "--config", &path, "--format", "json"]);
    assert_eq!(v["parameters"], 1776);
    assert_eq!(v["forward_flops"], 7136);
    assert_eq!(v["name"], "toy");
}

#[test]
fn malformed_config_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "bad.cfg", "n=4\nvocab=11\nwidth=8\n");
    let out = flopscale(&["estimate", "--config", &path]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.cfg:3:") && err.contains("width"), "{err}");
}

#[test]
fn unknown_preset_is_usage_error() {
    let out = flopscale(&["estimate", "--preset", "E"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));
}

#[test]
fn estimate_requires_exactly_one_source() {
    assert_eq!(flopscale(&["estimate"]).status.code(), Some(2));
    assert_eq!(
        flopscale(&["estimate", "--preset", "A", "--scenario", "deepseek"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn doubling_gpu_throughput_halves_gpu_years() {
    let base = json(&["estimate", "--preset", "A", "--format", "json"]);
    let fast = json(&[
        "estimate",
        "--preset",
        "A",
        "--format",
        "json",
        "--gpu-flops",
        "600e12",
    ]);
    let ratio = fast["gpu_years"].as_f64().unwrap() / base["gpu_years"].as_f64().unwrap();
    assert!((ratio - 0.5).abs() < 1e-12, "{ratio}");
    assert_eq!(fast["training_flops"], base["training_flops"]);
}

#[test]
fn hardware_profile_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "hw.txt",
        "# doubled price\ncost_per_year=20000\n",
    );
    let base = json(&["estimate", "--preset", "B", "--format", "json"]);
    let out = Command::new(env!("CARGO_BIN_EXE_flopscale"))
        .args(["estimate", "--preset", "B", "--format", "json"])
        .env("FLOPSCALE_HARDWARE", &path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ratio = v["dollars"].as_f64().unwrap() / base["dollars"].as_f64().unwrap();
    assert!((ratio - 2.0).abs() < 1e-12);
    assert_eq!(v["hardware"]["cost_per_year"], 20000.0);
}

#[test]
fn table_uses_three_significant_digits() {
    let out = flopscale(&["estimate", "--preset", "A"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let row = text
        .lines()
        .find(|l| l.starts_with("training flops"))
        .unwrap();
    assert!(row.trim_end().ends_with("2.70e21"), "{row}");
}

#[test]
fn csv_has_header_and_one_row_per_preset() {
    let out = flopscale(&["estimate", "--preset", "all", "--format", "csv"]);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("name,config_n,"));
    assert!(lines[4].starts_with("D-low,100000,"));
}

#[test]
fn verify_default_passes() {
    let out = flopscale(&["verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("result: PASS"));
    assert!(!text.contains("MISMATCH"));
}

#[test]
fn verify_corrupted_expectation_exits_one() {
    let out = flopscale(&["verify", "--corrupt-expected"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("MISMATCH"));
}

#[test]
fn verify_refuses_large_models() {
    let out = flopscale(&[
        "verify", "--n", "2048", "--vocab", "32768", "--d-emb", "4096", "--heads", "32",
        "--layers", "32",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_heads_list_gives_identical_totals() {
    let v = json(&["verify", "--heads", "1,2,4", "--format", "json"]);
    assert_eq!(v["heads_consistent"], true);
    assert_eq!(v["passed"], true);
    let runs = v["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 3);
    let totals: Vec<&serde_json::Value> = runs
        .iter()
        .map(|r| &r["report"]["forward_measured"])
        .collect();
    assert!(totals.iter().all(|t| *t == totals[0]));
}

#[test]
fn verify_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "toy.cfg", TOY);
    let v = json(&["verify", "--config", &path, "--format", "json"]);
    assert_eq!(v["runs"][0]["report"]["forward_measured"], 7136);
}

fn losses(text: &str) -> Vec<f64> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn train_is_deterministic_and_reports_each_step() {
    let args = [
        "train", "--steps", "10", "--n", "16", "--d-emb", "16", "--heads", "2", "--layers", "1",
        "--seed", "3",
    ];
    let a = flopscale(&args);
    let b = flopscale(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let l = losses(&text);
    assert_eq!(l.len(), 10);
    let ln_v = 25f64.ln();
    assert!((l[0] / ln_v - 1.0).abs() < 0.1, "{}", l[0]);
    assert!(text.contains("# final/initial"));
}

#[test]
fn train_missing_corpus_exits_two() {
    let out = flopscale(&[
        "train",
        "--corpus",
        "/nonexistent/corpus.txt",
        "--steps",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_on_custom_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c.txt", &"abcabcabd".repeat(50));
    let out = flopscale(&[
        "train", "--corpus", &corpus, "--steps", "3", "--n", "8", "--d-emb", "8", "--heads", "2",
        "--layers", "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("# vocab 4,"));
}

#[test]
fn generate_echoes_prompt_for_zero_steps() {
    let out = flopscale(&["generate", "--prompt", "the cat", "--steps", "0"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "the cat\n");
}

#[test]
fn generate_emits_requested_length_deterministically() {
    let args = [
        "generate", "--prompt", "the ", "--steps", "12", "--seed", "5",
    ];
    let a = flopscale(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, flopscale(&args).stdout);
    assert_eq!(stdout(&a).trim_end_matches('\n').len(), 4 + 12);
}

#[test]
fn generate_rejects_overlong_request() {
    let out = flopscale(&["generate", "--prompt", "abc", "--steps", "30"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn trained_checkpoint_greedy_matches_reference_decoder() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("model.ckpt");
    let ck = ck.to_str().unwrap();
    let train = flopscale(&[
        "train", "--steps", "20", "--n", "16", "--d-emb", "16", "--heads", "2", "--layers", "1",
        "--save", ck,
    ]);
    assert_eq!(train.status.code(), Some(0));

    let cached = flopscale(&[
        "generate",
        "--checkpoint",
        ck,
        "--prompt",
        "the ",
        "--steps",
        "12",
        "--greedy",
    ]);
    let reference = flopscale(&[
        "generate",
        "--checkpoint",
        ck,
        "--prompt",
        "the ",
        "--steps",
        "12",
        "--greedy",
        "--reference",
    ]);
    assert_eq!(cached.status.code(), Some(0));
    assert_eq!(cached.stdout, reference.stdout);

    let sampled = flopscale(&[
        "generate",
        "--checkpoint",
        ck,
        "--prompt",
        "the ",
        "--steps",
        "12",
        "--seed",
        "2",
    ]);
    let sampled_ref = flopscale(&[
        "generate",
        "--checkpoint",
        ck,
        "--prompt",
        "the ",
        "--steps",
        "12",
        "--seed",
        "2",
        "--reference",
    ]);
    assert_eq!(sampled.stdout, sampled_ref.stdout);
}

#[test]
fn corrupt_checkpoint_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "junk.ckpt", "not a checkpoint");
    let out = flopscale(&["generate", "--checkpoint", &path, "--prompt", "a"]);
    assert_eq!(out.status.code(), Some(2));
}
