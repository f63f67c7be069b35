//! Contract tests for the `ngram-oaxe` binary: subcommand wiring, exit
//! codes, determinism, and output file schemas.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ngram-oaxe"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn gen_small(dir: &Path, seed: u64) {
    let out = bin()
        .args([
            "gen",
            "--examples",
            "60",
            "--eval-examples",
            "8",
            "--inventory",
            "12",
            "--words",
            "12",
            "--seed",
            &seed.to_string(),
        ])
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
}

fn train_small(corpus: &Path, out_dir: &Path, extra: &[&str]) -> Output {
    let mut cmd = bin();
    cmd.args([
        "train",
        "--pretrain",
        "20",
        "--steps",
        "80",
        "--batch-size",
        "8",
        "--embed-dim",
        "12",
        "--hidden-dim",
        "16",
        "--seed",
        "3",
    ])
    .arg("--corpus")
    .arg(corpus)
    .arg("--out")
    .arg(out_dir)
    .args(extra);
    cmd.output().unwrap()
}

#[test]
fn gen_is_byte_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    gen_small(&a, 7);
    gen_small(&b, 7);
    assert_eq!(
        std::fs::read(a.join("train.jsonl")).unwrap(),
        std::fs::read(b.join("train.jsonl")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("eval.jsonl")).unwrap(),
        std::fs::read(b.join("eval.jsonl")).unwrap()
    );
}

#[test]
fn gen_writes_a_manifest_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path(), 5);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "gen");
    assert_eq!(manifest["seed"], 5);
    assert!(manifest["timestamp"].as_str().unwrap().contains('T'));
    assert!(manifest["version"].as_str().is_some());
    assert!(manifest["outputs"]["train"].as_str().unwrap().ends_with("train.jsonl"));
}

#[test]
fn impossible_mode_count_fails_validation_with_the_limit() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["gen", "--examples", "10", "--phrases", "2", "--modes", "10", "--seed", "1"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("mode_count exceeds 2! = 2"), "{}", stderr(&out));
}

#[test]
fn oaxe_flag_equals_ngram_oaxe_with_n_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_small(&data, 11);
    let corpus = data.join("train.jsonl");

    let oaxe_dir = dir.path().join("oaxe");
    let ngram_dir = dir.path().join("ngram1");
    let a = train_small(&corpus, &oaxe_dir, &["--loss", "oaxe"]);
    assert!(a.status.success(), "{}", stderr(&a));
    let b = train_small(&corpus, &ngram_dir, &["--loss", "ngram_oaxe", "--n", "1"]);
    assert!(b.status.success(), "{}", stderr(&b));

    assert_eq!(
        std::fs::read(oaxe_dir.join("history.csv")).unwrap(),
        std::fs::read(ngram_dir.join("history.csv")).unwrap()
    );
}

#[test]
fn out_of_range_margin_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_small(&data, 2);
    let out = train_small(&data.join("train.jsonl"), &dir.path().join("run"), &["--pi", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("margin"));
}

#[test]
fn malformed_corpus_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("bad.jsonl");
    std::fs::write(
        &corpus,
        "{\"src\":[2],\"target\":[2,3],\"refs\":[[2,3]],\"phrases\":[[2,3]]}\nnot json\n",
    )
    .unwrap();
    let out = train_small(&corpus, &dir.path().join("run"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn eval_report_has_the_documented_schema_and_dedup_zeroes_repetition() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_small(&data, 13);
    let run = dir.path().join("run");
    let trained = train_small(&data.join("train.jsonl"), &run, &["--loss", "ngram_oaxe"]);
    assert!(trained.status.success(), "{}", stderr(&trained));

    let mut reports = Vec::new();
    for (dedup, sub) in [("true", "ded"), ("false", "raw")] {
        let out_dir = dir.path().join(sub);
        let out = bin()
            .args(["eval", "--dedup", dedup])
            .arg("--checkpoint")
            .arg(run.join("checkpoint.json"))
            .arg("--corpus")
            .arg(data.join("eval.jsonl"))
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        let report: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
        for field in
            ["repetition_rate", "ngram_precision", "mode_match_rate", "per_length_buckets", "n_examples"]
        {
            assert!(report.get(field).is_some(), "missing {field}");
        }
        reports.push(report);
    }
    let dedup_rep = reports[0]["repetition_rate"].as_f64().unwrap();
    let raw_rep = reports[1]["repetition_rate"].as_f64().unwrap();
    assert_eq!(dedup_rep, 0.0);
    assert!(raw_rep >= dedup_rep);
}

#[test]
fn eval_rejects_checkpoint_corpus_vocab_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let small = dir.path().join("small");
    gen_small(&small, 3);
    let run = dir.path().join("run");
    let trained = train_small(&small.join("train.jsonl"), &run, &[]);
    assert!(trained.status.success(), "{}", stderr(&trained));

    // A corpus over a bigger phrase inventory needs source ids the
    // checkpoint never saw.
    let big = dir.path().join("big");
    let out = bin()
        .args(["gen", "--examples", "40", "--eval-examples", "6", "--inventory", "48", "--words", "24", "--seed", "3"])
        .arg("--out")
        .arg(&big)
        .output()
        .unwrap();
    assert!(out.status.success());

    let out = bin()
        .args(["eval"])
        .arg("--checkpoint")
        .arg(run.join("checkpoint.json"))
        .arg("--corpus")
        .arg(big.join("eval.jsonl"))
        .arg("--out")
        .arg(dir.path().join("rep"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("vocab mismatch"), "{}", stderr(&out));
}

#[test]
fn verify_walkthrough_prints_the_selected_bigrams() {
    let out = run(&["verify", "--suite", "figure1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    for needle in ["this afternoon", "I ate", "ate pizza", "pizza this", "truncated"] {
        assert!(text.contains(needle), "missing {needle:?} in {text}");
    }
}

#[test]
fn demo_prints_the_walkthrough_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["demo-figure1"]).arg("--out").arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("pizza this"));
    assert!(text.contains("truncated"));
    let demo: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("demo.json")).unwrap()).unwrap();
    assert_eq!(demo["pairs"].as_array().unwrap().len(), 4);
}

#[test]
fn bench_rejects_too_few_reps() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["bench", "--reps", "5"]).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("30"));
}

#[test]
fn bad_thread_env_is_a_validation_error() {
    let out = bin()
        .args(["verify", "--suite", "figure1"])
        .env("NGRAM_OAXE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("NGRAM_OAXE_THREADS"));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let bad = run(&["train", "--no-such-flag"]);
    assert_eq!(bad.status.code(), Some(1));
    let help = run(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("demo-figure1"));
}

#[test]
fn config_file_overrides_defaults_but_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_small(&data, 21);
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"steps": 80, "pretrain_steps": 10, "batch_size": 8, "embed_dim": 12, "hidden_dim": 16, "seed": 3, "lr": 0.005}"#).unwrap();

    let run_dir = dir.path().join("run");
    let out = bin()
        .args(["train", "--steps", "60"])
        .arg("--config")
        .arg(&config)
        .arg("--corpus")
        .arg(data.join("train.jsonl"))
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));

    let history = std::fs::read_to_string(run_dir.join("history.csv")).unwrap();
    // Header plus one row per step: the flag's 60 beats the file's 80.
    assert_eq!(history.lines().count(), 61);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["lr"], 0.005);
    assert_eq!(manifest["config"]["steps"], 60);
}

#[test]
fn rejected_config_file_names_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_small(&data, 22);
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"not_a_field": 1}"#).unwrap();
    let out = bin()
        .args(["train"])
        .arg("--config")
        .arg(&config)
        .arg("--corpus")
        .arg(data.join("train.jsonl"))
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("not_a_field"), "{}", stderr(&out));
}
