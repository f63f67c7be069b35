//! `ngram-oaxe`: corpus generation, training, evaluation, self-checks,
//! benchmarks, and a worked bigram example, as subcommands.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ngram_oaxe::datagen::{self, GenConfig};
use ngram_oaxe::error::Error;
use ngram_oaxe::eval;
use ngram_oaxe::model::{
    self, Checkpoint, LossKind, TrainConfig, TrainOverrides, CHECKPOINT_VERSION,
};
use ngram_oaxe::vocab::TokenSeq;
use ngram_oaxe::{atomic_write, bench, demo, verify};

#[derive(Parser)]
#[command(name = "ngram-oaxe", version, about = "Phrase-reordering-tolerant training losses and a desk-scale harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multimodal corpus (train + eval JSONL)
    Gen(GenArgs),
    /// Train the toy parallel-prediction model on a JSONL corpus
    Train(TrainArgs),
    /// Decode a checkpoint on a corpus and write a metrics report
    Eval(EvalArgs),
    /// Run the self-check suites
    Verify(VerifyArgs),
    /// Measure loss-evaluation overhead and solver scaling
    Bench(BenchArgs),
    /// Walk the bigram loss through a small worked example
    #[command(name = "demo-figure1")]
    DemoFigure1(DemoArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Training examples to generate
    #[arg(long, default_value_t = 2000)]
    examples: usize,
    /// Held-out examples with combinations disjoint from train
    #[arg(long, default_value_t = 200)]
    eval_examples: usize,
    /// Phrases per example
    #[arg(long, default_value_t = 3)]
    phrases: usize,
    /// Valid phrase orderings per example
    #[arg(long, default_value_t = 2)]
    modes: usize,
    /// Distinct phrases in the inventory
    #[arg(long, default_value_t = 64)]
    inventory: usize,
    /// Distinct target word types
    #[arg(long, default_value_t = 32)]
    words: usize,
    /// Tokens per phrase (1..=4)
    #[arg(long, default_value_t = 2)]
    phrase_len: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for train.jsonl, eval.jsonl, manifest.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training corpus (JSONL)
    #[arg(long)]
    corpus: PathBuf,
    /// Objective after pretraining
    #[arg(long, value_enum)]
    loss: Option<LossKind>,
    /// Ngram size N
    #[arg(long)]
    n: Option<usize>,
    /// Truncation margin
    #[arg(long)]
    pi: Option<f64>,
    /// Position-aligned warm-up steps
    #[arg(long)]
    pretrain: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Record metrics on a train sample every this many steps (0 = never)
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file overriding defaults (flags still win)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for checkpoint.json, history.csv, manifest.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Corpus with reference sets (JSONL)
    #[arg(long)]
    corpus: PathBuf,
    /// Collapse adjacent repeated tokens before scoring
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    dedup: bool,
    /// Output directory for report.json, manifest.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SuiteArg {
    All,
    Hungarian,
    Reduction,
    Enumeration,
    Gradients,
    Truncation,
    Figure1,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::All)]
    suite: SuiteArg,
    /// Trials per size or setting
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Largest matrix side for the solver suite
    #[arg(long, default_value_t = 7)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional directory for verify.json, manifest.json
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Repetitions per grid point (at least 30)
    #[arg(long, default_value_t = 30)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for bench.csv, manifest.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DemoArgs {
    /// Optional directory for demo.json, manifest.json
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Validation(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "{m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_)
            | Error::InvalidMargin(_)
            | Error::InvalidNgramSize { .. }
            | Error::ModeCountTooLarge { .. }
            | Error::VocabMismatch(_)
            | Error::CorpusParse { .. }
            | Error::CheckpointParse(_)
            | Error::EmptyCorpus => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Err(msg) = check_thread_env() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }

    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Bench(args) => cmd_bench(args),
        Command::DemoFigure1(args) => cmd_demo(args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn check_thread_env() -> Result<(), String> {
    match std::env::var("NGRAM_OAXE_THREADS") {
        Ok(raw) => raw
            .trim()
            .parse::<usize>()
            .map(|_| ())
            .map_err(|_| format!("NGRAM_OAXE_THREADS must be a non-negative integer, got {raw:?}")),
        Err(_) => Ok(()),
    }
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    seed: u64,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    timestamp: String,
    version: String,
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> CliResult {
    let bytes = serde_json::to_vec_pretty(manifest)
        .map_err(|e| CliError::Runtime(format!("manifest: {e}")))?;
    atomic_write(&dir.join("manifest.json"), &bytes)?;
    Ok(())
}

fn manifest(
    command: &str,
    config: serde_json::Value,
    seed: u64,
    inputs: &[(&str, &Path)],
    outputs: &[(&str, &Path)],
) -> RunManifest {
    let paths = |pairs: &[(&str, &Path)]| {
        pairs
            .iter()
            .map(|(k, p)| (k.to_string(), p.display().to_string()))
            .collect::<BTreeMap<_, _>>()
    };
    RunManifest {
        command: command.into(),
        config,
        seed,
        inputs: paths(inputs),
        outputs: paths(outputs),
        timestamp: chrono::Utc::now().to_rfc3339(),
        version: env!("CARGO_PKG_VERSION").into(),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(value).map_err(|e| CliError::Runtime(e.to_string()))
}

fn cmd_gen(args: GenArgs) -> CliResult {
    let cfg = GenConfig {
        n_examples: args.examples,
        eval_examples: args.eval_examples,
        n_phrases_per_example: args.phrases,
        mode_count: args.modes,
        inventory_size: args.inventory,
        word_count: args.words,
        phrase_len: args.phrase_len,
        seed: args.seed,
    };
    let (train, eval) = datagen::gen_corpus(&cfg)?;

    let train_path = args.out.join("train.jsonl");
    let eval_path = args.out.join("eval.jsonl");
    datagen::write_jsonl_file(&train, &train_path)?;
    datagen::write_jsonl_file(&eval, &eval_path)?;
    write_manifest(
        &args.out,
        &manifest(
            "gen",
            to_json(&cfg)?,
            cfg.seed,
            &[],
            &[("train", &train_path), ("eval", &eval_path)],
        ),
    )?;
    println!(
        "wrote {} train and {} eval examples to {}",
        train.len(),
        eval.len(),
        args.out.display()
    );
    Ok(())
}

fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut config = TrainConfig::default();
    if let Some(path) = &args.config {
        let bytes = std::fs::read(path).map_err(Error::from)?;
        TrainOverrides::from_slice(&bytes)?.apply(&mut config);
    }
    let flags = TrainOverrides {
        loss_kind: args.loss,
        ngram_n: args.n,
        truncation_margin: args.pi,
        pretrain_steps: args.pretrain,
        steps: args.steps,
        batch_size: args.batch_size,
        lr: args.lr,
        embed_dim: args.embed_dim,
        hidden_dim: args.hidden_dim,
        eval_every: args.eval_every,
        seed: args.seed,
        beta1: None,
        beta2: None,
        eps: None,
    };
    flags.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn history_csv(rows: &[model::StepRecord]) -> String {
    let mut out = String::from("step,loss,keep_rate\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.step, r.loss, r.keep_rate));
    }
    out
}

fn evals_csv(evals: &[model::EvalSnapshot]) -> String {
    let mut out = String::from("step,repetition_rate,mode_match_rate,bigram_precision\n");
    for e in evals {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.step, e.repetition_rate, e.mode_match_rate, e.bigram_precision
        ));
    }
    out
}

fn cmd_train(args: TrainArgs) -> CliResult {
    let config = resolve_train_config(&args)?;
    let corpus = datagen::read_jsonl(&args.corpus)?;

    let history_path = args.out.join("history.csv");
    let checkpoint_path = args.out.join("checkpoint.json");

    let mut rows = Vec::with_capacity(config.steps);
    let outcome = model::train_with(&config, &corpus, |r| rows.push(*r));

    match outcome {
        Ok(out) => {
            atomic_write(&history_path, history_csv(&out.history.rows).as_bytes())?;
            let evals_path = args.out.join("evals.csv");
            let mut output_files: Vec<(&str, &Path)> =
                vec![("checkpoint", &checkpoint_path), ("history", &history_path)];
            if !out.history.evals.is_empty() {
                atomic_write(&evals_path, evals_csv(&out.history.evals).as_bytes())?;
                output_files.push(("evals", &evals_path));
            }

            let n_phrases = out.dims.src_vocab.saturating_sub(3);
            let n_words = out.dims.tgt_vocab.saturating_sub(2);
            let ck = Checkpoint {
                format_version: CHECKPOINT_VERSION,
                config: config.clone(),
                src_vocab: datagen::source_vocab(n_phrases).all_tokens().to_vec(),
                tgt_vocab: datagen::target_vocab(n_words).all_tokens().to_vec(),
                dims: out.dims,
                params: out.params,
            };
            atomic_write(&checkpoint_path, ck.to_json().as_bytes())?;

            write_manifest(
                &args.out,
                &manifest(
                    "train",
                    to_json(&config)?,
                    config.seed,
                    &[("corpus", args.corpus.as_path())],
                    &output_files,
                ),
            )?;
            let last = rows.last().map(|r| r.loss).unwrap_or(f64::NAN);
            println!(
                "trained {} steps ({:?}, N={}, pi={}); final loss {last:.4}",
                config.steps, config.loss_kind, config.ngram_n, config.truncation_margin
            );
            Ok(())
        }
        Err(e) => {
            // Keep what we have for post-mortems before reporting the failure.
            atomic_write(&history_path, history_csv(&rows).as_bytes())?;
            write_manifest(
                &args.out,
                &manifest(
                    "train",
                    to_json(&config)?,
                    config.seed,
                    &[("corpus", args.corpus.as_path())],
                    &[("history", &history_path)],
                ),
            )?;
            Err(CliError::Runtime(e.to_string()))
        }
    }
}

fn cmd_eval(args: EvalArgs) -> CliResult {
    let bytes = std::fs::read(&args.checkpoint).map_err(Error::from)?;
    let ck = Checkpoint::from_slice(&bytes)?;
    let corpus = datagen::read_jsonl(&args.corpus)?;

    let (src_vocab, tgt_vocab, max_len) = model::corpus_extents(&corpus);
    if src_vocab > ck.dims.src_vocab || tgt_vocab > ck.dims.tgt_vocab {
        return Err(CliError::Validation(format!(
            "vocab mismatch: corpus needs source {src_vocab} / target {tgt_vocab}, checkpoint has {} / {}",
            ck.dims.src_vocab, ck.dims.tgt_vocab
        )));
    }
    if max_len > ck.dims.max_positions {
        return Err(CliError::Validation(format!(
            "vocab mismatch: corpus references of length {max_len} exceed the checkpoint's {} positions",
            ck.dims.max_positions
        )));
    }

    let src: Vec<TokenSeq> = corpus
        .iter()
        .map(|ex| TokenSeq::new(ex.src.clone(), ck.dims.src_vocab))
        .collect::<Result<_, _>>()?;
    let lengths: Vec<usize> = corpus.iter().map(|ex| ex.refs[0].len()).collect();
    let outputs = model::decode(&ck.params, &src, &lengths, false)?;
    let refs: Vec<Vec<Vec<u32>>> = corpus.iter().map(|ex| ex.refs.clone()).collect();
    let report = eval::evaluate(&outputs, &refs, args.dedup)?;

    let report_path = args.out.join("report.json");
    let bytes = serde_json::to_vec_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    atomic_write(&report_path, &bytes)?;
    write_manifest(
        &args.out,
        &manifest(
            "eval",
            serde_json::json!({ "dedup": args.dedup }),
            ck.config.seed,
            &[("checkpoint", args.checkpoint.as_path()), ("corpus", args.corpus.as_path())],
            &[("report", &report_path)],
        ),
    )?;
    println!(
        "evaluated {} examples: repetition {:.4}, mode match {:.4}",
        report.n_examples, report.repetition_rate, report.mode_match_rate
    );
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> CliResult {
    let reports = match args.suite {
        SuiteArg::All => verify::run_all(args.seed),
        SuiteArg::Hungarian => vec![verify::suite_hungarian(args.trials, args.size, args.seed)],
        SuiteArg::Reduction => vec![verify::suite_reduction(args.trials, args.seed)],
        SuiteArg::Enumeration => vec![verify::suite_enumeration(args.trials, args.seed)],
        SuiteArg::Gradients => vec![verify::suite_gradients(args.trials.clamp(1, 20), args.seed)],
        SuiteArg::Truncation => vec![verify::suite_truncation(args.seed)],
        SuiteArg::Figure1 => vec![verify::suite_walkthrough()],
    };

    let mut all_passed = true;
    for r in &reports {
        let status = if r.passed() { "pass" } else { "FAIL" };
        println!("suite {}: {}/{} ok [{status}]", r.name, r.trials - r.failures, r.trials);
        for note in &r.notes {
            println!("  {note}");
        }
        all_passed &= r.passed();
    }

    if let Some(dir) = &args.out {
        let bytes =
            serde_json::to_vec_pretty(&reports).map_err(|e| CliError::Runtime(e.to_string()))?;
        let summary = dir.join("verify.json");
        atomic_write(&summary, &bytes)?;
        write_manifest(
            dir,
            &manifest(
                "verify",
                serde_json::json!({
                    "suite": format!("{:?}", args.suite),
                    "trials": args.trials,
                    "size": args.size,
                }),
                args.seed,
                &[],
                &[("summary", &summary)],
            ),
        )?;
    }

    if all_passed {
        Ok(())
    } else {
        Err(CliError::Runtime("verification failed".into()))
    }
}

fn cmd_bench(args: BenchArgs) -> CliResult {
    if args.reps < 30 {
        return Err(CliError::Validation(format!(
            "medians need at least 30 reps, got {}",
            args.reps
        )));
    }
    let rows = bench::run_all(args.reps, args.seed);
    let csv = bench::rows_to_csv(&rows);
    let csv_path = args.out.join("bench.csv");
    atomic_write(&csv_path, csv.as_bytes())?;

    if let Some(slope) = bench::hungarian_slope(&rows) {
        println!("solver log-log slope over {:?}: {slope:.2}", bench::LEN_GRID);
    }
    let pick = |n: usize| {
        rows.iter()
            .find(|r| r.kind == "loss" && r.n == n && r.len == 32 && r.batch == 32)
            .map(|r| r.median_ns)
    };
    if let (Some(n1), Some(n2)) = (pick(1), pick(2)) {
        println!(
            "loss eval at len 32, batch 32: N=1 {n1} ns, N=2 {n2} ns ({:.2}x)",
            n2 as f64 / n1 as f64
        );
    }

    write_manifest(
        &args.out,
        &manifest(
            "bench",
            serde_json::json!({ "reps": args.reps }),
            args.seed,
            &[],
            &[("table", &csv_path)],
        ),
    )?;
    println!("wrote {} rows to {}", rows.len(), csv_path.display());
    Ok(())
}

fn cmd_demo(args: DemoArgs) -> CliResult {
    let w = demo::bigram_walkthrough()?;
    println!("target: I ate pizza this afternoon");
    println!("bigram loss with N=2, truncation margin {}", w.margin);
    for p in &w.pairs {
        let status = if p.kept { "selected" } else { "truncated" };
        println!(
            "  Pos {},{}: \"{}\"  p={:.4}  {status}",
            p.window_start,
            p.window_start + 1,
            p.ngram_text,
            p.probability
        );
    }
    println!("kept loss = {:.4}", w.loss.value);

    if let Some(dir) = &args.out {
        #[derive(Serialize)]
        struct DemoPair {
            window_start: usize,
            ngram: String,
            probability: f64,
            kept: bool,
        }
        #[derive(Serialize)]
        struct DemoOut {
            margin: f64,
            loss: f64,
            pairs: Vec<DemoPair>,
        }
        let out = DemoOut {
            margin: w.margin,
            loss: w.loss.value,
            pairs: w
                .pairs
                .iter()
                .map(|p| DemoPair {
                    window_start: p.window_start,
                    ngram: p.ngram_text.clone(),
                    probability: p.probability,
                    kept: p.kept,
                })
                .collect(),
        };
        let bytes =
            serde_json::to_vec_pretty(&out).map_err(|e| CliError::Runtime(e.to_string()))?;
        let path = dir.join("demo.json");
        atomic_write(&path, &bytes)?;
        write_manifest(
            dir,
            &manifest("demo-figure1", serde_json::json!({}), 0, &[], &[("demo", &path)]),
        )?;
    }
    Ok(())
}
