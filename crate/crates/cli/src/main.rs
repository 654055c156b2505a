//! `wod` — weighted outlier detection from the command line.
//!
//! Eight subcommands cover the pipeline end to end: `transform` (preprocess
//! and normalize a CSV), `fit` / `score` (train a model, apply it later),
//! `detect` (fit and score in one pass), `eval` (cross-validation), `tune`
//! (grid search), `stream` (windowed detection over stdin), and `synth` (the
//! labeled synthetic benchmark).
//!
//! Configuration comes from a TOML file (`--config`, or the `WOD_CONFIG`
//! environment variable) plus repeatable `--set path=value` overrides. JSON
//! artifacts are canonical — sorted keys, fixed float formatting — and all
//! file output is written atomically, so identical inputs and seed produce
//! byte-identical outputs and a failing run never leaves a partial file.
//! Exit codes: 1 for configuration errors, 2 for data errors, 3 for numeric
//! failures, each with a one-line diagnostic naming the failing stage.
//! Timing goes to stderr to keep the artifacts deterministic.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wod_core::config::{load_config, with_overrides, PipelineConfig, WeightScheme};
use wod_core::dataset::{load_csv_path, Dataset, LoadOptions};
use wod_core::error::{Error, Result};
use wod_core::evaluation::{confusion, cross_validate, grid_search, roc_auc};
use wod_core::pipeline::{preprocess, run_pipeline, FittedPipeline, PipelineModel};
use wod_core::report::{canonical_json, write_atomic, write_atomic_bytes, DetectReport, EvalReport, TuneReport};
use wod_core::streaming::{StreamConfig, StreamDetector, WindowMode};
use wod_core::synth::{generate, SynthSpec};
use wod_core::threshold::DetectionResult;

#[derive(Parser)]
#[command(name = "wod", version, about = "Weighted outlier detection", disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess and normalize a CSV, writing the transformed rows back out
    Transform(TransformArgs),
    /// Fit the pipeline on a CSV and write the model as JSON
    Fit(FitArgs),
    /// Apply a fitted model to new data
    Score(ScoreArgs),
    /// Fit and score one dataset in a single pass
    Detect(DetectArgs),
    /// Cross-validate the pipeline on labeled data
    Eval(EvalArgs),
    /// Grid-search config parameters with cross-validation
    Tune(TuneArgs),
    /// Run windowed detection over rows arriving on stdin
    Stream(StreamArgs),
    /// Generate the labeled synthetic benchmark as CSV
    Synth(SynthArgs),
}

#[derive(Args)]
struct ConfigOpts {
    /// TOML configuration file (default: the WOD_CONFIG environment variable)
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set cluster.k=3 (repeatable)
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
    /// Run combinations the pipeline would otherwise refuse
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct InputOpts {
    /// Input CSV file
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Input has no header row; columns are addressed as f0, f1, ...
    #[arg(long)]
    no_header: bool,
    /// Column holding 0/1 (or true/false) outlier labels
    #[arg(long, value_name = "NAME")]
    label_column: Option<String>,
    /// Column holding externally supplied instance weights
    /// (requires weighting.scheme = external)
    #[arg(long, value_name = "NAME")]
    weights_column: Option<String>,
}

#[derive(Args)]
struct TransformArgs {
    #[command(flatten)]
    config: ConfigOpts,
    #[command(flatten)]
    input: InputOpts,
    /// Output CSV (stdout when omitted)
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    config: ConfigOpts,
    #[command(flatten)]
    input: InputOpts,
    /// Where to write the model JSON
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Model JSON produced by `fit` (carries its own configuration)
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Override one config key on top of the model's configuration
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
    /// Run combinations the pipeline would otherwise refuse
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    input: InputOpts,
    /// Per-row scores CSV (skipped when omitted)
    #[arg(long, value_name = "FILE")]
    scores: Option<PathBuf>,
    /// Report JSON (stdout when omitted)
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    config: ConfigOpts,
    #[command(flatten)]
    input: InputOpts,
    /// Per-row scores CSV (skipped when omitted)
    #[arg(long, value_name = "FILE")]
    scores: Option<PathBuf>,
    /// Report JSON (stdout when omitted)
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigOpts,
    #[command(flatten)]
    input: InputOpts,
    /// Number of folds (default: tune.folds from the config)
    #[arg(long)]
    folds: Option<usize>,
    /// Report JSON (stdout when omitted)
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    config: ConfigOpts,
    #[command(flatten)]
    input: InputOpts,
    /// Evaluate a seeded random sample of this many grid cells instead of
    /// the full product
    #[arg(long, value_name = "N")]
    sample: Option<usize>,
    /// Report JSON (stdout when omitted)
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Tumbling,
    Sliding,
}

#[derive(Args)]
struct StreamArgs {
    #[command(flatten)]
    config: ConfigOpts,
    /// Rows per window
    #[arg(long, default_value_t = 256)]
    capacity: usize,
    /// Window eviction mode
    #[arg(long, value_enum, default_value = "tumbling")]
    mode: ModeArg,
    /// Rows dropped after each sliding window (ignored when tumbling)
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 950)]
    inliers: usize,
    #[arg(long, default_value_t = 50)]
    outliers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV (stdout when omitted)
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

fn main() -> std::process::ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { std::process::ExitCode::SUCCESS } else { std::process::ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("wod: {err}");
            std::process::ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Transform(args) => cmd_transform(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Score(args) => cmd_score(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Stream(args) => cmd_stream(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

/// Effective config: file (flag or WOD_CONFIG) + `--set` overrides, validated.
fn effective_config(opts: &ConfigOpts) -> Result<PipelineConfig> {
    let path = opts
        .config
        .clone()
        .or_else(|| std::env::var_os("WOD_CONFIG").map(PathBuf::from));
    let overrides = parse_set_flags(&opts.set)?;
    let cfg = load_config(path.as_deref(), &overrides)?;
    cfg.validate(opts.force)?;
    Ok(cfg)
}

fn parse_set_flags(flags: &[String]) -> Result<Vec<(String, String)>> {
    flags
        .iter()
        .map(|entry| {
            entry
                .split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .filter(|(k, _)| !k.is_empty())
                .ok_or_else(|| Error::config("cli", format!("--set expects PATH=VALUE, got '{entry}'")))
        })
        .collect()
}

struct LoadedInput {
    data: Dataset,
    weights: Option<Vec<f64>>,
}

/// Load the input CSV and apply the preprocessing the config asks for. Also
/// enforces the weight-column contract: the column is required by (and only
/// meaningful for) `weighting.scheme = external`, and it cannot be combined
/// with preprocessing that drops rows, which would desynchronize the two.
fn read_input(opts: &InputOpts, cfg: &PipelineConfig) -> Result<LoadedInput> {
    if opts.weights_column.is_some() && cfg.weighting.scheme != WeightScheme::External {
        return Err(Error::config(
            "cli",
            "--weights-column is only meaningful with weighting.scheme = external",
        ));
    }
    let drops_rows = cfg.preprocess.dedupe || cfg.preprocess.impute == wod_core::ImputeStrategy::DropRows;
    if opts.weights_column.is_some() && drops_rows {
        return Err(Error::config(
            "cli",
            "--weights-column cannot be combined with row-dropping preprocessing \
             (preprocess.dedupe or preprocess.impute = drop_rows); clean the data first",
        ));
    }
    let load = LoadOptions {
        has_header: !opts.no_header,
        label_column: opts.label_column.clone(),
        weight_column: opts.weights_column.clone(),
    };
    let loaded = load_csv_path(&opts.input, &load)?;
    let data = preprocess(&loaded.dataset, &cfg.preprocess)?;
    Ok(LoadedInput { data, weights: loaded.weights })
}

fn emit_timing(stage: &str, start: Instant) {
    eprintln!("wod: timing: {stage} {:.1}ms", start.elapsed().as_secs_f64() * 1e3);
}

/// Write a JSON artifact to a file, or to stdout when no path was given.
fn emit_json(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn emit_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_atomic_bytes(p, bytes),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

/// The per-row `row_id,score,flag` CSV.
fn scores_csv(data: &Dataset, result: &DetectionResult) -> String {
    let mut out = String::from("row_id,score,flag\n");
    for (i, id) in data.row_ids().iter().enumerate() {
        out.push_str(id);
        out.push(',');
        out.push_str(&result.scores.get(i).to_string());
        out.push(',');
        out.push_str(if result.flags[i] { "1\n" } else { "0\n" });
    }
    out
}

/// Attach confusion metrics (and AUC when both classes appear) to a report
/// for labeled data.
fn attach_metrics(report: &mut DetectReport, data: &Dataset, result: &DetectionResult) -> Result<()> {
    if let Some(labels) = data.labels() {
        let mut metrics = confusion(&result.flags, labels)?;
        if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
            metrics.auc = Some(roc_auc(result.scores.as_slice(), labels)?);
        }
        report.metrics = Some(metrics);
    }
    Ok(())
}

fn cmd_detect(args: DetectArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = effective_config(&args.config)?;
    let input = read_input(&args.input, &cfg)?;
    emit_timing("load", start);

    let fit_start = Instant::now();
    let run = run_pipeline(&input.data, &cfg, cfg.cluster_base_seed(), input.weights.as_deref())?;
    emit_timing("pipeline", fit_start);

    let mut report = DetectReport::new("detect", &cfg, &input.data, &run.result);
    report.cluster_iterations = Some(run.fitted.cluster.iterations);
    report.cluster_converged = Some(run.fitted.cluster.converged);
    report.cluster_objective = Some(run.fitted.cluster.objective());
    attach_metrics(&mut report, &input.data, &run.result)?;

    let write_start = Instant::now();
    if let Some(path) = &args.scores {
        write_atomic_bytes(path, scores_csv(&input.data, &run.result).as_bytes())?;
    }
    emit_json(args.report.as_deref(), &canonical_json(&report)?)?;
    emit_timing("write", write_start);
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = effective_config(&args.config)?;
    let input = read_input(&args.input, &cfg)?;
    emit_timing("load", start);

    let fit_start = Instant::now();
    let fitted = FittedPipeline::fit(&input.data, &cfg, cfg.cluster_base_seed(), input.weights.as_deref())?;
    emit_timing("fit", fit_start);

    let model = PipelineModel::new(cfg, fitted);
    write_atomic(&args.model, &canonical_json(&model)?)?;
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let start = Instant::now();
    let text = std::fs::read_to_string(&args.model)
        .map_err(|e| Error::data("model", format!("cannot read {}: {e}", args.model.display())))?;
    let model = PipelineModel::from_json(&text)?;
    let overrides = parse_set_flags(&args.set)?;
    let cfg = if overrides.is_empty() {
        model.config.clone()
    } else {
        let values: Vec<(String, toml::Value)> = overrides
            .iter()
            .map(|(k, v)| (k.clone(), parse_toml_scalar(v)))
            .collect();
        with_overrides(&model.config, &values)?
    };
    cfg.validate(args.force)?;
    let input = read_input(&args.input, &cfg)?;
    emit_timing("load", start);

    let score_start = Instant::now();
    let detection = model.pipeline.detect(&input.data, &cfg, input.weights.as_deref())?;
    emit_timing("score", score_start);

    let mut report = DetectReport::new("score", &cfg, &input.data, &detection.result);
    report.model_ref = Some(args.model.display().to_string());
    attach_metrics(&mut report, &input.data, &detection.result)?;

    let write_start = Instant::now();
    if let Some(path) = &args.scores {
        write_atomic_bytes(path, scores_csv(&input.data, &detection.result).as_bytes())?;
    }
    emit_json(args.report.as_deref(), &canonical_json(&report)?)?;
    emit_timing("write", write_start);
    Ok(())
}

/// `--set` values reuse TOML scalar syntax, like the config loader.
fn parse_toml_scalar(value: &str) -> toml::Value {
    let wrapped = format!("v = {value}");
    if let Ok(table) = toml::from_str::<toml::Table>(&wrapped) {
        if let Some(v) = table.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(value.to_string())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = effective_config(&args.config)?;
    let input = read_input(&args.input, &cfg)?;
    emit_timing("load", start);

    let tune = cfg.tune.clone().unwrap_or_default();
    let folds = args.folds.unwrap_or(tune.folds);

    let cv_start = Instant::now();
    let cv = cross_validate(&input.data, &cfg, folds, tune.seed, input.weights.as_deref())?;
    emit_timing("cross-validation", cv_start);

    let report = EvalReport {
        command: "eval".to_string(),
        config: cfg,
        dataset: wod_core::report::DatasetSummary::of(&input.data),
        folds,
        seed: tune.seed,
        cv,
    };
    emit_json(args.report.as_deref(), &canonical_json(&report)?)
}

fn cmd_tune(args: TuneArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = effective_config(&args.config)?;
    let tune = cfg.tune.clone().ok_or_else(|| {
        Error::config("cli", "tune needs a [tune] section with a grid; add one or use --set tune.grid.<path>=[...]")
    })?;
    let input = read_input(&args.input, &cfg)?;
    emit_timing("load", start);

    let search_start = Instant::now();
    let grid = grid_search(&input.data, &cfg, &tune, input.weights.as_deref(), args.sample, args.config.force)?;
    emit_timing("grid-search", search_start);

    let report = TuneReport {
        command: "tune".to_string(),
        config: cfg,
        dataset: wod_core::report::DatasetSummary::of(&input.data),
        grid,
    };
    emit_json(args.report.as_deref(), &canonical_json(&report)?)
}

fn cmd_stream(args: StreamArgs) -> Result<()> {
    let cfg = effective_config(&args.config)?;
    let mode = match args.mode {
        ModeArg::Tumbling => WindowMode::Tumbling,
        ModeArg::Sliding => WindowMode::Sliding,
    };
    let stream_cfg = StreamConfig { capacity: args.capacity, mode, stride: args.stride, pipeline: cfg };
    let mut detector = StreamDetector::new(stream_cfg, args.config.force)?;

    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| Error::data("streaming", format!("cannot read stdin: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_stream_row(&line, detector.rows_seen())?;
        if let Some(verdict) = detector.push(&row)? {
            writeln!(out, "{}", canonical_json(&verdict)?)?;
        }
    }
    let outcome = detector.flush()?;
    if let Some(verdict) = outcome.verdict {
        writeln!(out, "{}", canonical_json(&verdict)?)?;
    }
    if outcome.discarded > 0 {
        eprintln!("wod: stream: {} trailing rows were too few to refit on and went unscored", outcome.discarded);
    }
    out.flush()?;
    Ok(())
}

fn parse_stream_row(line: &str, row_number: u64) -> Result<Vec<f64>> {
    line.split(',')
        .enumerate()
        .map(|(col, cell)| {
            cell.trim().parse::<f64>().map_err(|_| {
                Error::data(
                    "streaming",
                    format!("stream row {row_number} column {col}: '{}' is not a number", cell.trim()),
                )
            })
        })
        .collect()
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec { inliers: args.inliers, outliers: args.outliers, seed: args.seed };
    let data = generate(&spec)?;
    let mut bytes = Vec::new();
    data.write_csv(&mut bytes, "label")?;
    emit_bytes(args.output.as_deref(), &bytes)
}

fn cmd_transform(args: TransformArgs) -> Result<()> {
    if args.input.weights_column.is_some() {
        return Err(Error::config("cli", "transform does not accept a weights column"));
    }
    let start = Instant::now();
    let cfg = effective_config(&args.config)?;
    let input = read_input(&args.input, &cfg)?;
    emit_timing("load", start);

    let normalizer = wod_core::normalize::fit_normalizer(&input.data, cfg.normalize.method)?;
    let transformed = wod_core::normalize::apply_normalizer(&input.data, &normalizer)?;

    let label_name = args.input.label_column.as_deref().unwrap_or("label");
    let mut bytes = Vec::new();
    transformed.write_csv(&mut bytes, label_name)?;
    emit_bytes(args.output.as_deref(), &bytes)
}
