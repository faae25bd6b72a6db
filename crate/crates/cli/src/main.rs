mod config;
mod output;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use skewtree::analytics::forest_expected_depth;
use skewtree::bench::{
    budget_choices, max_lambda_frequencies, pareto_rows, read_rows_from, run_grid, summarize,
    write_rows_to, ExperimentRow, GridConfig, Timing, Toolchain, DEFAULT_OPT_FLAGS,
    DEFAULT_REPETITIONS,
};
use skewtree::codegen::{emit_driver, emit_kernel, KernelStyle, DEFAULT_NESTING_LIMIT, PREDICT_FN};
use skewtree::dataset::{read_csv, Dataset, LabelColumn, DEFAULT_TEST_FRACTION};
use skewtree::harness::{driver_source, DEFAULT_REPS};
use skewtree::layout::{LayoutDocument, LayoutStrategy};
use skewtree::synthgen::{generate, Dependence, OutcomeModel, SynthConfig};
use skewtree::trainer::{train_forest, TrainParams};
use skewtree::tree::Forest;
use skewtree::tuner::{
    tune_lambda, write_trace_csv_to, TuneConfig, DEFAULT_LAMBDA_CAP, DEFAULT_SCHEDULE,
    DEFAULT_THRESHOLD,
};

use config::ConfigFile;
use output::{sibling, write_atomic, Manifest};

/// A failed command. Validation failures exit with 2, everything else
/// with 1.
#[derive(Debug)]
pub struct Failure {
    validation: bool,
    message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Failure {
            validation: true,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Failure {
            validation: false,
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        if self.validation {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<skewtree::Error> for Failure {
    fn from(e: skewtree::Error) -> Self {
        Failure {
            validation: e.is_validation(),
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "skewtree", version, propagate_version = true)]
#[command(about = "Decision trees and forests with a balance-regularized Gini criterion")]
struct Cli {
    /// TOML file with a table per subcommand; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a forest and write it as JSON.
    Train(TrainFlags),
    /// Generate a synthetic dataset and its origin-flag sidecar.
    Synth(SynthFlags),
    /// Walk the lambda ladder until expected depth stops moving.
    Tune(TuneFlags),
    /// Run the lambda x depth x trees x max-features x kernel grid.
    Bench(BenchFlags),
    /// Emit C kernel and driver sources for a trained forest.
    Codegen(CodegenFlags),
    /// Write a forest with its node-array layout order attached.
    Layout(LayoutFlags),
    /// Summaries, Pareto front and budget tables from a bench report.
    Report(ReportFlags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Synth(_) => "synth",
            Command::Tune(_) => "tune",
            Command::Bench(_) => "bench",
            Command::Codegen(_) => "codegen",
            Command::Layout(_) => "layout",
            Command::Report(_) => "report",
        }
    }
}

fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path)
        .map_err(|e| Failure::internal(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn load_dataset(path: &Path, label_col: &str) -> Result<Dataset, Failure> {
    let label: LabelColumn = label_col.parse().expect("infallible");
    let file = std::fs::File::open(path)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;
    read_csv(file, &label).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn load_forest(path: &Path) -> Result<Forest, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;
    Forest::from_json(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    write_rows_to(rows, &mut buf)?;
    Ok(buf)
}

fn parse<T: std::str::FromStr<Err = skewtree::Error>>(s: &str) -> Result<T, Failure> {
    s.parse().map_err(Failure::from)
}

// ---- train ----

#[derive(Args, Serialize)]
struct TrainFlags {
    /// Training CSV with a header row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Label column: `last`, a zero-based index, or a header name.
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Maximum depth; the root is depth 0.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
    /// Features considered per node (default: all).
    #[arg(long)]
    max_features: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bootstrap: Option<bool>,
    #[arg(long)]
    min_samples_split: Option<usize>,
    /// Keep a node as a leaf when its best split does not lower impurity.
    #[arg(long)]
    impurity_stop: Option<bool>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn default_label_col() -> String {
    "last".into()
}

fn default_true() -> bool {
    true
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSettings {
    data: PathBuf,
    #[serde(default = "default_label_col")]
    label_col: String,
    #[serde(default)]
    lambda: f64,
    #[serde(default = "TrainSettings::default_depth")]
    depth: usize,
    #[serde(default = "TrainSettings::default_trees")]
    trees: usize,
    #[serde(default)]
    max_features: Option<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_true")]
    bootstrap: bool,
    #[serde(default = "TrainSettings::default_min_samples_split")]
    min_samples_split: usize,
    #[serde(default = "default_true")]
    impurity_stop: bool,
    #[serde(default = "TrainSettings::default_out")]
    out: PathBuf,
}

impl TrainSettings {
    fn default_depth() -> usize {
        TrainParams::default().max_depth
    }
    fn default_trees() -> usize {
        TrainParams::default().n_trees
    }
    fn default_min_samples_split() -> usize {
        TrainParams::default().min_samples_split
    }
    fn default_out() -> PathBuf {
        "forest.json".into()
    }
}

fn train(cfg: &ConfigFile, flags: &TrainFlags) -> CmdResult {
    let s: TrainSettings = cfg.resolve("train", flags)?;
    let data = load_dataset(&s.data, &s.label_col)?;
    let params = TrainParams {
        max_depth: s.depth,
        max_features: s.max_features,
        lambda: s.lambda,
        n_trees: s.trees,
        bootstrap: s.bootstrap,
        seed: s.seed,
        min_samples_split: s.min_samples_split,
        min_impurity_decrease: s.impurity_stop.then_some(0.0),
    };
    let forest = train_forest(&data, &params)?;
    write_atomic(&s.out, forest.to_json().as_bytes())?;

    let mut manifest = Manifest::new("train", &s);
    manifest.input(&s.data, sha256_file(&s.data)?);
    manifest.output(&s.out);
    manifest.write(&sibling(&s.out, "manifest.json"))?;
    println!(
        "wrote {} ({} trees, expected depth {:.4})",
        s.out.display(),
        forest.trees.len(),
        forest_expected_depth(&forest)?
    );
    Ok(())
}

// ---- synth ----

#[derive(Args, Serialize)]
struct SynthFlags {
    /// independent, weakly_dependent or strongly_dependent.
    #[arg(long)]
    dependence: Option<String>,
    /// Outcome model: S1, S3 or S5.
    #[arg(long)]
    model: Option<String>,
    /// Mixture weight of the first feature's origin component.
    #[arg(long)]
    balance: Option<f64>,
    #[arg(long)]
    delta_mu: Option<f64>,
    /// Number of rows.
    #[arg(long)]
    num: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset CSV; origin flags go to `<stem>.origins.csv` beside it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthSettings {
    #[serde(default = "SynthSettings::default_dependence")]
    dependence: String,
    #[serde(default = "SynthSettings::default_model")]
    model: String,
    #[serde(default = "SynthSettings::default_balance")]
    balance: f64,
    #[serde(default = "SynthSettings::default_delta_mu")]
    delta_mu: f64,
    #[serde(default = "SynthSettings::default_num")]
    num: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "SynthSettings::default_out")]
    out: PathBuf,
}

impl SynthSettings {
    fn default_dependence() -> String {
        "independent".into()
    }
    fn default_model() -> String {
        "S3".into()
    }
    fn default_balance() -> f64 {
        0.9
    }
    fn default_delta_mu() -> f64 {
        8.0
    }
    fn default_num() -> usize {
        500
    }
    fn default_out() -> PathBuf {
        "synth.csv".into()
    }
}

fn origins_csv(data: &Dataset) -> Vec<u8> {
    let mut text = String::from("o1,o2,o3,o4,o5\n");
    for flags in data.origins().unwrap_or_default() {
        let cells: Vec<&str> = flags.iter().map(|&f| if f { "1" } else { "0" }).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    text.into_bytes()
}

fn synth(cfg: &ConfigFile, flags: &SynthFlags) -> CmdResult {
    let s: SynthSettings = cfg.resolve("synth", flags)?;
    let config = SynthConfig {
        dependence: parse::<Dependence>(&s.dependence)?,
        model: parse::<OutcomeModel>(&s.model)?,
        balance: s.balance,
        delta_mu: s.delta_mu,
        num: s.num,
        seed: s.seed,
    };
    let data = generate(&config)?;
    let mut buf = Vec::new();
    data.write_csv_to(&mut buf)?;
    write_atomic(&s.out, &buf)?;
    let origins_path = sibling(&s.out, "origins.csv");
    write_atomic(&origins_path, &origins_csv(&data))?;

    let mut manifest = Manifest::new("synth", &s);
    manifest.output(&s.out);
    manifest.output(&origins_path);
    manifest.write(&sibling(&s.out, "manifest.json"))?;
    println!(
        "wrote {} ({} rows, fingerprint {})",
        s.out.display(),
        data.n_rows(),
        data.fingerprint()
    );
    Ok(())
}

// ---- tune ----

#[derive(Args, Serialize)]
struct TuneFlags {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    max_features: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bootstrap: Option<bool>,
    /// Stop once expected depth changes by less than this fraction.
    #[arg(long)]
    threshold: Option<f64>,
    /// Largest lambda tried.
    #[arg(long)]
    cap: Option<f64>,
    /// Increasing lambda ladder starting at 0, comma separated.
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<f64>>,
    /// Stop before a lambda whose mean accuracy drop exceeds this.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
    /// Trace CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TuneSettings {
    data: PathBuf,
    #[serde(default = "default_label_col")]
    label_col: String,
    #[serde(default = "TuneSettings::default_depth")]
    depth: usize,
    #[serde(default = "TuneSettings::default_trees")]
    trees: usize,
    #[serde(default)]
    max_features: Option<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_true")]
    bootstrap: bool,
    #[serde(default = "TuneSettings::default_threshold")]
    threshold: f64,
    #[serde(default = "TuneSettings::default_cap")]
    cap: f64,
    #[serde(default = "TuneSettings::default_schedule")]
    schedule: Vec<f64>,
    #[serde(default)]
    budget: Option<f64>,
    #[serde(default = "TuneSettings::default_repetitions")]
    repetitions: usize,
    #[serde(default = "default_test_fraction")]
    test_fraction: f64,
    #[serde(default)]
    split_seed: u64,
    #[serde(default = "TuneSettings::default_out")]
    out: PathBuf,
}

fn default_test_fraction() -> f64 {
    DEFAULT_TEST_FRACTION
}

impl TuneSettings {
    fn default_depth() -> usize {
        15
    }
    fn default_trees() -> usize {
        16
    }
    fn default_threshold() -> f64 {
        DEFAULT_THRESHOLD
    }
    fn default_cap() -> f64 {
        DEFAULT_LAMBDA_CAP
    }
    fn default_schedule() -> Vec<f64> {
        DEFAULT_SCHEDULE.to_vec()
    }
    fn default_repetitions() -> usize {
        TuneConfig::default().repetitions
    }
    fn default_out() -> PathBuf {
        "trace.csv".into()
    }
}

fn tune(cfg: &ConfigFile, flags: &TuneFlags) -> CmdResult {
    let s: TuneSettings = cfg.resolve("tune", flags)?;
    let data = load_dataset(&s.data, &s.label_col)?;
    let params = TrainParams {
        max_depth: s.depth,
        max_features: s.max_features,
        n_trees: s.trees,
        bootstrap: s.bootstrap,
        seed: s.seed,
        ..TrainParams::default()
    };
    params.validate(data.n_features())?;
    let tune_cfg = TuneConfig {
        threshold: s.threshold,
        schedule: s.schedule.clone(),
        lambda_cap: s.cap,
        accuracy_budget: s.budget,
        repetitions: s.repetitions,
        test_fraction: s.test_fraction,
        split_seed: s.split_seed,
    };
    let trace = tune_lambda(&data, &params, &tune_cfg)?;
    let mut buf = Vec::new();
    write_trace_csv_to(&trace, &mut buf)?;
    write_atomic(&s.out, &buf)?;

    let mut manifest = Manifest::new("tune", &s);
    manifest.input(&s.data, sha256_file(&s.data)?);
    manifest.output(&s.out);
    manifest.write(&sibling(&s.out, "manifest.json"))?;
    println!(
        "lambda = {} ({}, {} steps)",
        trace.chosen_lambda,
        trace.stop_reason,
        trace.entries.len()
    );
    Ok(())
}

// ---- bench ----

#[derive(Args, Serialize)]
struct BenchFlags {
    /// Dataset CSV; repeat for several. Named by file stem.
    #[arg(long)]
    data: Option<Vec<PathBuf>>,
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    trees: Option<Vec<usize>>,
    /// Empty means the recommended grid for each dataset.
    #[arg(long, value_delimiter = ',')]
    max_features: Option<Vec<usize>>,
    /// `style:layout` pairs, e.g. `ifelse:bfs_default,native:probability_greedy`.
    #[arg(long, value_delimiter = ',')]
    kernels: Option<Vec<String>>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Timed passes over the test set per measurement.
    #[arg(long)]
    timing_reps: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    bootstrap: Option<bool>,
    #[arg(long)]
    nesting_limit: Option<usize>,
    /// auto, compiled or interpreter.
    #[arg(long)]
    timing: Option<String>,
    /// C compiler; overrides discovery.
    #[arg(long)]
    cc: Option<PathBuf>,
    /// Optimization flags for the C compiler.
    #[arg(long, allow_hyphen_values = true)]
    cflags: Option<String>,
    /// Report CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchSettings {
    data: Vec<PathBuf>,
    #[serde(default = "default_label_col")]
    label_col: String,
    #[serde(default = "BenchSettings::default_lambdas")]
    lambdas: Vec<f64>,
    #[serde(default = "BenchSettings::default_depths")]
    depths: Vec<usize>,
    #[serde(default = "BenchSettings::default_trees")]
    trees: Vec<usize>,
    #[serde(default)]
    max_features: Vec<usize>,
    #[serde(default = "BenchSettings::default_kernels")]
    kernels: Vec<String>,
    #[serde(default = "BenchSettings::default_repetitions")]
    repetitions: usize,
    #[serde(default = "BenchSettings::default_timing_reps")]
    timing_reps: usize,
    #[serde(default = "default_test_fraction")]
    test_fraction: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    split_seed: u64,
    #[serde(default = "default_true")]
    bootstrap: bool,
    #[serde(default = "BenchSettings::default_nesting_limit")]
    nesting_limit: usize,
    #[serde(default = "BenchSettings::default_timing")]
    timing: String,
    #[serde(default)]
    cc: Option<PathBuf>,
    #[serde(default)]
    cflags: Option<String>,
    #[serde(default = "BenchSettings::default_out")]
    out: PathBuf,
}

impl BenchSettings {
    fn default_lambdas() -> Vec<f64> {
        GridConfig::default().lambdas
    }
    fn default_depths() -> Vec<usize> {
        GridConfig::default().depths
    }
    fn default_trees() -> Vec<usize> {
        GridConfig::default().n_trees
    }
    fn default_kernels() -> Vec<String> {
        GridConfig::default()
            .kernels
            .iter()
            .map(|(s, l)| format!("{s}:{l}"))
            .collect()
    }
    fn default_repetitions() -> usize {
        DEFAULT_REPETITIONS
    }
    fn default_timing_reps() -> usize {
        DEFAULT_REPS
    }
    fn default_nesting_limit() -> usize {
        DEFAULT_NESTING_LIMIT
    }
    fn default_timing() -> String {
        "auto".into()
    }
    fn default_out() -> PathBuf {
        "report.csv".into()
    }
}

fn parse_kernel(spec: &str) -> Result<(KernelStyle, LayoutStrategy), Failure> {
    match spec.split_once(':') {
        Some((style, layout)) => Ok((parse(style.trim())?, parse(layout.trim())?)),
        None => Ok((parse(spec.trim())?, LayoutStrategy::BfsDefault)),
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn resolve_timing(s: &BenchSettings) -> Result<Timing, Failure> {
    let toolchain = || -> Result<Toolchain, Failure> {
        let mut tc = match &s.cc {
            Some(cc) => Toolchain::with_compiler(cc),
            None => Toolchain::discover()?,
        };
        if let Some(flags) = &s.cflags {
            tc.cflags = flags.split_whitespace().map(str::to_string).collect();
        }
        Ok(tc)
    };
    match s.timing.as_str() {
        "interpreter" => Ok(Timing::Interpreter),
        "compiled" => Ok(Timing::Compiled(toolchain()?)),
        "auto" => Ok(toolchain().map_or(Timing::Interpreter, Timing::Compiled)),
        other => Err(Failure::validation(format!(
            "unknown timing `{other}`; expected auto, compiled or interpreter"
        ))),
    }
}

#[derive(Serialize)]
struct BenchManifestConfig<'a> {
    #[serde(flatten)]
    settings: &'a BenchSettings,
    compiler: Option<String>,
    compiler_flags: Option<String>,
}

fn bench(cfg: &ConfigFile, flags: &BenchFlags) -> CmdResult {
    let s: BenchSettings = cfg.resolve("bench", flags)?;
    if s.data.is_empty() {
        return Err(Failure::validation(
            "bench: at least one --data file is required",
        ));
    }
    let mut names = BTreeSet::new();
    let mut datasets = Vec::with_capacity(s.data.len());
    for path in &s.data {
        let name = dataset_name(path);
        if !names.insert(name.clone()) {
            return Err(Failure::validation(format!(
                "bench: two datasets are named `{name}`"
            )));
        }
        datasets.push((name, load_dataset(path, &s.label_col)?));
    }
    let grid = GridConfig {
        lambdas: s.lambdas.clone(),
        depths: s.depths.clone(),
        n_trees: s.trees.clone(),
        max_features: s.max_features.clone(),
        kernels: s
            .kernels
            .iter()
            .map(|k| parse_kernel(k))
            .collect::<Result<_, _>>()?,
        repetitions: s.repetitions,
        test_fraction: s.test_fraction,
        split_seed: s.split_seed,
        seed: s.seed,
        bootstrap: s.bootstrap,
        timing_reps: s.timing_reps,
        nesting_limit: s.nesting_limit,
    };
    grid.validate()?;
    let timing = resolve_timing(&s)?;
    let rows = run_grid(&datasets, &grid, &timing)?;
    write_atomic(&s.out, &csv_bytes(&rows)?)?;

    let (compiler, compiler_flags) = match &timing {
        Timing::Compiled(tc) => (Some(tc.cc.display().to_string()), Some(tc.cflags.join(" "))),
        Timing::Interpreter => (None, None),
    };
    let mut manifest = Manifest::new(
        "bench",
        BenchManifestConfig {
            settings: &s,
            compiler,
            compiler_flags,
        },
    );
    for path in &s.data {
        manifest.input(path, sha256_file(path)?);
    }
    manifest.output(&s.out);
    manifest.write(&sibling(&s.out, "manifest.json"))?;
    let source = match timing {
        Timing::Compiled(_) => "compiled kernels",
        Timing::Interpreter => "interpreter",
    };
    println!(
        "wrote {} ({} rows, timed with {source})",
        s.out.display(),
        rows.len()
    );
    Ok(())
}

// ---- codegen ----

#[derive(Args, Serialize)]
struct CodegenFlags {
    /// Forest JSON.
    #[arg(long)]
    forest: Option<PathBuf>,
    /// ifelse or native.
    #[arg(long)]
    style: Option<String>,
    /// Node-array order for the native style.
    #[arg(long)]
    layout: Option<String>,
    /// If-else trees deeper than this are emitted natively instead.
    #[arg(long)]
    nesting_limit: Option<usize>,
    /// Test CSV the driver will read; checked against the forest's features.
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[arg(long)]
    label_col: Option<String>,
    /// Timed passes in the driver.
    #[arg(long)]
    reps: Option<usize>,
    /// Receives kernel.c and driver.c.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodegenSettings {
    forest: PathBuf,
    #[serde(default = "CodegenSettings::default_style")]
    style: String,
    #[serde(default = "CodegenSettings::default_layout")]
    layout: String,
    #[serde(default = "BenchSettings::default_nesting_limit")]
    nesting_limit: usize,
    #[serde(default)]
    test_data: Option<PathBuf>,
    #[serde(default = "default_label_col")]
    label_col: String,
    #[serde(default = "BenchSettings::default_timing_reps")]
    reps: usize,
    #[serde(default = "CodegenSettings::default_out_dir")]
    out_dir: PathBuf,
}

impl CodegenSettings {
    fn default_style() -> String {
        "ifelse".into()
    }
    fn default_layout() -> String {
        "bfs_default".into()
    }
    fn default_out_dir() -> PathBuf {
        "kernels".into()
    }
}

fn codegen(cfg: &ConfigFile, flags: &CodegenFlags) -> CmdResult {
    let s: CodegenSettings = cfg.resolve("codegen", flags)?;
    let forest = load_forest(&s.forest)?;
    let style: KernelStyle = parse(&s.style)?;
    let layout: LayoutStrategy = parse(&s.layout)?;
    let mut bundle = emit_kernel(&forest, style, layout, s.nesting_limit)?;
    match &s.test_data {
        Some(path) => {
            let test = load_dataset(path, &s.label_col)?;
            bundle = emit_driver(bundle, &test, s.reps)?;
        }
        None => {
            bundle.harness_source = driver_source(
                &bundle.kernel_style.to_string(),
                s.reps,
                bundle.n_features,
                bundle.n_classes,
                PREDICT_FN,
            )?;
        }
    }
    let kernel_path = s.out_dir.join("kernel.c");
    let driver_path = s.out_dir.join("driver.c");
    write_atomic(&kernel_path, bundle.kernel_source.as_bytes())?;
    write_atomic(&driver_path, bundle.harness_source.as_bytes())?;

    let mut manifest = Manifest::new("codegen", &s);
    manifest.input(&s.forest, sha256_file(&s.forest)?);
    if let Some(path) = &s.test_data {
        manifest.input(path, sha256_file(path)?);
    }
    manifest.output(&kernel_path);
    manifest.output(&driver_path);
    manifest.write(&s.out_dir.join("codegen.manifest.json"))?;
    if bundle.kernel_style != style {
        eprintln!(
            "codegen: trees exceed nesting limit {}; emitted {} instead",
            s.nesting_limit, bundle.kernel_style
        );
    }
    println!(
        "wrote {} and {} ({} kernel); build with: cc {} {} {} -o driver",
        kernel_path.display(),
        driver_path.display(),
        bundle.kernel_style,
        DEFAULT_OPT_FLAGS,
        kernel_path.display(),
        driver_path.display()
    );
    Ok(())
}

// ---- layout ----

#[derive(Args, Serialize)]
struct LayoutFlags {
    /// Forest JSON.
    #[arg(long)]
    forest: Option<PathBuf>,
    /// bfs_default or probability_greedy.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutSettings {
    forest: PathBuf,
    #[serde(default = "LayoutSettings::default_strategy")]
    strategy: String,
    #[serde(default = "LayoutSettings::default_out")]
    out: PathBuf,
}

impl LayoutSettings {
    fn default_strategy() -> String {
        "probability_greedy".into()
    }
    fn default_out() -> PathBuf {
        "layout.json".into()
    }
}

fn layout(cfg: &ConfigFile, flags: &LayoutFlags) -> CmdResult {
    let s: LayoutSettings = cfg.resolve("layout", flags)?;
    let forest = load_forest(&s.forest)?;
    let doc = LayoutDocument::new(forest, parse(&s.strategy)?);
    write_atomic(&s.out, doc.to_json().as_bytes())?;

    let mut manifest = Manifest::new("layout", &s);
    manifest.input(&s.forest, sha256_file(&s.forest)?);
    manifest.output(&s.out);
    manifest.write(&sibling(&s.out, "manifest.json"))?;
    println!("wrote {}", s.out.display());
    Ok(())
}

// ---- report ----

#[derive(Args, Serialize)]
struct ReportFlags {
    /// Report CSV written by `bench`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Largest acceptable mean accuracy drop.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportSettings {
    #[serde(default = "ReportSettings::default_input")]
    input: PathBuf,
    #[serde(default = "ReportSettings::default_budget")]
    budget: f64,
    #[serde(default = "ReportSettings::default_out_dir")]
    out_dir: PathBuf,
}

impl ReportSettings {
    fn default_input() -> PathBuf {
        "report.csv".into()
    }
    fn default_budget() -> f64 {
        0.05
    }
    fn default_out_dir() -> PathBuf {
        "report".into()
    }
}

fn report(cfg: &ConfigFile, flags: &ReportFlags) -> CmdResult {
    let s: ReportSettings = cfg.resolve("report", flags)?;
    if s.budget.is_nan() || s.budget < 0.0 {
        return Err(Failure::validation("report: budget must be >= 0"));
    }
    let file = std::fs::File::open(&s.input)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", s.input.display())))?;
    let rows: Vec<ExperimentRow> = read_rows_from(file)
        .map_err(|e| Failure::validation(format!("{}: {e}", s.input.display())))?;
    if rows.is_empty() {
        return Err(Failure::validation(format!(
            "{} has no rows",
            s.input.display()
        )));
    }
    let summary = summarize(&rows);
    let pareto = pareto_rows(&summary);
    let choices = budget_choices(&summary, s.budget)?;
    let frequencies = max_lambda_frequencies(&choices);

    let outputs = [
        ("summary.csv", csv_bytes(&summary)?),
        ("pareto.csv", csv_bytes(&pareto)?),
        ("best_lambda.csv", csv_bytes(&choices)?),
        ("max_lambda_frequency.csv", csv_bytes(&frequencies)?),
    ];
    let mut manifest = Manifest::new("report", &s);
    manifest.input(&s.input, sha256_file(&s.input)?);
    for (name, bytes) in &outputs {
        let path = s.out_dir.join(name);
        write_atomic(&path, bytes)?;
        manifest.output(&path);
    }
    manifest.write(&s.out_dir.join("report.manifest.json"))?;
    println!(
        "wrote {} ({} configurations, {} on the Pareto front)",
        s.out_dir.display(),
        summary.len(),
        pareto.len()
    );
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if let Some(jobs) = cli.jobs.or(cfg.jobs) {
        if jobs == 0 {
            return Err(Failure::validation("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::internal(e.to_string()))?;
    }
    match &cli.command {
        Command::Train(f) => train(&cfg, f),
        Command::Synth(f) => synth(&cfg, f),
        Command::Tune(f) => tune(&cfg, f),
        Command::Bench(f) => bench(&cfg, f),
        Command::Codegen(f) => codegen(&cfg, f),
        Command::Layout(f) => layout(&cfg, f),
        Command::Report(f) => report(&cfg, f),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("skewtree {name}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
