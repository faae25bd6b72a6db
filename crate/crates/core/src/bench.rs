//! Experiment grid, inference timing and report tables.
//!
//! Training runs in parallel; every timing measurement runs on the calling
//! thread, one at a time. Compiled kernels are timed when a C compiler is
//! found, otherwise the interpreter stands in and rows are marked
//! `timing_source=interpreter`.

use std::collections::{BTreeMap, HashMap};
use std::hint::black_box;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{balanced_accuracy, forest_expected_depth};
use crate::codegen::{emit_driver, emit_kernel, EmittedBundle, KernelStyle, DEFAULT_NESTING_LIMIT};
use crate::dataset::{repeated_splits, Dataset, SplitPair, DEFAULT_TEST_FRACTION};
use crate::error::{Error, Result};
use crate::harness::DEFAULT_REPS;
use crate::layout::{FlatForest, LayoutStrategy};
use crate::trainer::{max_features_grid, train_forest, TrainParams, DEFAULT_DEPTHS};
use crate::tree::{prediction_checksum, Forest};
use crate::tuner::{best_lambda_under_budget, pareto_front, BudgetPoint, TradeOff};

pub const DEFAULT_REPETITIONS: usize = 8;
pub const STRICT_CFLAGS: [&str; 5] = ["-std=c99", "-pedantic", "-Wall", "-Wextra", "-Werror"];
pub const DEFAULT_OPT_FLAGS: &str = "-O2";
pub const ENV_CC: &str = "SKEWTREE_CC";
pub const ENV_CFLAGS: &str = "SKEWTREE_CFLAGS";

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn time_passes(reps: usize, rows: usize, mut pass: impl FnMut() -> usize) -> f64 {
    black_box(pass());
    let means = (0..reps)
        .map(|_| {
            let start = Instant::now();
            black_box(pass());
            start.elapsed().as_nanos() as f64 / rows as f64
        })
        .collect();
    median(means)
}

/// Nanoseconds per sample: median over `reps` full passes of the per-pass
/// mean, after one untimed warm-up pass. `Ifelse` walks the preorder tree
/// nodes; `Native` walks the packed array in `layout`.
pub fn time_interpreter(
    forest: &Forest,
    test: &Dataset,
    reps: usize,
    style: KernelStyle,
    layout: LayoutStrategy,
) -> Result<f64> {
    if test.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if reps == 0 {
        return Err(Error::Invalid("reps must be at least 1".into()));
    }
    if test.n_features() != forest.n_features {
        return Err(Error::FeatureMismatch {
            expected: forest.n_features,
            got: test.n_features(),
        });
    }
    let ns = match style {
        KernelStyle::Ifelse => time_passes(reps, test.n_rows(), || {
            test.rows()
                .map(|r| forest.predict_unchecked(black_box(r)))
                .sum()
        }),
        KernelStyle::Native => {
            let flat = FlatForest::new(forest, layout);
            let mut votes = vec![0u32; flat.n_classes];
            time_passes(reps, test.n_rows(), || {
                test.rows()
                    .map(|r| flat.predict_with(black_box(r), &mut votes))
                    .sum()
            })
        }
    };
    Ok(ns.max(f64::MIN_POSITIVE))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Toolchain {
    pub cc: PathBuf,
    pub cflags: Vec<String>,
}

fn on_path(name: &str) -> Option<PathBuf> {
    let candidate = Path::new(name);
    if candidate.components().count() > 1 {
        return candidate.is_file().then(|| candidate.to_path_buf());
    }
    std::env::split_paths(&std::env::var_os("PATH")?)
        .map(|dir| dir.join(name))
        .find(|p| p.is_file())
}

impl Toolchain {
    /// `SKEWTREE_CC`, then `CC`, then `cc` on `PATH`. Optimization flags come
    /// from `SKEWTREE_CFLAGS` (default `-O2`).
    pub fn discover() -> Result<Self> {
        let cc = [std::env::var(ENV_CC).ok(), std::env::var("CC").ok()]
            .into_iter()
            .flatten()
            .filter(|s| !s.trim().is_empty())
            .chain(std::iter::once("cc".to_string()))
            .find_map(|name| on_path(name.trim()))
            .ok_or(Error::ToolchainUnavailable)?;
        let opt = std::env::var(ENV_CFLAGS).unwrap_or_else(|_| DEFAULT_OPT_FLAGS.into());
        Ok(Toolchain {
            cc,
            cflags: opt.split_whitespace().map(str::to_string).collect(),
        })
    }

    pub fn with_compiler(cc: impl Into<PathBuf>) -> Self {
        Toolchain {
            cc: cc.into(),
            cflags: vec![DEFAULT_OPT_FLAGS.into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultLine {
    pub style: String,
    pub reps: usize,
    pub rows: u64,
    pub mean_ns_per_sample: f64,
    pub histogram: Vec<u64>,
}

/// Parses a driver `RESULT` line and checks that the histogram covers every
/// row.
pub fn parse_result_line(line: &str) -> Result<ResultLine> {
    let bad = |why: &str| Error::ResultParse(format!("{why}: {line:?}"));
    let rest = line
        .trim()
        .strip_prefix("RESULT ")
        .ok_or_else(|| bad("missing RESULT tag"))?;
    let mut fields = HashMap::new();
    for token in rest.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| bad("field without `=`"))?;
        if fields.insert(k, v).is_some() {
            return Err(bad("duplicate field"));
        }
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| bad(&format!("missing {k}")))
    };
    let num = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| bad(&format!("bad {k}"))) };
    let mean: f64 = get("mean_ns_per_sample")?
        .parse()
        .map_err(|_| bad("bad mean_ns_per_sample"))?;
    if !mean.is_finite() || mean < 0.0 {
        return Err(bad("mean_ns_per_sample out of range"));
    }
    let histogram = get("histogram")?
        .split(',')
        .map(|c| c.parse::<u64>().map_err(|_| bad("bad histogram")))
        .collect::<Result<Vec<_>>>()?;
    let parsed = ResultLine {
        style: get("style")?.to_string(),
        reps: num("reps")? as usize,
        rows: num("rows")?,
        mean_ns_per_sample: mean,
        histogram,
    };
    let sum: u64 = parsed.histogram.iter().sum();
    if sum != parsed.rows {
        return Err(Error::HistogramMismatch {
            sum,
            rows: parsed.rows,
        });
    }
    Ok(parsed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelRun {
    pub result: ResultLine,
    pub checksum: u64,
}

pub fn parse_driver_output(stdout: &str) -> Result<KernelRun> {
    let result = stdout
        .lines()
        .find(|l| l.starts_with("RESULT "))
        .ok_or_else(|| Error::ResultParse("no RESULT line in driver output".into()))
        .and_then(parse_result_line)?;
    let checksum = stdout
        .lines()
        .find_map(|l| l.strip_prefix("CHECKSUM "))
        .ok_or_else(|| Error::ResultParse("no CHECKSUM line in driver output".into()))?;
    let checksum = u64::from_str_radix(checksum.trim(), 16)
        .map_err(|_| Error::ResultParse(format!("bad checksum {checksum:?}")))?;
    Ok(KernelRun { result, checksum })
}

/// Builds the bundle's kernel and driver into `work_dir`, returning the
/// executable path. Uses the strict warning flags.
pub fn compile_bundle(
    toolchain: &Toolchain,
    bundle: &EmittedBundle,
    work_dir: &Path,
) -> Result<PathBuf> {
    if bundle.harness_source.is_empty() {
        return Err(Error::Invalid(
            "bundle has no driver; call emit_driver first".into(),
        ));
    }
    let kernel = work_dir.join("kernel.c");
    let driver = work_dir.join("driver.c");
    let exe = work_dir.join("kernel_bench");
    std::fs::write(&kernel, &bundle.kernel_source).map_err(|e| Error::io(&kernel, e))?;
    std::fs::write(&driver, &bundle.harness_source).map_err(|e| Error::io(&driver, e))?;
    let output = Command::new(&toolchain.cc)
        .args(&toolchain.cflags)
        .args(STRICT_CFLAGS)
        .arg("-o")
        .arg(&exe)
        .arg(&kernel)
        .arg(&driver)
        .output()
        .map_err(|e| Error::io(&toolchain.cc, e))?;
    if !output.status.success() {
        return Err(Error::CompileFailed {
            stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
            source_text: bundle.kernel_source.clone(),
        });
    }
    Ok(exe)
}

pub fn run_driver(exe: &Path, test_csv: &Path) -> Result<KernelRun> {
    let output = Command::new(exe)
        .arg(test_csv)
        .output()
        .map_err(|e| Error::io(exe, e))?;
    if !output.status.success() {
        return Err(Error::RunFailed(format!(
            "{} exited with {}: {}",
            exe.display(),
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    parse_driver_output(&String::from_utf8_lossy(&output.stdout))
}

/// Compiles, runs and checks a kernel against `expected_checksum` (the
/// interpreter's checksum on the same test CSV) when given.
pub fn compile_and_time(
    toolchain: &Toolchain,
    bundle: &EmittedBundle,
    test_csv: &Path,
    expected_checksum: Option<u64>,
) -> Result<KernelRun> {
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let exe = compile_bundle(toolchain, bundle, dir.path())?;
    let run = run_driver(&exe, test_csv)?;
    if let Some(interpreter) = expected_checksum {
        if run.checksum != interpreter {
            return Err(Error::ChecksumMismatch {
                kernel: run.checksum,
                interpreter,
            });
        }
    }
    Ok(run)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingSource {
    Interpreter,
    Compiled,
}

impl std::fmt::Display for TimingSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TimingSource::Interpreter => "interpreter",
            TimingSource::Compiled => "compiled",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub dataset: String,
    pub lambda: f64,
    pub max_depth: usize,
    pub n_trees: usize,
    pub max_features: usize,
    pub kernel_style: KernelStyle,
    pub layout: LayoutStrategy,
    pub repetition: usize,
    pub balanced_accuracy: f64,
    pub expected_depth: f64,
    pub mean_ns_per_sample: f64,
    pub relative_time: f64,
    pub accuracy_drop: f64,
    pub timing_source: TimingSource,
}

impl TradeOff for ExperimentRow {
    fn accuracy_drop(&self) -> f64 {
        self.accuracy_drop
    }
    fn relative_time(&self) -> f64 {
        self.relative_time
    }
}

/// Everything but `lambda`: rows sharing a key are compared to each other.
type PairKey = (
    String,
    usize,
    usize,
    usize,
    KernelStyle,
    LayoutStrategy,
    usize,
);

fn pair_key(r: &ExperimentRow) -> PairKey {
    (
        r.dataset.clone(),
        r.max_depth,
        r.n_trees,
        r.max_features,
        r.kernel_style,
        r.layout,
        r.repetition,
    )
}

/// Fills `relative_time` and `accuracy_drop` from each row's `lambda = 0`
/// partner.
pub fn join_baselines(rows: &mut [ExperimentRow]) -> Result<()> {
    let baselines: HashMap<PairKey, (f64, f64)> = rows
        .iter()
        .filter(|r| r.lambda == 0.0)
        .map(|r| (pair_key(r), (r.mean_ns_per_sample, r.balanced_accuracy)))
        .collect();
    for r in rows.iter_mut() {
        let key = pair_key(r);
        let &(ns, acc) = baselines.get(&key).ok_or_else(|| {
            Error::Invalid(format!(
                "no lambda = 0 baseline for dataset {} depth {} trees {} max_features {} {} {} repetition {}",
                key.0, key.1, key.2, key.3, key.4, key.5, key.6
            ))
        })?;
        if r.lambda == 0.0 {
            r.relative_time = 1.0;
            r.accuracy_drop = 0.0;
        } else {
            r.relative_time = r.mean_ns_per_sample / ns;
            r.accuracy_drop = acc - r.balanced_accuracy;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub lambdas: Vec<f64>,
    pub depths: Vec<usize>,
    pub n_trees: Vec<usize>,
    /// Empty means the recommended grid for the dataset's feature count.
    pub max_features: Vec<usize>,
    pub kernels: Vec<(KernelStyle, LayoutStrategy)>,
    pub repetitions: usize,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub seed: u64,
    pub bootstrap: bool,
    pub timing_reps: usize,
    pub nesting_limit: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            lambdas: vec![0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 20.0, 40.0],
            depths: DEFAULT_DEPTHS.to_vec(),
            n_trees: vec![16],
            max_features: Vec::new(),
            kernels: vec![
                (KernelStyle::Ifelse, LayoutStrategy::BfsDefault),
                (KernelStyle::Native, LayoutStrategy::BfsDefault),
                (KernelStyle::Native, LayoutStrategy::ProbabilityGreedy),
            ],
            repetitions: DEFAULT_REPETITIONS,
            test_fraction: DEFAULT_TEST_FRACTION,
            split_seed: 0,
            seed: 0,
            bootstrap: true,
            timing_reps: DEFAULT_REPS,
            nesting_limit: DEFAULT_NESTING_LIMIT,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambdas.contains(&0.0) {
            return Err(Error::Invalid(
                "lambda grid must contain 0 for the baseline".into(),
            ));
        }
        if self.lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::Invalid(
                "lambda grid values must be finite and >= 0".into(),
            ));
        }
        for (name, empty) in [
            ("depths", self.depths.is_empty()),
            ("n_trees", self.n_trees.is_empty()),
            ("kernels", self.kernels.is_empty()),
        ] {
            if empty {
                return Err(Error::Invalid(format!("grid {name} list is empty")));
            }
        }
        if self.repetitions == 0 || self.timing_reps == 0 {
            return Err(Error::Invalid(
                "repetitions and timing reps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// How kernels are timed.
#[derive(Debug, Clone)]
pub enum Timing {
    Interpreter,
    Compiled(Toolchain),
}

impl Timing {
    /// Compiled when a toolchain is discoverable, interpreter otherwise.
    pub fn discover() -> Self {
        Toolchain::discover().map_or(Timing::Interpreter, Timing::Compiled)
    }
}

struct Job {
    lambda: f64,
    depth: usize,
    n_trees: usize,
    max_features: usize,
    repetition: usize,
}

struct Trained {
    forest: Forest,
    balanced_accuracy: f64,
    expected_depth: f64,
    checksum: u64,
}

fn sorted_unique<T: Copy + PartialOrd>(xs: &[T]) -> Vec<T> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("comparable"));
    v.dedup_by(|a, b| a == b);
    v
}

#[allow(clippy::too_many_arguments)]
fn time_one(
    timing: &Timing,
    forest: &Forest,
    pair: &SplitPair,
    test_csv: Option<&Path>,
    checksum: u64,
    cfg: &GridConfig,
    style: KernelStyle,
    layout: LayoutStrategy,
) -> Result<(f64, TimingSource)> {
    match (timing, test_csv) {
        (Timing::Compiled(tc), Some(csv)) => {
            let bundle = emit_kernel(forest, style, layout, cfg.nesting_limit)?;
            let bundle = emit_driver(bundle, &pair.test, cfg.timing_reps)?;
            let run = compile_and_time(tc, &bundle, csv, Some(checksum))?;
            Ok((
                run.result.mean_ns_per_sample.max(f64::MIN_POSITIVE),
                TimingSource::Compiled,
            ))
        }
        _ => Ok((
            time_interpreter(forest, &pair.test, cfg.timing_reps, style, layout)?,
            TimingSource::Interpreter,
        )),
    }
}

/// Runs the full cross product for every dataset. Rows come out in a fixed
/// order (dataset, depth, trees, max_features, repetition, lambda, kernel);
/// every column except the timing ones is a pure function of the inputs.
pub fn run_grid(
    datasets: &[(String, Dataset)],
    cfg: &GridConfig,
    timing: &Timing,
) -> Result<Vec<ExperimentRow>> {
    cfg.validate()?;
    let lambdas = sorted_unique(&cfg.lambdas);
    let depths = sorted_unique(&cfg.depths);
    let n_trees = sorted_unique(&cfg.n_trees);
    let mut rows = Vec::new();
    for (name, data) in datasets {
        let p = data.n_features();
        let max_features = if cfg.max_features.is_empty() {
            max_features_grid(p)
        } else {
            sorted_unique(&cfg.max_features)
        };
        let splits = repeated_splits(data, cfg.test_fraction, cfg.split_seed, cfg.repetitions)?;
        let scratch = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let test_csvs: Vec<Option<PathBuf>> = match timing {
            Timing::Compiled(_) => splits
                .iter()
                .map(|s| {
                    let path = scratch
                        .path()
                        .join(format!("test_{}.csv", s.repetition_index));
                    s.test.write_csv(&path).map(|_| Some(path))
                })
                .collect::<Result<_>>()?,
            Timing::Interpreter => vec![None; splits.len()],
        };
        for &depth in &depths {
            for &trees in &n_trees {
                for &mf in &max_features {
                    let jobs: Vec<Job> = (0..splits.len())
                        .flat_map(|repetition| {
                            lambdas.iter().map(move |&lambda| Job {
                                lambda,
                                depth,
                                n_trees: trees,
                                max_features: mf,
                                repetition,
                            })
                        })
                        .collect();
                    let trained: Vec<Trained> = jobs
                        .par_iter()
                        .map(|job| {
                            let pair = &splits[job.repetition];
                            let params = TrainParams {
                                max_depth: job.depth,
                                max_features: Some(job.max_features),
                                lambda: job.lambda,
                                n_trees: job.n_trees,
                                bootstrap: cfg.bootstrap,
                                seed: cfg.seed.wrapping_add(job.repetition as u64),
                                ..TrainParams::default()
                            };
                            let forest = train_forest(&pair.train, &params)?;
                            let predictions = forest.predict_dataset(&pair.test)?;
                            Ok(Trained {
                                balanced_accuracy: balanced_accuracy(
                                    &predictions,
                                    pair.test.labels(),
                                )?,
                                expected_depth: forest_expected_depth(&forest)?,
                                checksum: prediction_checksum(predictions),
                                forest,
                            })
                        })
                        .collect::<Result<_>>()?;
                    for (job, t) in jobs.iter().zip(&trained) {
                        let pair = &splits[job.repetition];
                        for &(style, layout) in &cfg.kernels {
                            let (ns, source) = time_one(
                                timing,
                                &t.forest,
                                pair,
                                test_csvs[job.repetition].as_deref(),
                                t.checksum,
                                cfg,
                                style,
                                layout,
                            )?;
                            rows.push(ExperimentRow {
                                dataset: name.clone(),
                                lambda: job.lambda,
                                max_depth: job.depth,
                                n_trees: job.n_trees,
                                max_features: job.max_features,
                                kernel_style: style,
                                layout,
                                repetition: job.repetition,
                                balanced_accuracy: t.balanced_accuracy,
                                expected_depth: t.expected_depth,
                                mean_ns_per_sample: ns,
                                relative_time: f64::NAN,
                                accuracy_drop: f64::NAN,
                                timing_source: source,
                            });
                        }
                    }
                }
            }
        }
    }
    join_baselines(&mut rows)?;
    Ok(rows)
}

pub fn write_rows_to<W: Write, T: Serialize>(rows: &[T], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_rows_from<R: Read, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn write_report_csv(rows: &[ExperimentRow], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_rows_to(rows, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ExperimentRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_rows_from(file)
}

/// Repetition means for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub lambda: f64,
    pub max_depth: usize,
    pub n_trees: usize,
    pub max_features: usize,
    pub kernel_style: KernelStyle,
    pub layout: LayoutStrategy,
    pub repetitions: usize,
    pub balanced_accuracy: f64,
    pub expected_depth: f64,
    pub mean_ns_per_sample: f64,
    pub relative_time: f64,
    pub accuracy_drop: f64,
}

impl TradeOff for SummaryRow {
    fn accuracy_drop(&self) -> f64 {
        self.accuracy_drop
    }
    fn relative_time(&self) -> f64 {
        self.relative_time
    }
}

type ConfigKey = (String, usize, usize, usize, KernelStyle, LayoutStrategy);

impl SummaryRow {
    fn config_key(&self) -> ConfigKey {
        (
            self.dataset.clone(),
            self.max_depth,
            self.n_trees,
            self.max_features,
            self.kernel_style,
            self.layout,
        )
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// Averages over repetitions, sorted by configuration then `lambda`.
pub fn summarize(rows: &[ExperimentRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(ConfigKey, u64), Vec<&ExperimentRow>> = BTreeMap::new();
    for r in rows {
        let key = (
            (
                r.dataset.clone(),
                r.max_depth,
                r.n_trees,
                r.max_features,
                r.kernel_style,
                r.layout,
            ),
            // non-negative floats order like their bit patterns
            r.lambda.to_bits(),
        );
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let first = g[0];
            SummaryRow {
                dataset: first.dataset.clone(),
                lambda: first.lambda,
                max_depth: first.max_depth,
                n_trees: first.n_trees,
                max_features: first.max_features,
                kernel_style: first.kernel_style,
                layout: first.layout,
                repetitions: g.len(),
                balanced_accuracy: mean(g.iter().map(|r| r.balanced_accuracy)),
                expected_depth: mean(g.iter().map(|r| r.expected_depth)),
                mean_ns_per_sample: mean(g.iter().map(|r| r.mean_ns_per_sample)),
                relative_time: mean(g.iter().map(|r| r.relative_time)),
                accuracy_drop: mean(g.iter().map(|r| r.accuracy_drop)),
            }
        })
        .collect()
}

pub fn pareto_rows(summary: &[SummaryRow]) -> Vec<SummaryRow> {
    pareto_front(summary)
        .into_iter()
        .map(|i| summary[i].clone())
        .collect()
}

/// Per configuration: the best `lambda` under the budget (by mean relative
/// time) and the largest `lambda` whose mean accuracy drop stays within it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetChoice {
    pub dataset: String,
    pub max_depth: usize,
    pub n_trees: usize,
    pub max_features: usize,
    pub kernel_style: KernelStyle,
    pub layout: LayoutStrategy,
    pub best_lambda: f64,
    pub best_relative_time: f64,
    pub best_accuracy_drop: f64,
    pub max_lambda: f64,
}

pub fn budget_choices(summary: &[SummaryRow], budget: f64) -> Result<Vec<BudgetChoice>> {
    let mut groups: BTreeMap<ConfigKey, Vec<&SummaryRow>> = BTreeMap::new();
    for s in summary {
        groups.entry(s.config_key()).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|(key, g)| {
            let points: Vec<BudgetPoint> = g
                .iter()
                .map(|s| BudgetPoint {
                    lambda: s.lambda,
                    accuracy_drop: s.accuracy_drop,
                    cost: s.relative_time,
                })
                .collect();
            let best_lambda = best_lambda_under_budget(&points, budget)?;
            let best = g
                .iter()
                .find(|s| s.lambda == best_lambda)
                .expect("chosen from group");
            let max_lambda = g
                .iter()
                .filter(|s| s.lambda == 0.0 || s.accuracy_drop <= budget)
                .map(|s| s.lambda)
                .fold(0.0, f64::max);
            Ok(BudgetChoice {
                dataset: key.0,
                max_depth: key.1,
                n_trees: key.2,
                max_features: key.3,
                kernel_style: key.4,
                layout: key.5,
                best_lambda,
                best_relative_time: best.relative_time,
                best_accuracy_drop: best.accuracy_drop,
                max_lambda,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaFrequency {
    pub dataset: String,
    pub max_lambda: f64,
    pub count: usize,
    pub relative_frequency: f64,
}

/// How often each `max_lambda` occurs across a dataset's configurations.
pub fn max_lambda_frequencies(choices: &[BudgetChoice]) -> Vec<LambdaFrequency> {
    let mut counts: BTreeMap<(String, u64), usize> = BTreeMap::new();
    let mut totals: BTreeMap<String, usize> = BTreeMap::new();
    for c in choices {
        *counts
            .entry((c.dataset.clone(), c.max_lambda.to_bits()))
            .or_default() += 1;
        *totals.entry(c.dataset.clone()).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|((dataset, bits), count)| LambdaFrequency {
            relative_frequency: count as f64 / totals[&dataset] as f64,
            max_lambda: f64::from_bits(bits),
            dataset,
            count,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, OutcomeModel, SynthConfig};

    fn small() -> Dataset {
        generate(&SynthConfig::red(OutcomeModel::S3, 120, 3)).unwrap()
    }

    #[test]
    fn parses_stub_result_line() {
        let r = parse_result_line(
            "RESULT style=native reps=50 rows=100 mean_ns_per_sample=12.5 histogram=60,40",
        )
        .unwrap();
        assert_eq!(r.mean_ns_per_sample, 12.5);
        assert_eq!(r.style, "native");
        assert_eq!(r.reps, 50);
        assert_eq!(r.histogram, vec![60, 40]);
    }

    #[test]
    fn histogram_must_cover_rows() {
        let err = parse_result_line(
            "RESULT style=native reps=50 rows=100 mean_ns_per_sample=12.5 histogram=60,39",
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::HistogramMismatch { sum: 99, rows: 100 }
        ));
        assert!(parse_result_line("RESULT style=native reps=1 rows=1").is_err());
        assert!(parse_result_line("nothing here").is_err());
    }

    #[test]
    fn driver_output_needs_checksum() {
        let out = "RESULT style=ifelse reps=1 rows=2 mean_ns_per_sample=3.25 histogram=1,1\nCHECKSUM 00000000000000ff\n";
        let run = parse_driver_output(out).unwrap();
        assert_eq!(run.checksum, 255);
        assert!(parse_driver_output(out.lines().next().unwrap()).is_err());
    }

    #[test]
    fn interpreter_timing_is_positive() {
        let data = small();
        let forest = train_forest(&data, &TrainParams::default()).unwrap();
        for style in [KernelStyle::Ifelse, KernelStyle::Native] {
            let ns =
                time_interpreter(&forest, &data, 1, style, LayoutStrategy::BfsDefault).unwrap();
            assert!(ns.is_finite() && ns > 0.0);
        }
        assert!(time_interpreter(
            &forest,
            &data,
            0,
            KernelStyle::Native,
            LayoutStrategy::BfsDefault
        )
        .is_err());
    }

    fn tiny_grid(lambdas: Vec<f64>) -> GridConfig {
        GridConfig {
            lambdas,
            depths: vec![3],
            n_trees: vec![2],
            max_features: vec![3],
            kernels: vec![(KernelStyle::Native, LayoutStrategy::ProbabilityGreedy)],
            repetitions: 2,
            timing_reps: 1,
            ..GridConfig::default()
        }
    }

    #[test]
    fn self_baseline_grid() {
        let rows = run_grid(
            &[("s".into(), small())],
            &tiny_grid(vec![0.0]),
            &Timing::Interpreter,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows
            .iter()
            .all(|r| r.relative_time == 1.0 && r.accuracy_drop == 0.0));
        assert!(rows
            .iter()
            .all(|r| r.timing_source == TimingSource::Interpreter));
    }

    #[test]
    fn grid_requires_baseline() {
        let err = run_grid(
            &[("s".into(), small())],
            &tiny_grid(vec![0.5]),
            &Timing::Interpreter,
        );
        assert!(matches!(err, Err(Error::Invalid(_))));
    }

    #[test]
    fn paired_join_and_round_trip() {
        let rows = run_grid(
            &[("s".into(), small())],
            &tiny_grid(vec![0.0, 0.1]),
            &Timing::Interpreter,
        )
        .unwrap();
        assert_eq!(rows.len(), 4);
        for r in rows.iter().filter(|r| r.lambda > 0.0) {
            let base = rows
                .iter()
                .find(|b| b.lambda == 0.0 && b.repetition == r.repetition)
                .unwrap();
            assert_eq!(
                r.accuracy_drop,
                base.balanced_accuracy - r.balanced_accuracy
            );
            assert_eq!(
                r.relative_time,
                r.mean_ns_per_sample / base.mean_ns_per_sample
            );
        }
        let mut buf = Vec::new();
        write_rows_to(&rows, &mut buf).unwrap();
        let back: Vec<ExperimentRow> = read_rows_from(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    fn summary(lambda: f64, drop: f64, time: f64) -> SummaryRow {
        SummaryRow {
            dataset: "d".into(),
            lambda,
            max_depth: 5,
            n_trees: 1,
            max_features: 1,
            kernel_style: KernelStyle::Native,
            layout: LayoutStrategy::BfsDefault,
            repetitions: 8,
            balanced_accuracy: 0.9 - drop,
            expected_depth: 1.0,
            mean_ns_per_sample: time,
            relative_time: time,
            accuracy_drop: drop,
        }
    }

    #[test]
    fn budget_table() {
        let s = vec![
            summary(0.0, 0.0, 1.0),
            summary(10.0, 0.02, 0.6),
            summary(20.0, 0.06, 0.4),
        ];
        let choices = budget_choices(&s, 0.05).unwrap();
        assert_eq!(choices.len(), 1);
        assert_eq!(choices[0].best_lambda, 10.0);
        assert_eq!(choices[0].max_lambda, 10.0);
        let freq = max_lambda_frequencies(&choices);
        assert_eq!(freq.len(), 1);
        assert_eq!(freq[0].relative_frequency, 1.0);
        let front = pareto_rows(&s);
        assert_eq!(front.len(), 3);
    }

    #[test]
    fn summary_orders_by_lambda() {
        let mut rows = run_grid(
            &[("s".into(), small())],
            &tiny_grid(vec![0.0, 0.1]),
            &Timing::Interpreter,
        )
        .unwrap();
        rows.reverse();
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].lambda, 0.0);
        assert_eq!(s[0].relative_time, 1.0);
        assert_eq!(s[1].repetitions, 2);
    }
}
