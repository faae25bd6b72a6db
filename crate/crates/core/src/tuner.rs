//! Automatic choice of the regularization weight.
//!
//! The ladder of `lambda` values is walked in order. Each step trains one
//! forest per repeated split, records mean expected depth and held-out
//! balanced accuracy, and stops once the relative change in expected depth
//! drops below the threshold. The `lambda` just before that step is chosen.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytics::{balanced_accuracy, forest_expected_depth};
use crate::dataset::{repeated_splits, Dataset, DEFAULT_TEST_FRACTION};
use crate::error::{Error, Result};
use crate::trainer::{train_forest, TrainParams};

pub const DEFAULT_THRESHOLD: f64 = 0.05;
pub const DEFAULT_LAMBDA_CAP: f64 = 40.0;
pub const DEFAULT_SCHEDULE: [f64; 15] = [
    0.0, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 40.0,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub threshold: f64,
    pub schedule: Vec<f64>,
    pub lambda_cap: f64,
    /// Stop before any `lambda` whose mean paired accuracy drop exceeds this.
    pub accuracy_budget: Option<f64>,
    pub repetitions: usize,
    pub test_fraction: f64,
    pub split_seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            threshold: DEFAULT_THRESHOLD,
            schedule: DEFAULT_SCHEDULE.to_vec(),
            lambda_cap: DEFAULT_LAMBDA_CAP,
            accuracy_budget: None,
            repetitions: 8,
            test_fraction: DEFAULT_TEST_FRACTION,
            split_seed: 0,
        }
    }
}

impl TuneConfig {
    fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::Invalid("empty lambda schedule".into()));
        }
        if self.schedule[0] != 0.0 {
            return Err(Error::Invalid("lambda schedule must start at 0".into()));
        }
        if self.schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(
                "lambda schedule must be strictly increasing".into(),
            ));
        }
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return Err(Error::Invalid("threshold must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Invalid("need at least one repetition".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    LambdaCap,
    AccuracyBudget,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::LambdaCap => "lambda_cap",
            StopReason::AccuracyBudget => "accuracy_budget",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub lambda: f64,
    pub expected_depth: f64,
    pub balanced_accuracy: f64,
    /// Mean over repetitions of `ba(0) - ba(lambda)` on the same split.
    pub accuracy_drop: f64,
    /// `|ed - ed_prev| / ed_prev`; `None` for the first entry, 0 when
    /// `ed_prev` is 0.
    pub relative_change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneTrace {
    pub entries: Vec<TraceEntry>,
    pub chosen_lambda: f64,
    pub stop_reason: StopReason,
}

/// Measurement of one ladder step: per-repetition expected depth and
/// balanced accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMeasurement {
    pub expected_depth: Vec<f64>,
    pub balanced_accuracy: Vec<f64>,
}

pub fn relative_change(previous: f64, current: f64) -> f64 {
    if previous == 0.0 {
        0.0
    } else {
        (current - previous).abs() / previous
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Walks the ladder with a caller-supplied measurement.
pub fn tune_with<F>(cfg: &TuneConfig, mut measure: F) -> Result<TuneTrace>
where
    F: FnMut(f64) -> Result<StepMeasurement>,
{
    cfg.validate()?;
    let mut entries: Vec<TraceEntry> = Vec::new();
    let mut baseline_ba: Vec<f64> = Vec::new();

    for &lambda in &cfg.schedule {
        if lambda > cfg.lambda_cap {
            break;
        }
        let m = measure(lambda)?;
        if m.expected_depth.is_empty() || m.expected_depth.len() != m.balanced_accuracy.len() {
            return Err(Error::Invalid("measurement has no repetitions".into()));
        }
        if entries.is_empty() {
            baseline_ba = m.balanced_accuracy.clone();
        }
        let drops: Vec<f64> = baseline_ba
            .iter()
            .zip(&m.balanced_accuracy)
            .map(|(b, a)| b - a)
            .collect();
        let ed = mean(&m.expected_depth);
        let entry = TraceEntry {
            lambda,
            expected_depth: ed,
            balanced_accuracy: mean(&m.balanced_accuracy),
            accuracy_drop: mean(&drops),
            relative_change: entries
                .last()
                .map(|p| relative_change(p.expected_depth, ed)),
        };
        let previous = entries.last().map(|p| p.lambda);
        entries.push(entry);

        if let (Some(budget), Some(prev)) = (cfg.accuracy_budget, previous) {
            if entry.accuracy_drop > budget {
                return Ok(TuneTrace {
                    entries,
                    chosen_lambda: prev,
                    stop_reason: StopReason::AccuracyBudget,
                });
            }
        }
        if let (Some(change), Some(prev)) = (entry.relative_change, previous) {
            if change < cfg.threshold {
                return Ok(TuneTrace {
                    entries,
                    chosen_lambda: prev,
                    stop_reason: StopReason::Converged,
                });
            }
        }
    }
    let chosen_lambda = entries.last().map(|e| e.lambda).unwrap_or(0.0);
    Ok(TuneTrace {
        entries,
        chosen_lambda,
        stop_reason: StopReason::LambdaCap,
    })
}

/// Tunes `lambda` for `data` with repeated train/test splits. Forest seeds
/// advance with the repetition so every `lambda` sees the same splits and
/// the same tree seeds.
pub fn tune_lambda(data: &Dataset, params: &TrainParams, cfg: &TuneConfig) -> Result<TuneTrace> {
    cfg.validate()?;
    let splits = repeated_splits(data, cfg.test_fraction, cfg.split_seed, cfg.repetitions)?;
    tune_with(cfg, |lambda| {
        let mut expected_depth = Vec::with_capacity(splits.len());
        let mut balanced = Vec::with_capacity(splits.len());
        for pair in &splits {
            let p = TrainParams {
                lambda,
                seed: params.seed.wrapping_add(pair.repetition_index as u64),
                ..params.clone()
            };
            let forest = train_forest(&pair.train, &p)?;
            expected_depth.push(forest_expected_depth(&forest)?);
            let predictions = forest.predict_dataset(&pair.test)?;
            balanced.push(balanced_accuracy(&predictions, pair.test.labels())?);
        }
        Ok(StepMeasurement {
            expected_depth,
            balanced_accuracy: balanced,
        })
    })
}

pub fn write_trace_csv(trace: &TuneTrace, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_trace_csv_to(trace, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_trace_csv_to<W: Write>(trace: &TuneTrace, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "lambda",
        "expected_depth",
        "balanced_accuracy",
        "relative_change",
        "stop_reason",
    ])?;
    let last = trace.entries.len().saturating_sub(1);
    for (i, e) in trace.entries.iter().enumerate() {
        out.write_record([
            format!("{:?}", e.lambda),
            format!("{:?}", e.expected_depth),
            format!("{:?}", e.balanced_accuracy),
            e.relative_change
                .map(|c| format!("{c:?}"))
                .unwrap_or_default(),
            if i == last {
                trace.stop_reason.to_string()
            } else {
                String::new()
            },
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetPoint {
    pub lambda: f64,
    pub accuracy_drop: f64,
    /// Measured relative time, or expected depth as a proxy.
    pub cost: f64,
}

/// Cheapest `lambda` whose accuracy drop stays within `budget`; ties go to
/// the smaller `lambda`.
pub fn best_lambda_under_budget(points: &[BudgetPoint], budget: f64) -> Result<f64> {
    if !points.iter().any(|p| p.lambda == 0.0) {
        return Err(Error::Invalid("grid has no lambda = 0 baseline".into()));
    }
    let best = points
        .iter()
        .filter(|p| p.lambda == 0.0 || p.accuracy_drop <= budget)
        .min_by(|a, b| {
            a.cost
                .total_cmp(&b.cost)
                .then(a.lambda.total_cmp(&b.lambda))
        })
        .expect("baseline is admissible");
    Ok(best.lambda)
}

pub trait TradeOff {
    fn accuracy_drop(&self) -> f64;
    fn relative_time(&self) -> f64;
}

impl TradeOff for (f64, f64) {
    fn accuracy_drop(&self) -> f64 {
        self.0
    }
    fn relative_time(&self) -> f64 {
        self.1
    }
}

/// Indices (ascending) of rows not dominated in (accuracy_drop,
/// relative_time), both minimized. Identical rows do not dominate each
/// other.
pub fn pareto_front<T: TradeOff>(rows: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        rows[a]
            .accuracy_drop()
            .total_cmp(&rows[b].accuracy_drop())
            .then(rows[a].relative_time().total_cmp(&rows[b].relative_time()))
    });
    let mut front = Vec::new();
    let mut best_time = f64::INFINITY;
    let mut i = 0;
    while i < order.len() {
        // rows sharing an accuracy drop: only the fastest time can survive
        let drop = rows[order[i]].accuracy_drop();
        let mut j = i;
        while j < order.len() && rows[order[j]].accuracy_drop() == drop {
            j += 1;
        }
        let fastest = rows[order[i]].relative_time();
        if fastest < best_time {
            front.extend(
                order[i..j]
                    .iter()
                    .copied()
                    .take_while(|&k| rows[k].relative_time() == fastest),
            );
            best_time = fastest;
        }
        i = j;
    }
    front.sort_unstable();
    front
}
