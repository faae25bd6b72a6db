//! Split quality: Gini impurity, the uneven-split regularization term and
//! the best-split search used by the tree grower.
//!
//! A candidate split is scored as
//!
//! ```text
//! score = (n_l / n) * gini_l + (n_r / n) * gini_r + lambda * R
//! R     = 1 - |n_l - n_r| / n
//! ```
//!
//! Adding `lambda * R` to each child's impurity before weighting gives the
//! same value because the weights sum to one. `R` is 1 for an even split and
//! approaches 0 for a lopsided one, so larger `lambda` pushes the search
//! towards uneven splits.

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct CriterionParams {
    pub lambda: f64,
}

impl CriterionParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Invalid(format!(
                "lambda must be a finite non-negative number, got {lambda}"
            )));
        }
        Ok(CriterionParams { lambda })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub feature_index: usize,
    pub threshold: f64,
    pub n_left: usize,
    pub n_right: usize,
    pub left_class_counts: Vec<usize>,
    pub right_class_counts: Vec<usize>,
    pub score: f64,
}

impl SplitCandidate {
    pub fn evenness(&self) -> f64 {
        regularization(self.n_left, self.n_right).unwrap_or(0.0)
    }
}

/// Gini impurity of a class distribution given as proportions.
pub fn gini(class_proportions: &[f64]) -> Result<f64> {
    let total: f64 = class_proportions.iter().sum();
    if class_proportions.iter().any(|&p| p < 0.0 || !p.is_finite()) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "class proportions must be non-negative and sum to 1, got sum {total}"
        )));
    }
    Ok(1.0 - class_proportions.iter().map(|p| p * p).sum::<f64>())
}

/// Gini impurity straight from class counts.
pub fn gini_counts(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

/// `1 - |n_left - n_right| / (n_left + n_right)`.
pub fn regularization(n_left: usize, n_right: usize) -> Result<f64> {
    let n = n_left + n_right;
    if n == 0 {
        return Err(Error::Invalid("split with no samples".into()));
    }
    Ok(1.0 - n_left.abs_diff(n_right) as f64 / n as f64)
}

pub fn regularized_impurity(gini_value: f64, r: f64, params: CriterionParams) -> f64 {
    gini_value + params.lambda * r
}

/// Rows of a dataset visible to one tree node. Indices may repeat
/// (bootstrap samples).
#[derive(Debug, Clone, Copy)]
pub struct SampleView<'a> {
    pub data: &'a Dataset,
    pub rows: &'a [usize],
}

impl<'a> SampleView<'a> {
    pub fn new(data: &'a Dataset, rows: &'a [usize]) -> Self {
        SampleView { data, rows }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.data.n_classes()];
        for &r in self.rows {
            counts[self.data.labels()[r]] += 1;
        }
        counts
    }
}

/// Relative gap below which two split scores count as equal.
pub const SCORE_TIE_TOLERANCE: f64 = 1e-12;

/// Threshold halfway between two consecutive distinct values, kept strictly
/// below `hi` so `hi` still routes right.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Exhaustive search over midpoint thresholds of the given features.
///
/// Returns the candidate with the lowest score; ties go to the lower feature
/// index, then the lower threshold. `None` when every listed feature is
/// constant over the rows.
pub fn best_split(
    view: SampleView<'_>,
    feature_subset: &[usize],
    params: CriterionParams,
) -> Option<SplitCandidate> {
    let n = view.rows.len();
    if n < 2 || feature_subset.is_empty() {
        return None;
    }
    let n_classes = view.data.n_classes();
    let labels = view.data.labels();
    let total = view.class_counts();

    let mut features: Vec<usize> = feature_subset.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut left = vec![0usize; n_classes];
    let mut right = vec![0usize; n_classes];
    let mut best: Option<(usize, f64, f64)> = None;

    for &f in &features {
        order.clear();
        order.extend(
            view.rows
                .iter()
                .map(|&r| (view.data.value(r, f), labels[r])),
        );
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        if order[0].0 == order[n - 1].0 {
            continue;
        }
        left.iter_mut().for_each(|c| *c = 0);
        right.copy_from_slice(&total);

        for i in 0..n - 1 {
            let (v, y) = order[i];
            left[y] += 1;
            right[y] -= 1;
            let next = order[i + 1].0;
            if v == next {
                continue;
            }
            let n_left = i + 1;
            let n_right = n - n_left;
            let weighted = (n_left as f64 / n as f64) * gini_counts(&left)
                + (n_right as f64 / n as f64) * gini_counts(&right);
            let r = regularization(n_left, n_right).expect("non-empty split");
            let score = regularized_impurity(weighted, r, params);
            // features and thresholds are visited in ascending order, so
            // requiring a clear improvement keeps the lowest (feature,
            // threshold) among equal scores that round differently
            if best.is_none_or(|(_, _, bs)| score < bs - SCORE_TIE_TOLERANCE * bs.abs().max(1.0)) {
                best = Some((f, midpoint(v, next), score));
            }
        }
    }

    let (feature_index, threshold, score) = best?;
    let mut left_class_counts = vec![0; n_classes];
    for &r in view.rows {
        if view.data.value(r, feature_index) <= threshold {
            left_class_counts[labels[r]] += 1;
        }
    }
    let right_class_counts: Vec<usize> = total
        .iter()
        .zip(&left_class_counts)
        .map(|(t, l)| t - l)
        .collect();
    Some(SplitCandidate {
        feature_index,
        threshold,
        n_left: left_class_counts.iter().sum(),
        n_right: right_class_counts.iter().sum(),
        left_class_counts,
        right_class_counts,
        score,
    })
}
