//! Model and dataset measurements: expected depth, balanced accuracy,
//! chi-square class imbalance and size statistics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tree::{Forest, Tree};

/// Mean leaf depth weighted by leaf access probability.
pub fn expected_depth(tree: &Tree) -> Result<f64> {
    let mass: f64 = tree.leaves().map(|l| l.absolute_probability).sum();
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::Unnormalized(mass));
    }
    Ok(tree
        .leaves()
        .map(|l| l.absolute_probability * l.depth as f64)
        .sum())
}

/// Unweighted mean of per-tree expected depths.
pub fn forest_expected_depth(forest: &Forest) -> Result<f64> {
    let total = forest
        .trees
        .iter()
        .map(expected_depth)
        .sum::<Result<f64>>()?;
    Ok(total / forest.trees.len() as f64)
}

/// Mean recall over the classes present in `truth`.
pub fn balanced_accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::Invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = truth.iter().chain(predictions).max().copied().unwrap_or(0) + 1;
    let mut support = vec![0usize; k];
    let mut hits = vec![0usize; k];
    for (&p, &t) in predictions.iter().zip(truth) {
        support[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    let (sum, present) = support
        .iter()
        .zip(&hits)
        .filter(|(&s, _)| s > 0)
        .fold((0.0, 0usize), |(acc, n), (&s, &h)| {
            (acc + h as f64 / s as f64, n + 1)
        });
    Ok(sum / present as f64)
}

/// Goodness-of-fit statistic against a uniform class distribution.
pub fn chi_square(class_counts: &[usize]) -> Result<f64> {
    if class_counts.len() < 2 {
        return Err(Error::Invalid("chi-square needs at least 2 classes".into()));
    }
    let n: usize = class_counts.iter().sum();
    if n == 0 {
        return Err(Error::Invalid("chi-square over zero samples".into()));
    }
    let expected = n as f64 / class_counts.len() as f64;
    Ok(class_counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum())
}

/// Split evenness `R` of every internal node.
pub fn split_evenness(tree: &Tree) -> Vec<f64> {
    tree.nodes
        .iter()
        .filter_map(|n| n.children())
        .map(|(l, r)| {
            crate::criterion::regularization(tree.nodes[l].n_samples, tree.nodes[r].n_samples)
                .expect("internal nodes have samples")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthReport {
    pub expected_depth: f64,
    pub node_count: usize,
    pub leaf_count: usize,
    pub max_path_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeStats {
    pub trees: Vec<DepthReport>,
    pub forest_mean_expected_depth: f64,
    pub total_nodes: usize,
    pub total_leaves: usize,
}

pub fn depth_report(tree: &Tree) -> Result<DepthReport> {
    Ok(DepthReport {
        expected_depth: expected_depth(tree)?,
        node_count: tree.nodes.len(),
        leaf_count: tree.leaves().count(),
        max_path_depth: tree.max_depth(),
    })
}

pub fn size_stats(forest: &Forest) -> Result<SizeStats> {
    let trees = forest
        .trees
        .iter()
        .map(depth_report)
        .collect::<Result<Vec<_>>>()?;
    Ok(SizeStats {
        forest_mean_expected_depth: trees.iter().map(|t| t.expected_depth).sum::<f64>()
            / trees.len() as f64,
        total_nodes: trees.iter().map(|t| t.node_count).sum(),
        total_leaves: trees.iter().map(|t| t.leaf_count).sum(),
        trees,
    })
}
