//! Shared fixtures: a plain CART oracle in exact integer arithmetic and
//! small random datasets.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skewtree::dataset::Dataset;
use skewtree::tree::{Forest, Tree};

/// A split as the oracle sees it: rows with `x[feature] <= left_max` go left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSplit {
    pub feature: usize,
    pub left_max: f64,
    pub next_value: f64,
}

/// Purity gain numerator `sum_k L_k^2 / nL + sum_k R_k^2 / nR` as a fraction.
fn purity(left: &[u128], right: &[u128]) -> (u128, u128) {
    let nl: u128 = left.iter().sum();
    let nr: u128 = right.iter().sum();
    let sl: u128 = left.iter().map(|c| c * c).sum();
    let sr: u128 = right.iter().map(|c| c * c).sum();
    (sl * nr + sr * nl, nl * nr)
}

/// Weighted child Gini is minimal exactly where `purity` is maximal. Every
/// candidate is recounted from scratch; ties keep the first candidate in
/// (feature, threshold) order.
pub fn oracle_best_split(
    rows: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
) -> Option<OracleSplit> {
    let p = rows.first()?.len();
    let mut best: Option<(OracleSplit, (u128, u128))> = None;
    for f in 0..p {
        let mut values: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let mut left = vec![0u128; n_classes];
            let mut right = vec![0u128; n_classes];
            for (r, &y) in rows.iter().zip(labels) {
                if r[f] <= w[0] {
                    left[y] += 1;
                } else {
                    right[y] += 1;
                }
            }
            let score = purity(&left, &right);
            let better = match best {
                None => true,
                Some((_, (a, b))) => score.0 * b > a * score.1,
            };
            if better {
                best = Some((
                    OracleSplit {
                        feature: f,
                        left_max: w[0],
                        next_value: w[1],
                    },
                    score,
                ));
            }
        }
    }
    best.map(|(s, _)| s)
}

#[derive(Debug)]
pub enum OracleTree {
    Leaf(usize),
    Split(OracleSplit, Box<OracleTree>, Box<OracleTree>),
}

fn majority(labels: &[usize], n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    for &y in labels {
        counts[y] += 1;
    }
    let mut best = 0;
    for c in 1..n_classes {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    best
}

pub fn oracle_tree(
    rows: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    depth_left: usize,
) -> OracleTree {
    let class = majority(labels, n_classes);
    let pure = labels.iter().all(|&y| y == labels[0]);
    if depth_left == 0 || pure || labels.len() < 2 {
        return OracleTree::Leaf(class);
    }
    let Some(split) = oracle_best_split(rows, labels, n_classes) else {
        return OracleTree::Leaf(class);
    };
    let (mut lr, mut ll, mut rr, mut rl) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (r, &y) in rows.iter().zip(labels) {
        if r[split.feature] <= split.left_max {
            lr.push(r.clone());
            ll.push(y);
        } else {
            rr.push(r.clone());
            rl.push(y);
        }
    }
    OracleTree::Split(
        split,
        Box::new(oracle_tree(&lr, &ll, n_classes, depth_left - 1)),
        Box::new(oracle_tree(&rr, &rl, n_classes, depth_left - 1)),
    )
}

impl OracleTree {
    pub fn predict(&self, row: &[f64]) -> usize {
        match self {
            OracleTree::Leaf(c) => *c,
            OracleTree::Split(s, l, r) => {
                if row[s.feature] <= s.left_max {
                    l.predict(row)
                } else {
                    r.predict(row)
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            OracleTree::Leaf(_) => 1,
            OracleTree::Split(_, l, r) => 1 + l.node_count() + r.node_count(),
        }
    }
}

/// Up to 50 rows, up to 4 features, 2 or 3 classes. Small integer grids
/// force repeated values and score ties; the rest are continuous.
pub fn random_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_rows = rng.random_range(4..=50);
    let p = rng.random_range(1..=4);
    let n_classes = rng.random_range(2..=3);
    let discrete = rng.random_bool(0.5);
    loop {
        let features: Vec<f64> = (0..n_rows * p)
            .map(|_| {
                if discrete {
                    rng.random_range(0..6) as f64
                } else {
                    rng.random_range(-10.0..10.0)
                }
            })
            .collect();
        let labels: Vec<usize> = (0..n_rows)
            .map(|_| rng.random_range(0..n_classes))
            .collect();
        let names = (0..n_classes).map(|c| format!("c{c}")).collect();
        if let Ok(ds) = Dataset::new(p, features, labels, names) {
            return ds;
        }
    }
}

pub fn rows_of(ds: &Dataset) -> Vec<Vec<f64>> {
    ds.rows().map(<[f64]>::to_vec).collect()
}

/// Leaf mass sums to one and every child's probability is its parent's
/// times its branch share.
pub fn assert_probabilities(tree: &Tree) {
    let leaf_mass: f64 = tree.leaves().map(|n| n.absolute_probability).sum();
    assert!((leaf_mass - 1.0).abs() <= 1e-9, "leaf mass {leaf_mass}");
    assert_eq!(tree.root().absolute_probability, 1.0);
    for node in &tree.nodes {
        if let Some((l, r)) = node.children() {
            for c in [l, r] {
                let child = &tree.nodes[c];
                let product = node.absolute_probability * child.branch_probability;
                assert!((child.absolute_probability - product).abs() <= 1e-12);
            }
            let sum = tree.nodes[l].absolute_probability + tree.nodes[r].absolute_probability;
            assert!((sum - node.absolute_probability).abs() <= 1e-9);
        }
    }
}

pub fn assert_forest_probabilities(forest: &Forest) {
    forest.trees.iter().for_each(assert_probabilities);
}
