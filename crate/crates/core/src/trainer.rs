//! CART tree growing with the regularized criterion, and random forests.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{best_split, gini_counts, CriterionParams, SampleView};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tree::{majority_class, Forest, NodeKind, Tree, TreeNode, SCHEMA_VERSION};

/// Slack on the impurity-decrease test so float noise never blocks a split
/// that plain CART would make.
const IMPURITY_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    /// Leaves may sit at depth `max_depth`; the root is depth 0.
    pub max_depth: usize,
    /// Features drawn per node. `None` uses every feature.
    pub max_features: Option<usize>,
    pub lambda: f64,
    pub n_trees: usize,
    pub bootstrap: bool,
    pub seed: u64,
    pub min_samples_split: usize,
    /// A node stays a leaf unless its best split lowers the node's Gini
    /// impurity by at least this much, counting the `lambda * R` penalty.
    /// `None` disables the test.
    pub min_impurity_decrease: Option<f64>,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            max_depth: 5,
            max_features: None,
            lambda: 0.0,
            n_trees: 1,
            bootstrap: true,
            seed: 0,
            min_samples_split: 2,
            min_impurity_decrease: Some(0.0),
        }
    }
}

impl TrainParams {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        CriterionParams::new(self.lambda)?;
        if self.max_depth == 0 {
            return Err(Error::Invalid("max_depth must be at least 1".into()));
        }
        if self.n_trees == 0 {
            return Err(Error::Invalid("n_trees must be at least 1".into()));
        }
        if let Some(k) = self.max_features {
            if k == 0 || k > n_features {
                return Err(Error::Invalid(format!(
                    "max_features {k} outside [1, {n_features}]"
                )));
            }
        }
        if self.min_samples_split < 2 {
            return Err(Error::Invalid(
                "min_samples_split must be at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn criterion(&self) -> CriterionParams {
        CriterionParams {
            lambda: self.lambda,
        }
    }

    fn features_per_node(&self, n_features: usize) -> usize {
        self.max_features.unwrap_or(n_features).min(n_features)
    }
}

pub const DEFAULT_DEPTHS: [usize; 4] = [1, 5, 15, 20];

/// `{floor(sqrt p)/2, floor(sqrt p), 2 floor(sqrt p), p}`, clamped to
/// `[1, p]` and deduplicated.
pub fn max_features_grid(p: usize) -> Vec<usize> {
    let s = (p as f64).sqrt().floor() as usize;
    let mut grid: Vec<usize> = [s / 2, s, 2 * s, p]
        .into_iter()
        .map(|k| k.clamp(1, p))
        .collect();
    grid.dedup();
    grid
}

struct Grower<'a, R> {
    data: &'a Dataset,
    params: &'a TrainParams,
    rng: &'a mut R,
    nodes: Vec<TreeNode>,
    features_per_node: usize,
}

impl<R: Rng> Grower<'_, R> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize, branch: f64, absolute: f64) -> usize {
        let view = SampleView::new(self.data, &rows);
        let histogram = view.class_counts();
        let idx = self.nodes.len();
        self.nodes.push(TreeNode {
            kind: NodeKind::Leaf {
                class: majority_class(&histogram),
            },
            depth,
            n_samples: rows.len(),
            histogram,
            branch_probability: branch,
            absolute_probability: absolute,
        });

        let node_gini = gini_counts(&self.nodes[idx].histogram);
        if depth >= self.params.max_depth
            || rows.len() < self.params.min_samples_split
            || node_gini == 0.0
        {
            return idx;
        }

        let n_features = self.data.n_features();
        let subset = index::sample(self.rng, n_features, self.features_per_node).into_vec();
        let Some(split) = best_split(view, &subset, self.params.criterion()) else {
            return idx;
        };
        if let Some(min_decrease) = self.params.min_impurity_decrease {
            if node_gini - split.score + IMPURITY_EPSILON < min_decrease {
                return idx;
            }
        }

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.data.value(r, split.feature_index) <= split.threshold);
        drop(rows);
        let n = (left_rows.len() + right_rows.len()) as f64;
        let p_left = left_rows.len() as f64 / n;
        let p_right = right_rows.len() as f64 / n;
        let left = self.grow(left_rows, depth + 1, p_left, absolute * p_left);
        let right = self.grow(right_rows, depth + 1, p_right, absolute * p_right);
        self.nodes[idx].kind = NodeKind::Internal {
            feature: split.feature_index,
            threshold: split.threshold,
            left,
            right,
        };
        idx
    }
}

/// Grows one tree over `rows` of `data` (indices may repeat).
pub fn grow_tree_on<R: Rng>(
    data: &Dataset,
    rows: Vec<usize>,
    params: &TrainParams,
    rng: &mut R,
) -> Result<Tree> {
    params.validate(data.n_features())?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut grower = Grower {
        data,
        params,
        rng,
        nodes: Vec::new(),
        features_per_node: params.features_per_node(data.n_features()),
    };
    grower.grow(rows, 0, 1.0, 1.0);
    Ok(Tree {
        nodes: grower.nodes,
    })
}

/// Grows one tree on every row of `train`.
pub fn grow_tree<R: Rng>(train: &Dataset, params: &TrainParams, rng: &mut R) -> Result<Tree> {
    grow_tree_on(train, (0..train.n_rows()).collect(), params, rng)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for tree `t`; independent of how trees are scheduled.
pub fn tree_seed(seed: u64, t: usize) -> u64 {
    splitmix64(seed ^ splitmix64(t as u64))
}

pub fn tree_rng(seed: u64, t: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(tree_seed(seed, t))
}

pub fn train_forest(train: &Dataset, params: &TrainParams) -> Result<Forest> {
    params.validate(train.n_features())?;
    let n = train.n_rows();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.seed, t);
            let rows = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree_on(train, rows, params, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        schema_version: SCHEMA_VERSION,
        params: params.clone(),
        n_features: train.n_features(),
        class_names: train.class_names().to_vec(),
        trees,
    })
}

pub fn predict(forest: &Forest, row: &[f64]) -> Result<usize> {
    forest.predict(row)
}
