//! Probability-annotated binary decision trees, forests and their JSON form.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::trainer::TrainParams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeKind {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    #[serde(flatten)]
    pub kind: NodeKind,
    pub depth: usize,
    pub n_samples: usize,
    pub histogram: Vec<usize>,
    /// Share of the parent's training samples routed here.
    pub branch_probability: f64,
    /// Product of branch probabilities from the root.
    pub absolute_probability: f64,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn children(&self) -> Option<(usize, usize)> {
        match self.kind {
            NodeKind::Internal { left, right, .. } => Some((left, right)),
            NodeKind::Leaf { .. } => None,
        }
    }
}

/// Nodes are stored in preorder; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

/// Most frequent class, lowest index on ties.
pub fn majority_class(histogram: &[usize]) -> usize {
    let mut best = 0;
    for (c, &count) in histogram.iter().enumerate() {
        if count > histogram[best] {
            best = c;
        }
    }
    best
}

impl Tree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> + '_ {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut idx = 0;
        loop {
            match self.nodes[idx].kind {
                NodeKind::Leaf { .. } => return idx,
                NodeKind::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    /// Routes a row (caller guarantees its length).
    pub fn predict_row(&self, row: &[f64]) -> usize {
        match self.nodes[self.leaf_index(row)].kind {
            NodeKind::Leaf { class } => class,
            NodeKind::Internal { .. } => unreachable!(),
        }
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Checks structural invariants: preorder child links, depths, sample
    /// counts and probability products.
    pub fn validate(&self, n_features: usize, n_classes: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(format!("malformed tree: {msg}")));
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        if self.nodes[0].depth != 0 || self.nodes[0].absolute_probability != 1.0 {
            return bad("root must have depth 0 and probability 1".into());
        }
        let mut seen = vec![false; self.nodes.len()];
        seen[0] = true;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.histogram.len() != n_classes {
                return bad(format!("node {i} histogram has wrong length"));
            }
            match node.kind {
                NodeKind::Leaf { class } if class >= n_classes => {
                    return bad(format!("node {i} predicts unknown class {class}"))
                }
                NodeKind::Leaf { .. } => {}
                NodeKind::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= n_features || !threshold.is_finite() {
                        return bad(format!("node {i} has invalid split"));
                    }
                    if left != i + 1 || right <= left || right >= self.nodes.len() {
                        return bad(format!("node {i} children are not in preorder"));
                    }
                    for c in [left, right] {
                        if std::mem::replace(&mut seen[c], true) {
                            return bad(format!("node {c} has two parents"));
                        }
                        if self.nodes[c].depth != node.depth + 1 {
                            return bad(format!("node {c} depth"));
                        }
                        let expected = node.absolute_probability * self.nodes[c].branch_probability;
                        if (self.nodes[c].absolute_probability - expected).abs() > 1e-12 {
                            return bad(format!("node {c} absolute probability"));
                        }
                    }
                    if self.nodes[left].n_samples + self.nodes[right].n_samples != node.n_samples {
                        return bad(format!("node {i} sample counts do not add up"));
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("unreachable nodes".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub schema_version: u32,
    pub params: TrainParams,
    pub n_features: usize,
    pub class_names: Vec<String>,
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Majority vote; ties go to the lowest class index.
    pub fn predict(&self, row: &[f64]) -> Result<usize> {
        if row.len() != self.n_features {
            return Err(Error::FeatureMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        Ok(self.predict_unchecked(row))
    }

    pub(crate) fn predict_unchecked(&self, row: &[f64]) -> usize {
        if let [tree] = self.trees.as_slice() {
            return tree.predict_row(row);
        }
        let mut votes = vec![0usize; self.n_classes()];
        for tree in &self.trees {
            votes[tree.predict_row(row)] += 1;
        }
        majority_class(&votes)
    }

    pub fn predict_dataset(&self, ds: &crate::dataset::Dataset) -> Result<Vec<usize>> {
        if ds.n_features() != self.n_features {
            return Err(Error::FeatureMismatch {
                expected: self.n_features,
                got: ds.n_features(),
            });
        }
        Ok(ds.rows().map(|r| self.predict_unchecked(r)).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("forest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let forest: Forest = serde_json::from_str(text)?;
        if forest.schema_version != SCHEMA_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported forest schema version {}",
                forest.schema_version
            )));
        }
        if forest.trees.is_empty() || forest.class_names.len() < 2 {
            return Err(Error::Invalid(
                "forest needs trees and at least 2 classes".into(),
            ));
        }
        for tree in &forest.trees {
            tree.validate(forest.n_features, forest.n_classes())?;
        }
        Ok(forest)
    }

    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// FNV-1a over predicted class indices. Shared with the generated C driver.
pub fn prediction_checksum(predictions: impl IntoIterator<Item = usize>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in predictions {
        for b in (p as u32).to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}
