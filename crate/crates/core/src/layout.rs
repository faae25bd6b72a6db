//! Flat node arrays in breadth-first or probability-greedy order.
//!
//! The greedy order walks the hot chain from the root: after emitting a
//! node it continues into the child whose subtree holds the most probable
//! leaf (left on ties), so the most likely root-to-leaf path occupies slots
//! `0..k`. Children left behind are queued and later expanded the same way,
//! most probable first (earlier preorder index on ties).

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{Forest, NodeKind, Tree, TreeNode};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum LayoutStrategy {
    #[default]
    BfsDefault,
    ProbabilityGreedy,
}

impl std::fmt::Display for LayoutStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LayoutStrategy::BfsDefault => "bfs_default",
            LayoutStrategy::ProbabilityGreedy => "probability_greedy",
        })
    }
}

impl std::str::FromStr for LayoutStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bfs_default" | "bfs" => Ok(LayoutStrategy::BfsDefault),
            "probability_greedy" | "greedy" => Ok(LayoutStrategy::ProbabilityGreedy),
            _ => Err(Error::Invalid(format!(
                "unknown layout `{s}`; expected bfs_default or probability_greedy"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatNode {
    pub feature_index: usize,
    pub threshold: f64,
    pub left_index: usize,
    pub right_index: usize,
    pub leaf: bool,
    pub class_index: usize,
    pub absolute_probability: f64,
    /// Preorder index of this node in the source tree.
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeArray {
    pub strategy: LayoutStrategy,
    pub nodes: Vec<FlatNode>,
}

/// Heap entry: larger probability first, then smaller preorder index.
struct Pending {
    probability: f64,
    node: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.probability
            .total_cmp(&other.probability)
            .then(other.node.cmp(&self.node))
    }
}

/// Largest leaf probability inside each node's subtree.
fn subtree_max_leaf(tree: &Tree) -> Vec<f64> {
    let mut best = vec![0.0; tree.nodes.len()];
    for i in (0..tree.nodes.len()).rev() {
        best[i] = match tree.nodes[i].children() {
            None => tree.nodes[i].absolute_probability,
            Some((l, r)) => best[l].max(best[r]),
        };
    }
    best
}

/// Order of tree node indices for a strategy.
pub fn layout_order(tree: &Tree, strategy: LayoutStrategy) -> Vec<usize> {
    let mut order = Vec::with_capacity(tree.nodes.len());
    match strategy {
        LayoutStrategy::BfsDefault => {
            let mut queue = VecDeque::from([0]);
            while let Some(i) = queue.pop_front() {
                order.push(i);
                if let Some((l, r)) = tree.nodes[i].children() {
                    queue.push_back(l);
                    queue.push_back(r);
                }
            }
        }
        LayoutStrategy::ProbabilityGreedy => {
            let hot = subtree_max_leaf(tree);
            let mut deferred = BinaryHeap::from([Pending {
                probability: 1.0,
                node: 0,
            }]);
            while let Some(Pending { node, .. }) = deferred.pop() {
                let mut i = node;
                loop {
                    order.push(i);
                    let Some((l, r)) = tree.nodes[i].children() else {
                        break;
                    };
                    let (next, cold) = if hot[r] > hot[l] { (r, l) } else { (l, r) };
                    deferred.push(Pending {
                        probability: tree.nodes[cold].absolute_probability,
                        node: cold,
                    });
                    i = next;
                }
            }
        }
    }
    order
}

pub fn flatten(tree: &Tree, strategy: LayoutStrategy) -> NodeArray {
    let order = layout_order(tree, strategy);
    let mut slot = vec![0; tree.nodes.len()];
    for (pos, &i) in order.iter().enumerate() {
        slot[i] = pos;
    }
    let nodes = order
        .iter()
        .map(|&i| {
            let n = &tree.nodes[i];
            let (feature_index, threshold, left_index, right_index, leaf, class_index) =
                match n.kind {
                    NodeKind::Internal {
                        feature,
                        threshold,
                        left,
                        right,
                    } => (feature, threshold, slot[left], slot[right], false, 0),
                    NodeKind::Leaf { class } => (0, 0.0, 0, 0, true, class),
                };
            FlatNode {
                feature_index,
                threshold,
                left_index,
                right_index,
                leaf,
                class_index,
                absolute_probability: n.absolute_probability,
                source: i,
            }
        })
        .collect();
    NodeArray { strategy, nodes }
}

impl NodeArray {
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            if n.leaf {
                return n.class_index;
            }
            i = if row[n.feature_index] <= n.threshold {
                n.left_index
            } else {
                n.right_index
            };
        }
    }

    /// Rebuilds the preorder tree, taking the non-routing payload (sample
    /// counts, histograms) from `source`.
    pub fn to_tree(&self, source: &Tree) -> Result<Tree> {
        if self.nodes.len() != source.nodes.len() {
            return Err(Error::Invalid("node array and tree differ in size".into()));
        }
        let mut nodes: Vec<TreeNode> = Vec::with_capacity(self.nodes.len());
        // (array slot, parent preorder index, is_left)
        let mut stack = vec![(0usize, None::<(usize, bool)>)];
        while let Some((slot, parent)) = stack.pop() {
            let flat = &self.nodes[slot];
            let payload = &source.nodes[flat.source];
            let idx = nodes.len();
            let kind = if flat.leaf {
                NodeKind::Leaf {
                    class: flat.class_index,
                }
            } else {
                NodeKind::Internal {
                    feature: flat.feature_index,
                    threshold: flat.threshold,
                    left: 0,
                    right: 0,
                }
            };
            nodes.push(TreeNode {
                kind,
                ..payload.clone()
            });
            if let Some((p, is_left)) = parent {
                if let NodeKind::Internal { left, right, .. } = &mut nodes[p].kind {
                    if is_left {
                        *left = idx;
                    } else {
                        *right = idx;
                    }
                }
            }
            if !flat.leaf {
                stack.push((flat.right_index, Some((idx, false))));
                stack.push((flat.left_index, Some((idx, true))));
            }
        }
        Ok(Tree { nodes })
    }
}

/// Slots of the most probable root-to-leaf path (leftmost on ties).
pub fn hot_path(array: &NodeArray) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut stack = vec![vec![0usize]];
    while let Some(path) = stack.pop() {
        let n = &array.nodes[*path.last().expect("non-empty path")];
        if n.leaf {
            if best
                .as_ref()
                .is_none_or(|(p, _)| n.absolute_probability > *p)
            {
                best = Some((n.absolute_probability, path));
            }
            continue;
        }
        let mut right = path.clone();
        right.push(n.right_index);
        let mut left = path;
        left.push(n.left_index);
        stack.push(right);
        stack.push(left);
    }
    best.map(|(_, p)| p).unwrap_or_default()
}

/// Cache-friendly packed node used by the interpreter timings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[repr(C)]
pub struct PackedNode {
    pub threshold: f64,
    pub feature: u32,
    /// Leaf when negative; the class is then `!left`.
    pub left: i32,
    pub right: i32,
}

/// All trees of a forest packed back to back in one layout.
#[derive(Debug, Clone)]
pub struct FlatForest {
    pub strategy: LayoutStrategy,
    pub nodes: Vec<PackedNode>,
    pub roots: Vec<usize>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl FlatForest {
    pub fn new(forest: &Forest, strategy: LayoutStrategy) -> Self {
        let mut nodes = Vec::new();
        let mut roots = Vec::with_capacity(forest.trees.len());
        for tree in &forest.trees {
            let base = nodes.len();
            roots.push(base);
            for n in flatten(tree, strategy).nodes {
                nodes.push(if n.leaf {
                    PackedNode {
                        threshold: 0.0,
                        feature: 0,
                        left: !(n.class_index as i32),
                        right: -1,
                    }
                } else {
                    PackedNode {
                        threshold: n.threshold,
                        feature: n.feature_index as u32,
                        left: (base + n.left_index) as i32,
                        right: (base + n.right_index) as i32,
                    }
                });
            }
        }
        FlatForest {
            strategy,
            nodes,
            roots,
            n_features: forest.n_features,
            n_classes: forest.n_classes(),
        }
    }

    #[inline]
    fn tree_class(&self, root: usize, row: &[f64]) -> usize {
        let mut n = &self.nodes[root];
        while n.left >= 0 {
            let next = if row[n.feature as usize] <= n.threshold {
                n.left
            } else {
                n.right
            };
            n = &self.nodes[next as usize];
        }
        !n.left as usize
    }

    /// Majority vote with a caller-provided scratch buffer.
    pub fn predict_with(&self, row: &[f64], votes: &mut [u32]) -> usize {
        votes.iter_mut().for_each(|v| *v = 0);
        for &root in &self.roots {
            votes[self.tree_class(root, row)] += 1;
        }
        let mut best = 0;
        for c in 1..votes.len() {
            if votes[c] > votes[best] {
                best = c;
            }
        }
        best
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut votes = vec![0u32; self.n_classes];
        self.predict_with(row, &mut votes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSection {
    pub strategy: LayoutStrategy,
    /// Per tree, the preorder index stored in each array slot.
    pub order: Vec<Vec<usize>>,
}

/// Forest JSON with the layout order attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutDocument {
    #[serde(flatten)]
    pub forest: Forest,
    pub layout: LayoutSection,
}

impl LayoutDocument {
    pub fn new(forest: Forest, strategy: LayoutStrategy) -> Self {
        let order = forest
            .trees
            .iter()
            .map(|t| layout_order(t, strategy))
            .collect();
        LayoutDocument {
            forest,
            layout: LayoutSection { strategy, order },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::fixtures::*;

    /// Full depth-2 tree where every right branch carries probability 0.8.
    fn right_heavy() -> Tree {
        Tree {
            nodes: vec![
                internal(0, 0.0, 1, 4, 0, vec![5, 5], 1.0, 1.0),
                internal(1, 0.0, 2, 3, 1, vec![1, 1], 0.2, 0.2),
                leaf(0, 2, vec![1, 0], 0.2, 0.04),
                leaf(1, 2, vec![0, 1], 0.8, 0.16),
                internal(1, 1.0, 5, 6, 1, vec![4, 4], 0.8, 0.8),
                leaf(0, 2, vec![1, 0], 0.2, 0.16),
                leaf(1, 2, vec![0, 1], 0.8, 0.64),
            ],
        }
    }

    #[test]
    fn single_leaf() {
        let t = Tree {
            nodes: vec![leaf(1, 0, vec![0, 3], 1.0, 1.0)],
        };
        for s in [
            LayoutStrategy::BfsDefault,
            LayoutStrategy::ProbabilityGreedy,
        ] {
            let a = flatten(&t, s);
            assert_eq!(a.nodes.len(), 1);
            assert!(a.nodes[0].leaf);
            assert_eq!(hot_path(&a), vec![0]);
        }
    }

    #[test]
    fn greedy_stump_order() {
        let mut t = stump(0.5, 9, 1);
        assert_eq!(
            layout_order(&t, LayoutStrategy::ProbabilityGreedy),
            vec![0, 1, 2]
        );
        t = stump(0.5, 1, 9);
        assert_eq!(
            layout_order(&t, LayoutStrategy::ProbabilityGreedy),
            vec![0, 2, 1]
        );
        assert_eq!(
            hot_path(&flatten(&stump(0.5, 9, 1), LayoutStrategy::BfsDefault)),
            vec![0, 1]
        );
    }

    #[test]
    fn right_spine_is_contiguous() {
        let t = right_heavy();
        let order = layout_order(&t, LayoutStrategy::ProbabilityGreedy);
        assert_eq!(&order[..3], &[0, 4, 6]);
        // deferred queue pops node 1 (0.2), then 5 (0.16), then 2 (0.04)
        assert_eq!(order, vec![0, 4, 6, 1, 3, 5, 2]);
        assert_eq!(
            layout_order(&t, LayoutStrategy::BfsDefault),
            vec![0, 1, 4, 2, 3, 5, 6]
        );
        let a = flatten(&t, LayoutStrategy::ProbabilityGreedy);
        assert_eq!(hot_path(&a), vec![0, 1, 2]);
    }

    #[test]
    fn hot_path_argmax_leaf() {
        // leaves 0.9 / 0.05 / 0.05
        let t = skewed();
        let a = flatten(&t, LayoutStrategy::BfsDefault);
        let path = hot_path(&a);
        assert_eq!(path.len(), 2);
        assert_eq!(a.nodes[path[1]].absolute_probability, 0.9);
    }

    #[test]
    fn uniform_tree_takes_leftmost_path() {
        let t = Tree {
            nodes: vec![
                internal(0, 0.0, 1, 4, 0, vec![2, 2], 1.0, 1.0),
                internal(0, -1.0, 2, 3, 1, vec![2, 0], 0.5, 0.5),
                leaf(0, 2, vec![1, 0], 0.5, 0.25),
                leaf(0, 2, vec![1, 0], 0.5, 0.25),
                internal(0, 1.0, 5, 6, 1, vec![0, 2], 0.5, 0.5),
                leaf(1, 2, vec![0, 1], 0.5, 0.25),
                leaf(1, 2, vec![0, 1], 0.5, 0.25),
            ],
        };
        let a = flatten(&t, LayoutStrategy::BfsDefault);
        let sources: Vec<usize> = hot_path(&a).iter().map(|&s| a.nodes[s].source).collect();
        assert_eq!(sources, vec![0, 1, 2]);
        let g = flatten(&t, LayoutStrategy::ProbabilityGreedy);
        assert_eq!(hot_path(&g), vec![0, 1, 2]);
    }

    #[test]
    fn rebuild_round_trip() {
        for t in [right_heavy(), skewed(), stump(1.0, 2, 3)] {
            for s in [
                LayoutStrategy::BfsDefault,
                LayoutStrategy::ProbabilityGreedy,
            ] {
                let a = flatten(&t, s);
                let back = a.to_tree(&t).unwrap();
                assert_eq!(back, t);
                assert_eq!(flatten(&back, s), a);
            }
        }
    }

    #[test]
    fn packed_forest_predicts_like_tree() {
        let forest = Forest {
            schema_version: crate::tree::SCHEMA_VERSION,
            params: Default::default(),
            n_features: 2,
            class_names: vec!["a".into(), "b".into()],
            trees: vec![right_heavy(), skewed(), stump(0.25, 1, 1)],
        };
        for s in [
            LayoutStrategy::BfsDefault,
            LayoutStrategy::ProbabilityGreedy,
        ] {
            let flat = FlatForest::new(&forest, s);
            for x in [-1.5, -0.5, 0.0, 0.3, 0.7, 1.0, 2.0] {
                for y in [-1.0, 0.0, 0.5, 1.0, 1.5] {
                    let row = [x, y];
                    assert_eq!(flat.predict_row(&row), forest.predict(&row).unwrap());
                }
            }
        }
    }

    #[test]
    fn layout_document_has_order() {
        let forest = Forest {
            schema_version: crate::tree::SCHEMA_VERSION,
            params: Default::default(),
            n_features: 2,
            class_names: vec!["a".into(), "b".into()],
            trees: vec![right_heavy()],
        };
        let doc = LayoutDocument::new(forest, LayoutStrategy::ProbabilityGreedy);
        let text = doc.to_json();
        assert!(text.contains("\"probability_greedy\""));
        let back: LayoutDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
    }
}
