//! Multi-output CART regression trees.
//!
//! Impurity of a node is the sum over outputs of the within-node variance.
//! Splits are `x[feature] <= threshold` (left) with thresholds at midpoints of
//! consecutive distinct feature values. A split is kept when its weighted impurity
//! decrease `(n_node / n_total) * (impurity - weighted child impurity)` is at
//! least `min_impurity_decrease`. Ties go to the lowest feature, then the lowest
//! threshold.
//!
//! Leaves are numbered `1..=K` in depth-first, left-first order.

mod classify;
mod split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

pub use classify::{ClassificationTree, Comparison, Predicate, Rule};
pub use split::{best_split, Split, SplitConstraints};

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("no training samples")]
    Empty,
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{samples} samples but {targets} target rows")]
    TargetMismatch { samples: usize, targets: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid hyperparameters: {0}")]
    Config(String),
    #[error("malformed tree: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MinSamplesLeaf {
    Count(usize),
    /// Fraction of the training set, rounded up.
    Fraction(f64),
}

impl MinSamplesLeaf {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            MinSamplesLeaf::Count(c) => c.max(1),
            MinSamplesLeaf::Fraction(f) => ((f * n as f64).ceil() as usize).max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeHyperParams {
    /// 0 yields a single constant leaf.
    pub max_depth: usize,
    pub min_samples_leaf: MinSamplesLeaf,
    pub min_impurity_decrease: f64,
}

impl Default for TreeHyperParams {
    fn default() -> Self {
        Self::with_depth(2)
    }
}

impl TreeHyperParams {
    pub fn with_depth(max_depth: usize) -> Self {
        Self {
            max_depth,
            min_samples_leaf: MinSamplesLeaf::Count(1),
            min_impurity_decrease: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        match self.min_samples_leaf {
            MinSamplesLeaf::Count(0) => {
                return Err(TreeError::Config("min_samples_leaf must be at least 1".into()))
            }
            MinSamplesLeaf::Fraction(f) if !(f > 0.0 && f < 1.0) => {
                return Err(TreeError::Config(format!(
                    "min_samples_leaf fraction {f} outside (0, 1)"
                )))
            }
            _ => {}
        }
        if !(self.min_impurity_decrease >= 0.0 && self.min_impurity_decrease.is_finite()) {
            return Err(TreeError::Config(format!(
                "min_impurity_decrease {} must be a non-negative number",
                self.min_impurity_decrease
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    /// 1-based leaf index into the score matrix.
    Leaf { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    n_features: usize,
    root: Node,
    /// Score matrix `W`, one row per leaf.
    leaf_scores: Vec<Vec<f64>>,
}

impl RegressionTree {
    /// Greedy top-down fit of `targets` (n x C) on `x` (n x p).
    pub fn fit(x: &Matrix, targets: &Matrix, hp: &TreeHyperParams) -> Result<Self, TreeError> {
        hp.validate()?;
        if x.rows() == 0 {
            return Err(TreeError::Empty);
        }
        if targets.rows() != x.rows() {
            return Err(TreeError::TargetMismatch {
                samples: x.rows(),
                targets: targets.rows(),
            });
        }
        if !x.is_finite() {
            return Err(TreeError::NonFinite("features"));
        }
        if !targets.is_finite() {
            return Err(TreeError::NonFinite("targets"));
        }
        let constraints = SplitConstraints {
            min_samples_leaf: hp.min_samples_leaf.resolve(x.rows()),
            min_impurity_decrease: hp.min_impurity_decrease,
            total_samples: x.rows(),
        };
        let mut builder = Builder {
            x,
            targets,
            constraints,
            max_depth: hp.max_depth,
            leaf_scores: Vec::new(),
        };
        let mut indices: Vec<usize> = (0..x.rows()).collect();
        let root = builder.grow(&mut indices, 0);
        Ok(Self {
            n_features: x.cols(),
            root,
            leaf_scores: builder.leaf_scores,
        })
    }

    /// A single-leaf tree predicting `scores` everywhere.
    pub fn constant(n_features: usize, scores: Vec<f64>) -> Self {
        Self {
            n_features,
            root: Node::Leaf { index: 1 },
            leaf_scores: vec![scores],
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_outputs(&self) -> usize {
        self.leaf_scores[0].len()
    }

    /// Number of leaves `K`.
    pub fn leaf_count(&self) -> usize {
        self.leaf_scores.len()
    }

    pub fn leaf_scores(&self) -> &[Vec<f64>] {
        &self.leaf_scores
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn depth(&self) -> usize {
        fn go(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(left).max(go(right)),
            }
        }
        go(&self.root)
    }

    fn check(&self, x: &[f64]) -> Result<(), TreeError> {
        if x.len() != self.n_features {
            return Err(TreeError::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Leaf index `q(x)` in `1..=K`.
    pub fn leaf_index(&self, x: &[f64]) -> Result<usize, TreeError> {
        self.check(x)?;
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { index } => return Ok(*index),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    /// `W[q(x)]`.
    pub fn predict(&self, x: &[f64]) -> Result<&[f64], TreeError> {
        let leaf = self.leaf_index(x)?;
        Ok(&self.leaf_scores[leaf - 1])
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Matrix, TreeError> {
        let mut out = Matrix::zeros(x.rows(), self.n_outputs());
        for i in 0..x.rows() {
            out.row_mut(i).copy_from_slice(self.predict(x.row(i))?);
        }
        Ok(out)
    }

    /// Root-to-leaf predicate lists, indexed by `leaf - 1`.
    pub fn leaf_paths(&self) -> Vec<Vec<Predicate>> {
        fn go(n: &Node, path: &mut Vec<Predicate>, out: &mut Vec<Vec<Predicate>>) {
            match n {
                Node::Leaf { index } => out[index - 1] = path.clone(),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    path.push(Predicate {
                        feature: *feature,
                        comparison: Comparison::LessOrEqual,
                        threshold: *threshold,
                    });
                    go(left, path, out);
                    path.last_mut().expect("pushed").comparison = Comparison::Greater;
                    go(right, path, out);
                    path.pop();
                }
            }
        }
        let mut out = vec![Vec::new(); self.leaf_count()];
        go(&self.root, &mut Vec::new(), &mut out);
        out
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    targets: &'a Matrix,
    constraints: SplitConstraints,
    max_depth: usize,
    leaf_scores: Vec<Vec<f64>>,
}

impl Builder<'_> {
    fn grow(&mut self, indices: &mut [usize], depth: usize) -> Node {
        let split = if depth < self.max_depth && !split::is_pure(self.targets, indices) {
            split::best_split_indices(self.x, self.targets, indices, &self.constraints)
        } else {
            None
        };
        let Some(split) = split else {
            let mut mean = vec![0.0; self.targets.cols()];
            for &i in indices.iter() {
                for (m, v) in mean.iter_mut().zip(self.targets.row(i)) {
                    *m += v;
                }
            }
            let n = indices.len() as f64;
            mean.iter_mut().for_each(|m| *m /= n);
            self.leaf_scores.push(mean);
            return Node::Leaf {
                index: self.leaf_scores.len(),
            };
        };
        let (mut left, mut right): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.x.get(i, split.feature) <= split.threshold);
        let left_node = self.grow(&mut left, depth + 1);
        let right_node = self.grow(&mut right, depth + 1);
        Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(left_node),
            right: Box::new(right_node),
        }
    }
}

// Serialized form: recursive records, leaves carry their index and score row.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeRecord {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<NodeRecord>,
        right: Box<NodeRecord>,
    },
    Leaf {
        leaf: usize,
        scores: Vec<f64>,
    },
}

#[derive(Serialize, Deserialize)]
struct TreeRecord {
    n_features: usize,
    root: NodeRecord,
}

impl Serialize for RegressionTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        fn go(n: &Node, scores: &[Vec<f64>]) -> NodeRecord {
            match n {
                Node::Leaf { index } => NodeRecord::Leaf {
                    leaf: *index,
                    scores: scores[index - 1].clone(),
                },
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => NodeRecord::Split {
                    feature: *feature,
                    threshold: *threshold,
                    left: Box::new(go(left, scores)),
                    right: Box::new(go(right, scores)),
                },
            }
        }
        TreeRecord {
            n_features: self.n_features,
            root: go(&self.root, &self.leaf_scores),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RegressionTree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rec = TreeRecord::deserialize(d)?;
        RegressionTree::from_record(rec).map_err(serde::de::Error::custom)
    }
}

impl RegressionTree {
    fn from_record(rec: TreeRecord) -> Result<Self, TreeError> {
        let mut leaves: Vec<(usize, Vec<f64>)> = Vec::new();
        fn go(
            r: NodeRecord,
            n_features: usize,
            leaves: &mut Vec<(usize, Vec<f64>)>,
        ) -> Result<Node, TreeError> {
            Ok(match r {
                NodeRecord::Leaf { leaf, scores } => {
                    leaves.push((leaf, scores));
                    Node::Leaf { index: leaf }
                }
                NodeRecord::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= n_features {
                        return Err(TreeError::Malformed(format!(
                            "split on feature {feature} of a {n_features}-feature tree"
                        )));
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left: Box::new(go(*left, n_features, leaves)?),
                        right: Box::new(go(*right, n_features, leaves)?),
                    }
                }
            })
        }
        let root = go(rec.root, rec.n_features, &mut leaves)?;
        // Leaves must appear as 1..=K in depth-first order.
        for (pos, (leaf, _)) in leaves.iter().enumerate() {
            if *leaf != pos + 1 {
                return Err(TreeError::Malformed(format!(
                    "leaf at depth-first position {} is numbered {leaf}",
                    pos + 1
                )));
            }
        }
        let width = leaves[0].1.len();
        if width == 0 || leaves.iter().any(|(_, s)| s.len() != width) {
            return Err(TreeError::Malformed("score rows differ in length".into()));
        }
        Ok(Self {
            n_features: rec.n_features,
            root,
            leaf_scores: leaves.into_iter().map(|(_, s)| s).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(v: &[f64]) -> Matrix {
        Matrix::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn constant_target_gives_single_leaf() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [2.0, 3.0], [4.0, -1.0]]).unwrap();
        let g = Matrix::from_rows(&[[0.1, 7.0]; 3]).unwrap();
        let t = RegressionTree::fit(&x, &g, &TreeHyperParams::with_depth(3)).unwrap();
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(t.leaf_index(&[100.0, 100.0]).unwrap(), 1);
        let w = t.predict(&[0.0, 0.0]).unwrap();
        assert!((w[0] - 0.1).abs() < 1e-15 && w[1] == 7.0);
    }

    #[test]
    fn step_function_split_at_midpoint() {
        let x = column(&[0.0, 1.0, 2.0, 3.0]);
        let g = column(&[0.0, 0.0, 10.0, 10.0]);
        let t = RegressionTree::fit(&x, &g, &TreeHyperParams::with_depth(1)).unwrap();
        match t.root() {
            Node::Split {
                feature, threshold, ..
            } => assert_eq!((*feature, *threshold), (0, 1.5)),
            n => panic!("expected split, got {n:?}"),
        }
        assert_eq!(t.predict(&[0.7]).unwrap(), &[0.0]);
        assert_eq!(t.predict(&[2.2]).unwrap(), &[10.0]);
        assert_eq!(t.leaf_index(&[0.7]).unwrap(), 1);
        assert_eq!(t.leaf_index(&[2.2]).unwrap(), 2);
    }

    #[test]
    fn depth_zero_is_constant_mean() {
        let x = column(&[0.0, 1.0, 2.0, 3.0]);
        let g = column(&[0.0, 0.0, 10.0, 10.0]);
        let t = RegressionTree::fit(&x, &g, &TreeHyperParams::with_depth(0)).unwrap();
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(t.predict(&[9.0]).unwrap(), &[5.0]);
    }

    #[test]
    fn leaf_counts_bounded_by_depth() {
        let n = 64;
        let x = Matrix::from_vec(n, 2, (0..2 * n).map(|i| ((i * 37) % 101) as f64).collect()).unwrap();
        let g = Matrix::from_vec(n, 2, (0..2 * n).map(|i| ((i * 53) % 29) as f64).collect()).unwrap();
        for (depth, bound) in [(1, 2), (1, 2), (1, 2), (2, 4), (2, 4)] {
            let t = RegressionTree::fit(&x, &g, &TreeHyperParams::with_depth(depth)).unwrap();
            assert!(t.leaf_count() <= bound);
            assert!(t.depth() <= depth);
        }
    }

    #[test]
    fn min_samples_leaf_respected() {
        let x = column(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let g = column(&[100.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let hp = TreeHyperParams {
            max_depth: 1,
            min_samples_leaf: MinSamplesLeaf::Count(2),
            min_impurity_decrease: 0.0,
        };
        let t = RegressionTree::fit(&x, &g, &hp).unwrap();
        match t.root() {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 1.5),
            n => panic!("{n:?}"),
        }
        let hp = TreeHyperParams {
            min_samples_leaf: MinSamplesLeaf::Fraction(0.5),
            ..hp
        };
        let t = RegressionTree::fit(&x, &g, &hp).unwrap();
        assert!(matches!(t.root(), Node::Split { threshold, .. } if *threshold == 2.5));
    }

    #[test]
    fn min_impurity_decrease_blocks_weak_splits() {
        let x = column(&[0.0, 1.0, 2.0, 3.0]);
        let g = column(&[0.0, 0.0, 10.0, 10.0]);
        // Root variance 25, children 0: weighted decrease is 25.
        let mut hp = TreeHyperParams::with_depth(1);
        hp.min_impurity_decrease = 25.0;
        assert_eq!(RegressionTree::fit(&x, &g, &hp).unwrap().leaf_count(), 2);
        hp.min_impurity_decrease = 25.0 + 1e-9;
        assert_eq!(RegressionTree::fit(&x, &g, &hp).unwrap().leaf_count(), 1);
    }

    #[test]
    fn errors() {
        let empty = Matrix::zeros(0, 2);
        assert!(matches!(
            RegressionTree::fit(&empty, &empty, &TreeHyperParams::default()),
            Err(TreeError::Empty)
        ));
        let x = column(&[1.0, 2.0]);
        assert!(matches!(
            RegressionTree::fit(&x, &column(&[1.0]), &TreeHyperParams::default()),
            Err(TreeError::TargetMismatch { .. })
        ));
        let t = RegressionTree::fit(&x, &column(&[1.0, 2.0]), &TreeHyperParams::default()).unwrap();
        assert!(matches!(
            t.predict(&[1.0, 2.0]),
            Err(TreeError::DimensionMismatch { .. })
        ));
        let bad = TreeHyperParams {
            min_samples_leaf: MinSamplesLeaf::Fraction(1.5),
            ..TreeHyperParams::default()
        };
        assert!(matches!(
            RegressionTree::fit(&x, &column(&[1.0, 2.0]), &bad),
            Err(TreeError::Config(_))
        ));
    }

    #[test]
    fn training_points_reach_the_leaf_they_averaged_into() {
        let x = Matrix::from_rows(&[[0.0, 5.0], [1.0, 4.0], [2.0, 3.0], [3.0, 2.0], [4.0, 1.0], [5.0, 0.0]])
            .unwrap();
        let g = Matrix::from_rows(&[[1.0], [2.0], [4.0], [8.0], [16.0], [32.0]]).unwrap();
        let t = RegressionTree::fit(&x, &g, &TreeHyperParams::with_depth(2)).unwrap();
        let mut sums = vec![(0.0, 0usize); t.leaf_count()];
        for i in 0..x.rows() {
            let leaf = t.leaf_index(x.row(i)).unwrap();
            sums[leaf - 1].0 += g.get(i, 0);
            sums[leaf - 1].1 += 1;
        }
        for (k, (s, c)) in sums.iter().enumerate() {
            assert!(*c > 0);
            assert_eq!(t.leaf_scores()[k][0], s / *c as f64);
        }
    }

    #[test]
    fn serde_round_trip() {
        let x = column(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let g = Matrix::from_rows(&[[0.1, 1.0], [0.2, 1.0], [5.0, 0.0], [5.5, 2.0], [9.0, 3.0]]).unwrap();
        let t = RegressionTree::fit(&x, &g, &TreeHyperParams::with_depth(2)).unwrap();
        let text = serde_json::to_string(&t).unwrap();
        let back: RegressionTree = serde_json::from_str(&text).unwrap();
        assert_eq!(back, t);
        let broken = text.replace("\"leaf\":2", "\"leaf\":7");
        assert!(serde_json::from_str::<RegressionTree>(&broken).is_err());
    }
}
