//! Classification trees with Gini impurity and rule extraction.
//!
//! Gini impurity `sum_k p_k (1 - p_k)` equals the summed variance of one-hot
//! class indicators, so a classification tree is a regression tree fitted on
//! one-hot targets whose leaf scores are class proportions.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{RegressionTree, TreeError, TreeHyperParams};
use crate::matrix::Matrix;
use crate::nn::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    LessOrEqual,
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub feature: usize,
    pub comparison: Comparison,
    pub threshold: f64,
}

impl Predicate {
    pub fn holds(&self, x: &[f64]) -> bool {
        match self.comparison {
            Comparison::LessOrEqual => x[self.feature] <= self.threshold,
            Comparison::Greater => x[self.feature] > self.threshold,
        }
    }
}

/// Conjunction of predicates along one root-to-leaf path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub leaf: usize,
    pub predicates: Vec<Predicate>,
    /// Majority label of the leaf.
    pub label: usize,
    /// Share of the leaf's training objects carrying `label`.
    pub purity: f64,
}

impl Rule {
    pub fn matches(&self, x: &[f64]) -> bool {
        self.predicates.iter().all(|p| p.holds(x))
    }

    /// Human-readable form using the given feature names.
    pub fn describe(&self, names: &[String]) -> String {
        let clauses: Vec<String> = self
            .predicates
            .iter()
            .map(|p| {
                let name = names
                    .get(p.feature)
                    .cloned()
                    .unwrap_or_else(|| format!("x{}", p.feature + 1));
                let op = match p.comparison {
                    Comparison::LessOrEqual => "<=",
                    Comparison::Greater => ">",
                };
                format!("{name} {op} {}", p.threshold)
            })
            .collect();
        let body = if clauses.is_empty() {
            "true".to_string()
        } else {
            clauses.join(" AND ")
        };
        format!("IF {body} THEN label {}", self.label)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe(&[]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTree {
    tree: RegressionTree,
    /// Distinct labels in ascending order; leaf score column `k` is `classes[k]`.
    classes: Vec<usize>,
}

impl ClassificationTree {
    pub fn fit(x: &Matrix, labels: &[usize], hp: &TreeHyperParams) -> Result<Self, TreeError> {
        if labels.len() != x.rows() {
            return Err(TreeError::TargetMismatch {
                samples: x.rows(),
                targets: labels.len(),
            });
        }
        let mut classes = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let mut onehot = Matrix::zeros(labels.len(), classes.len().max(1));
        for (i, l) in labels.iter().enumerate() {
            let k = classes.binary_search(l).expect("label collected above");
            onehot.set(i, k, 1.0);
        }
        let tree = RegressionTree::fit(x, &onehot, hp)?;
        Ok(Self { tree, classes })
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn tree(&self) -> &RegressionTree {
        &self.tree
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, TreeError> {
        Ok(self.classes[argmax(self.tree.predict(x)?)])
    }

    /// Class proportions of the leaf containing `x`, aligned with [`classes`](Self::classes).
    pub fn proportions(&self, x: &[f64]) -> Result<&[f64], TreeError> {
        self.tree.predict(x)
    }

    pub fn rules(&self) -> Vec<Rule> {
        self.tree
            .leaf_paths()
            .into_iter()
            .enumerate()
            .map(|(k, predicates)| {
                let scores = &self.tree.leaf_scores()[k];
                let best = argmax(scores);
                Rule {
                    leaf: k + 1,
                    predicates,
                    label: self.classes[best],
                    purity: scores[best],
                }
            })
            .collect()
    }
}
