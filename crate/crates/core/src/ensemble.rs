//! Layer-wise boosted distillation of a network into regression trees.
//!
//! Tree `l` reads activation `a^l` and is fitted to the residual between the
//! network logits and the running prediction, which starts at the mean logit
//! vector over the training set. Each fitted tree is added to the running
//! prediction (optionally scaled by a least-squares multiplier), so the
//! residuals shrink from layer to layer. The final activation `a^M` is the
//! target and is never an input.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::matrix::Matrix;
use crate::nn::{argmax, log_softmax, softmax, FeedForwardNet, NnError, Stream};
use crate::persist::{self, PersistError};
use crate::tree::{RegressionTree, TreeError, TreeHyperParams};
use crate::FORMAT_VERSION;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("{found} tree configurations for a network with {expected} layers")]
    LayerCountMismatch { expected: usize, found: usize },
    #[error("no training objects")]
    Empty,
    #[error("stale model: activation {layer} has dimension {found}, tree expects {expected}")]
    StaleModel {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("stream has {found} activations, ensemble needs at least {expected}")]
    StreamTooShort { expected: usize, found: usize },
    #[error("leaf index {index} of tree {layer} outside 1..={leaves}")]
    LeafOutOfRange {
        layer: usize,
        index: usize,
        leaves: usize,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    /// Mean squared logit difference.
    LogitMse,
    /// Cross-entropy `-sum p ln q` between network and ensemble class probabilities.
    #[default]
    ProbCrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillingEnsemble {
    base_prediction: Vec<f64>,
    multipliers: Vec<f64>,
    trees: Vec<RegressionTree>,
}

#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    version: u32,
    #[serde(flatten)]
    ensemble: DistillingEnsemble,
}

impl DistillingEnsemble {
    /// Fits one tree per logical layer of `net` on the activations of `data`.
    /// The dataset labels are not used.
    pub fn fit(
        net: &FeedForwardNet,
        data: &Dataset,
        hp: &[TreeHyperParams],
        use_multipliers: bool,
    ) -> Result<Self, EnsembleError> {
        Self::fit_with_trace(net, data, hp, use_multipliers).map(|(e, _)| e)
    }

    /// Also returns the training logit MSE before the first tree and after each tree.
    pub fn fit_with_trace(
        net: &FeedForwardNet,
        data: &Dataset,
        hp: &[TreeHyperParams],
        use_multipliers: bool,
    ) -> Result<(Self, Vec<f64>), EnsembleError> {
        if hp.len() != net.depth() {
            return Err(EnsembleError::LayerCountMismatch {
                expected: net.depth(),
                found: hp.len(),
            });
        }
        let activations = net.capture_batch(data.features())?;
        Self::fit_activations(&activations, hp, use_multipliers)
    }

    /// Fits on precomputed activation matrices `[A^0, ..., A^M]`; `A^M` is the target.
    pub fn fit_activations(
        activations: &[Matrix],
        hp: &[TreeHyperParams],
        use_multipliers: bool,
    ) -> Result<(Self, Vec<f64>), EnsembleError> {
        if activations.len() != hp.len() + 1 {
            return Err(EnsembleError::LayerCountMismatch {
                expected: activations.len().saturating_sub(1),
                found: hp.len(),
            });
        }
        let target = activations.last().expect("at least one activation");
        let n = target.rows();
        if n == 0 {
            return Err(EnsembleError::Empty);
        }
        let base_prediction = target.column_means();
        let mut running = Matrix::zeros(n, target.cols());
        for i in 0..n {
            running.row_mut(i).copy_from_slice(&base_prediction);
        }
        let mut trace = vec![mse(target, &running)];
        let mut trees = Vec::with_capacity(hp.len());
        let mut multipliers = Vec::with_capacity(hp.len());
        let mut residual = Matrix::zeros(n, target.cols());

        for (a, h) in activations.iter().zip(hp) {
            for i in 0..n {
                for ((r, t), y) in residual.row_mut(i).iter_mut().zip(target.row(i)).zip(running.row(i)) {
                    *r = t - y;
                }
            }
            let tree = RegressionTree::fit(a, &residual, h)?;
            let out = tree.predict_batch(a)?;
            let beta = if use_multipliers {
                fit_multiplier(&out, &residual)
            } else {
                1.0
            };
            for i in 0..n {
                for (y, o) in running.row_mut(i).iter_mut().zip(out.row(i)) {
                    *y += beta * o;
                }
            }
            trace.push(mse(target, &running));
            trees.push(tree);
            multipliers.push(beta);
        }
        Ok((
            Self {
                base_prediction,
                multipliers,
                trees,
            },
            trace,
        ))
    }

    /// Number of trees, equal to the network depth `M`.
    pub fn depth(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn base_prediction(&self) -> &[f64] {
        &self.base_prediction
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    pub fn num_classes(&self) -> usize {
        self.base_prediction.len()
    }

    /// Upper bound on the number of distinct discretized streams.
    pub fn max_streams(&self) -> usize {
        self.trees
            .iter()
            .map(RegressionTree::leaf_count)
            .fold(1usize, |acc, k| acc.saturating_mul(k))
    }

    fn check_activations(&self, activations: &[Vec<f64>]) -> Result<(), EnsembleError> {
        if activations.len() < self.depth() {
            return Err(EnsembleError::StreamTooShort {
                expected: self.depth(),
                found: activations.len(),
            });
        }
        for (layer, (tree, a)) in self.trees.iter().zip(activations).enumerate() {
            if tree.n_features() != a.len() {
                return Err(EnsembleError::StaleModel {
                    layer,
                    expected: tree.n_features(),
                    found: a.len(),
                });
            }
        }
        Ok(())
    }

    /// Leaf index of every tree, `[q^0(a^0), ..., q^{M-1}(a^{M-1})]`.
    /// Streams may omit the final activation.
    pub fn leaf_indices(&self, stream: &Stream) -> Result<Vec<usize>, EnsembleError> {
        self.check_activations(&stream.activations)?;
        self.trees
            .iter()
            .zip(&stream.activations)
            .map(|(t, a)| Ok(t.leaf_index(a)?))
            .collect()
    }

    /// Ensemble logits as a function of the leaf tuple alone.
    pub fn predict_leaves(&self, leaves: &[usize]) -> Result<Vec<f64>, EnsembleError> {
        if leaves.len() != self.depth() {
            return Err(EnsembleError::StreamTooShort {
                expected: self.depth(),
                found: leaves.len(),
            });
        }
        let mut out = self.base_prediction.clone();
        for (layer, ((tree, beta), &leaf)) in self.trees.iter().zip(&self.multipliers).zip(leaves).enumerate() {
            if leaf == 0 || leaf > tree.leaf_count() {
                return Err(EnsembleError::LeafOutOfRange {
                    layer,
                    index: leaf,
                    leaves: tree.leaf_count(),
                });
            }
            for (y, w) in out.iter_mut().zip(&tree.leaf_scores()[leaf - 1]) {
                *y += beta * w;
            }
        }
        Ok(out)
    }

    /// `base + sum_l beta_l * T^l(a^l)`.
    pub fn predict(&self, stream: &Stream) -> Result<Vec<f64>, EnsembleError> {
        let leaves = self.leaf_indices(stream)?;
        self.predict_leaves(&leaves)
    }

    /// Distillation error of the ensemble against the network on one input.
    pub fn distillation_error(
        &self,
        net: &FeedForwardNet,
        x: &[f64],
        metric: ErrorMetric,
    ) -> Result<f64, EnsembleError> {
        let stream = net.capture_stream(x)?;
        let ens = self.predict(&stream)?;
        Ok(distillation_error(stream.logits(), &ens, metric))
    }

    pub fn to_json(&self) -> String {
        persist::to_json(&EnsembleFile {
            version: FORMAT_VERSION,
            ensemble: self.clone(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, EnsembleError> {
        let file: EnsembleFile = persist::from_versioned_json(text)?;
        let e = file.ensemble;
        if e.trees.is_empty() {
            return Err(PersistError::invalid("trees", "no trees").into());
        }
        if e.multipliers.len() != e.trees.len() {
            return Err(PersistError::invalid(
                "multipliers",
                format!("{} multipliers for {} trees", e.multipliers.len(), e.trees.len()),
            )
            .into());
        }
        if let Some(i) = e.trees.iter().position(|t| t.n_outputs() != e.base_prediction.len()) {
            return Err(PersistError::invalid(
                "trees",
                format!("tree {i} has {} outputs, expected {}", e.trees[i].n_outputs(), e.base_prediction.len()),
            )
            .into());
        }
        Ok(e)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EnsembleError> {
        Ok(persist::write_file(path.as_ref(), &self.to_json())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnsembleError> {
        Self::from_json(&persist::read_file(path.as_ref())?)
    }
}

fn mse(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.as_slice().len().max(1) as f64;
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n
}

/// Least-squares scale `argmin_b ||residuals - b * tree_outputs||^2`; 1 when the
/// tree outputs are identically zero.
pub fn fit_multiplier(tree_outputs: &Matrix, residuals: &Matrix) -> f64 {
    let (mut dot, mut norm) = (0.0, 0.0);
    for (o, r) in tree_outputs.as_slice().iter().zip(residuals.as_slice()) {
        dot += o * r;
        norm += o * o;
    }
    if norm == 0.0 {
        1.0
    } else {
        dot / norm
    }
}

pub fn distillation_error(nn_logits: &[f64], ens_logits: &[f64], metric: ErrorMetric) -> f64 {
    match metric {
        ErrorMetric::LogitMse => {
            nn_logits
                .iter()
                .zip(ens_logits)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / nn_logits.len().max(1) as f64
        }
        ErrorMetric::ProbCrossEntropy => {
            let p = softmax(nn_logits).unwrap_or_else(|_| vec![f64::NAN; nn_logits.len()]);
            let log_q = log_softmax(ens_logits);
            -p.iter().zip(&log_q).map(|(p, lq)| p * lq).sum::<f64>()
        }
    }
}

/// Per-object agreement between network and ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub logit_mse: f64,
    pub cross_entropy: f64,
    pub argmax_agrees: bool,
}

pub fn fidelity(nn_logits: &[f64], ens_logits: &[f64]) -> FidelityReport {
    FidelityReport {
        logit_mse: distillation_error(nn_logits, ens_logits, ErrorMetric::LogitMse),
        cross_entropy: distillation_error(nn_logits, ens_logits, ErrorMetric::ProbCrossEntropy),
        argmax_agrees: argmax(nn_logits) == argmax(ens_logits),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, NetBuilder};

    fn data(n: usize) -> Dataset {
        crate::data::MixtureConfig {
            total_n: n,
            ..Default::default()
        }
        .generate()
        .unwrap()
    }

    #[test]
    fn single_leaf_trees_predict_base() {
        let net = FeedForwardNet::new(NetBuilder::with_seed(2, 3).affine(3).prelu().affine(2).layers()).unwrap();
        let d = data(200);
        let hp = vec![TreeHyperParams::with_depth(0); 2];
        let ens = DistillingEnsemble::fit(&net, &d, &hp, false).unwrap();
        let s = net.capture_stream(&[5.0, -5.0]).unwrap();
        let p = ens.predict(&s).unwrap();
        for (a, b) in p.iter().zip(ens.base_prediction()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(ens.max_streams(), 1);
    }

    #[test]
    fn hand_boosting_on_four_points() {
        // Identity network on a scalar with two logits (x, -x).
        let net = FeedForwardNet::new(vec![LayerSpec::Affine {
            in_dim: 1,
            out_dim: 2,
            weights: vec![1.0, -1.0],
            bias: vec![0.0, 0.0],
        }])
        .unwrap();
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let d = Dataset::new(x, vec![0, 0, 1, 1], 2).unwrap();
        let ens = DistillingEnsemble::fit(&net, &d, &[TreeHyperParams::with_depth(1)], false).unwrap();
        // Mean logits (1.5, -1.5); residuals (-1.5,-.5,.5,1.5) and negated.
        // Split at 1.5: leaf means -1 and +1 for the first logit.
        assert_eq!(ens.base_prediction(), &[1.5, -1.5]);
        let at = |v: f64| ens.predict(&net.capture_stream(&[v]).unwrap()).unwrap();
        assert_eq!(at(0.0), vec![0.5, -0.5]);
        assert_eq!(at(3.0), vec![2.5, -2.5]);
        assert_eq!(ens.trees()[0].leaf_scores(), &[vec![-1.0, 1.0], vec![1.0, -1.0]]);
    }

    #[test]
    fn multiplier_closed_form() {
        let out = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]).unwrap();
        assert_eq!(fit_multiplier(&out, &out), 1.0);
        let double = Matrix::from_rows(&[[2.0, 4.0], [6.0, -2.0]]).unwrap();
        assert_eq!(fit_multiplier(&out, &double), 2.0);
        assert_eq!(fit_multiplier(&Matrix::zeros(2, 2), &double), 1.0);
    }

    #[test]
    fn layer_count_mismatch() {
        let net = FeedForwardNet::new(NetBuilder::new(2).affine(2).prelu().affine(2).layers()).unwrap();
        let err = DistillingEnsemble::fit(&net, &data(20), &[TreeHyperParams::default()], false).unwrap_err();
        assert!(matches!(err, EnsembleError::LayerCountMismatch { expected: 2, found: 1 }));
    }

    #[test]
    fn stale_stream_rejected() {
        let net = FeedForwardNet::new(NetBuilder::new(2).affine(3).prelu().affine(2).layers()).unwrap();
        let ens = DistillingEnsemble::fit(&net, &data(50), &[TreeHyperParams::default(); 2], false).unwrap();
        let bad = Stream {
            activations: vec![vec![0.0, 0.0], vec![0.0; 4]],
        };
        assert!(matches!(
            ens.predict(&bad),
            Err(EnsembleError::StaleModel { layer: 1, expected: 3, found: 4 })
        ));
    }

    #[test]
    fn cross_entropy_self_distance_is_entropy() {
        let ce = distillation_error(&[0.0, 0.0], &[0.0, 0.0], ErrorMetric::ProbCrossEntropy);
        assert!((ce - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(distillation_error(&[1.0, 2.0], &[1.0, 2.0], ErrorMetric::LogitMse), 0.0);
        assert_eq!(distillation_error(&[1.0, 2.0], &[3.0, 2.0], ErrorMetric::LogitMse), 2.0);
        let f = fidelity(&[2.0, 1.0], &[0.0, 1.0]);
        assert!(!f.argmax_agrees);
    }
}
