//! Minimal fully-connected network engine.
//!
//! A network is a list of primitive [`LayerSpec`]s. Each affine layer opens a
//! *logical layer* that also owns the nonlinearities and dropout following it;
//! the activation `a^l` of logical layer `l` is read after the whole fused block.
//! `a^0` is the raw input and `a^M` the logits, so a [`Stream`] of an `M`-layer
//! network has `M + 1` entries.
//!
//! Inference is deterministic: dropout is the identity outside of training.

mod io;
mod layer;
mod train;

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::persist::PersistError;

pub use layer::{LayerSpec, NetBuilder, PRELU_INIT_SLOPE};
pub use train::{train, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("layer {index}: {message}")]
    InvalidLayer { index: usize, message: String },
    #[error("network must start with an affine layer")]
    MissingInputAffine,
    #[error("network has no layers")]
    NoLayers,
    #[error("layer {index} expects input dimension {expected}, previous layer yields {found}")]
    IncompatibleLayers {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("dataset has {found} classes, network outputs {expected}")]
    ClassCountMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Persist(#[from] PersistError),
}

/// Activations `[a^0(x), ..., a^M(x)]` of one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stream {
    pub activations: Vec<Vec<f64>>,
}

impl Stream {
    /// Number of logical layers `M`.
    pub fn depth(&self) -> usize {
        self.activations.len().saturating_sub(1)
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }

    pub fn logits(&self) -> &[f64] {
        self.activations.last().expect("stream is never empty")
    }
}

/// A validated feed-forward classifier in inference mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardNet {
    layers: Vec<LayerSpec>,
    blocks: Vec<Range<usize>>,
}

impl FeedForwardNet {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self, NnError> {
        let first = layers.first().ok_or(NnError::NoLayers)?;
        if !first.is_affine() {
            return Err(NnError::MissingInputAffine);
        }
        for (i, layer) in layers.iter().enumerate() {
            layer.validate(i)?;
            if i > 0 && layers[i - 1].out_dim() != layer.in_dim() {
                return Err(NnError::IncompatibleLayers {
                    index: i,
                    expected: layer.in_dim(),
                    found: layers[i - 1].out_dim(),
                });
            }
        }
        let mut blocks: Vec<Range<usize>> = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            if layer.is_affine() {
                blocks.push(i..i + 1);
            } else {
                blocks.last_mut().expect("first layer is affine").end = i + 1;
            }
        }
        Ok(Self { layers, blocks })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    /// Number of logical layers `M`.
    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    /// Output width of every activation `a^0..a^M`.
    pub fn activation_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.blocks.iter().map(|b| self.layers[b.end - 1].out_dim()))
            .collect()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Raw (pre-softmax) logits.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = apply_inference(layer, &a);
        }
        Ok(a)
    }

    pub fn capture_stream(&self, x: &[f64]) -> Result<Stream, NnError> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.depth() + 1);
        activations.push(x.to_vec());
        let mut a = x.to_vec();
        for block in &self.blocks {
            for layer in &self.layers[block.clone()] {
                a = apply_inference(layer, &a);
            }
            activations.push(a.clone());
        }
        Ok(Stream { activations })
    }

    /// Activation matrices `[A^0, ..., A^M]` for a batch, one row per object.
    pub fn capture_batch(&self, x: &Matrix) -> Result<Vec<Matrix>, NnError> {
        if x.cols() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.cols(),
            });
        }
        let dims = self.activation_dims();
        let mut out: Vec<Matrix> = dims.iter().map(|&d| Matrix::zeros(x.rows(), d)).collect();
        for i in 0..x.rows() {
            let s = self.capture_stream(x.row(i))?;
            for (m, a) in out.iter_mut().zip(&s.activations) {
                m.row_mut(i).copy_from_slice(a);
            }
        }
        Ok(out)
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix, NnError> {
        let mut out = Matrix::zeros(x.rows(), self.num_classes());
        for i in 0..x.rows() {
            let logits = self.forward(x.row(i))?;
            out.row_mut(i).copy_from_slice(&logits);
        }
        Ok(out)
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize, NnError> {
        Ok(argmax(&self.forward(x)?))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// All trainable parameters in layer order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(LayerSpec::params).collect()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.param_count() {
            return Err(NnError::DimensionMismatch {
                expected: self.param_count(),
                found: params.len(),
            });
        }
        let mut it = params.iter();
        for layer in &mut self.layers {
            for p in layer.params_mut() {
                *p = *it.next().expect("length checked");
            }
        }
        Ok(())
    }
}

pub(crate) fn apply_inference(layer: &LayerSpec, x: &[f64]) -> Vec<f64> {
    match layer {
        LayerSpec::Affine {
            in_dim,
            out_dim,
            weights,
            bias,
        } => (0..*out_dim)
            .map(|o| {
                let row = &weights[o * in_dim..(o + 1) * in_dim];
                bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect(),
        LayerSpec::Prelu { slopes, .. } => x
            .iter()
            .zip(slopes)
            .map(|(&v, &a)| if v > 0.0 { v } else { a * v })
            .collect(),
        LayerSpec::Relu { .. } => x.iter().map(|&v| v.max(0.0)).collect(),
        LayerSpec::LeakyRelu { slope, .. } => x
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect(),
        LayerSpec::Dropout { .. } | LayerSpec::Identity { .. } => x.to_vec(),
    }
}

/// Softmax onto the probability simplex.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>, NnError> {
    if logits.iter().any(|v| v.is_nan()) {
        return Err(NnError::NonFinite("softmax input"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    Ok(exp.into_iter().map(|e| e / total).collect())
}

/// Numerically stable `log(softmax(z))`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// Index of the largest entry; the first one wins on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
