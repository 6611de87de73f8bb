use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NnError;

/// Initial PReLU slope for every channel.
pub const PRELU_INIT_SLOPE: f64 = 0.25;

/// One primitive layer. Affine layers start a new logical layer; the
/// activation and regularization layers that follow are fused into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Affine {
        in_dim: usize,
        out_dim: usize,
        /// Row-major `out_dim x in_dim`.
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Prelu {
        in_dim: usize,
        out_dim: usize,
        slopes: Vec<f64>,
    },
    Relu {
        in_dim: usize,
        out_dim: usize,
    },
    LeakyRelu {
        in_dim: usize,
        out_dim: usize,
        slope: f64,
    },
    Dropout {
        in_dim: usize,
        out_dim: usize,
        keep: f64,
    },
    Identity {
        in_dim: usize,
        out_dim: usize,
    },
}

impl LayerSpec {
    pub fn in_dim(&self) -> usize {
        match *self {
            LayerSpec::Affine { in_dim, .. }
            | LayerSpec::Prelu { in_dim, .. }
            | LayerSpec::Relu { in_dim, .. }
            | LayerSpec::LeakyRelu { in_dim, .. }
            | LayerSpec::Dropout { in_dim, .. }
            | LayerSpec::Identity { in_dim, .. } => in_dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match *self {
            LayerSpec::Affine { out_dim, .. }
            | LayerSpec::Prelu { out_dim, .. }
            | LayerSpec::Relu { out_dim, .. }
            | LayerSpec::LeakyRelu { out_dim, .. }
            | LayerSpec::Dropout { out_dim, .. }
            | LayerSpec::Identity { out_dim, .. } => out_dim,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Affine { .. } => "affine",
            LayerSpec::Prelu { .. } => "prelu",
            LayerSpec::Relu { .. } => "relu",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Identity { .. } => "identity",
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, LayerSpec::Affine { .. })
    }

    /// Trainable parameters, flattened (weights then bias for affine layers).
    pub(crate) fn params(&self) -> Vec<f64> {
        match self {
            LayerSpec::Affine { weights, bias, .. } => {
                weights.iter().chain(bias.iter()).copied().collect()
            }
            LayerSpec::Prelu { slopes, .. } => slopes.clone(),
            _ => Vec::new(),
        }
    }

    pub(crate) fn param_count(&self) -> usize {
        match self {
            LayerSpec::Affine { weights, bias, .. } => weights.len() + bias.len(),
            LayerSpec::Prelu { slopes, .. } => slopes.len(),
            _ => 0,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut f64> {
        match self {
            LayerSpec::Affine { weights, bias, .. } => {
                weights.iter_mut().chain(bias.iter_mut()).collect()
            }
            LayerSpec::Prelu { slopes, .. } => slopes.iter_mut().collect(),
            _ => Vec::new(),
        }
    }

    pub(crate) fn validate(&self, index: usize) -> Result<(), NnError> {
        let bad = |message: String| NnError::InvalidLayer { index, message };
        let (i, o) = (self.in_dim(), self.out_dim());
        if i == 0 || o == 0 {
            return Err(bad("dimensions must be positive".into()));
        }
        if !self.is_affine() && i != o {
            return Err(bad(format!(
                "{} layer must preserve dimension, got {i} -> {o}",
                self.kind()
            )));
        }
        match self {
            LayerSpec::Affine { weights, bias, .. } => {
                if weights.len() != i * o {
                    return Err(bad(format!(
                        "expected {} weights, found {}",
                        i * o,
                        weights.len()
                    )));
                }
                if bias.len() != o {
                    return Err(bad(format!("expected {o} biases, found {}", bias.len())));
                }
            }
            LayerSpec::Prelu { slopes, .. } => {
                if slopes.len() != o {
                    return Err(bad(format!("expected {o} slopes, found {}", slopes.len())));
                }
            }
            LayerSpec::Dropout { keep, .. } if !(*keep > 0.0 && *keep <= 1.0) => {
                return Err(bad(format!("keep probability {keep} outside (0, 1]")));
            }
            _ => {}
        }
        if self.params().iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite parameter".into()));
        }
        if let LayerSpec::LeakyRelu { slope, .. } = self {
            if !slope.is_finite() {
                return Err(bad("non-finite slope".into()));
            }
        }
        Ok(())
    }
}

/// Assembles a layer list with initialized parameters.
///
/// Affine weights and biases are drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`;
/// PReLU slopes start at [`PRELU_INIT_SLOPE`].
#[derive(Debug, Clone)]
pub struct NetBuilder {
    width: usize,
    layers: Vec<LayerSpec>,
    rng: ChaCha8Rng,
}

impl NetBuilder {
    pub fn new(input_dim: usize) -> Self {
        Self::with_seed(input_dim, 0)
    }

    pub fn with_seed(input_dim: usize, seed: u64) -> Self {
        Self {
            width: input_dim,
            layers: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn affine(mut self, out_dim: usize) -> Self {
        let in_dim = self.width;
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        let bias = (0..out_dim)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        self.layers.push(LayerSpec::Affine {
            in_dim,
            out_dim,
            weights,
            bias,
        });
        self.width = out_dim;
        self
    }

    pub fn prelu(mut self) -> Self {
        let d = self.width;
        self.layers.push(LayerSpec::Prelu {
            in_dim: d,
            out_dim: d,
            slopes: vec![PRELU_INIT_SLOPE; d],
        });
        self
    }

    pub fn relu(mut self) -> Self {
        let d = self.width;
        self.layers.push(LayerSpec::Relu {
            in_dim: d,
            out_dim: d,
        });
        self
    }

    pub fn leaky_relu(mut self, slope: f64) -> Self {
        let d = self.width;
        self.layers.push(LayerSpec::LeakyRelu {
            in_dim: d,
            out_dim: d,
            slope,
        });
        self
    }

    pub fn dropout(mut self, keep: f64) -> Self {
        let d = self.width;
        self.layers.push(LayerSpec::Dropout {
            in_dim: d,
            out_dim: d,
            keep,
        });
        self
    }

    pub fn identity(mut self) -> Self {
        let d = self.width;
        self.layers.push(LayerSpec::Identity {
            in_dim: d,
            out_dim: d,
        });
        self
    }

    pub fn layers(self) -> Vec<LayerSpec> {
        self.layers
    }
}
