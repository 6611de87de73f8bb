//! Softmax cross-entropy training with Adam.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{log_softmax, FeedForwardNet, LayerSpec, NnError};
use crate::data::Dataset;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 3e-4,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(NnError::Config("batch size must be positive".into()));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(NnError::Config(format!("adam betas ({b1}, {b2}) outside [0, 1)")));
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(NnError::Config("adam eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean minibatch loss of each epoch, measured while training.
    pub epoch_losses: Vec<f64>,
    /// Inference-mode loss over the whole training set after the last epoch.
    pub final_loss: f64,
    pub final_accuracy: f64,
}

/// Trains a network built from `layers` on `data`.
///
/// Zero epochs returns the network with its initial parameters.
pub fn train(
    layers: Vec<LayerSpec>,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(FeedForwardNet, TrainReport), NnError> {
    cfg.validate()?;
    let mut net = FeedForwardNet::new(layers)?;
    if data.num_classes() != net.num_classes() {
        return Err(NnError::ClassCountMismatch {
            expected: net.num_classes(),
            found: data.num_classes(),
        });
    }
    if data.num_features() != net.input_dim() {
        return Err(NnError::DimensionMismatch {
            expected: net.input_dim(),
            found: data.num_features(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(net.param_count(), cfg);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; net.param_count()];
            let mut loss = 0.0;
            for &i in batch {
                loss += net.accumulate_gradient(
                    data.features().row(i),
                    data.labels()[i],
                    &mut grad,
                    Some(&mut rng),
                );
            }
            if !loss.is_finite() {
                return Err(NnError::Diverged { epoch, loss });
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            let mut params = net.flat_params();
            adam.step(&mut params, &grad);
            net.set_flat_params(&params)?;
            total += loss;
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() {
            return Err(NnError::Diverged { epoch, loss: mean });
        }
        epoch_losses.push(mean);
    }

    let (final_loss, final_accuracy) = evaluate(&net, data.features(), data.labels())?;
    Ok((
        net,
        TrainReport {
            epoch_losses,
            final_loss,
            final_accuracy,
        },
    ))
}

/// Mean cross-entropy and accuracy in inference mode.
pub(crate) fn evaluate(
    net: &FeedForwardNet,
    x: &Matrix,
    labels: &[usize],
) -> Result<(f64, f64), NnError> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (row, &y) in x.iter_rows().zip(labels) {
        let logits = net.forward(row)?;
        loss -= log_softmax(&logits)[y];
        if super::argmax(&logits) == y {
            correct += 1;
        }
    }
    let n = labels.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr: cfg.learning_rate,
            beta1: cfg.adam_betas.0,
            beta2: cfg.adam_betas.1,
            eps: cfg.adam_eps,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

impl FeedForwardNet {
    /// Mean softmax cross-entropy over `(x, labels)` and its gradient with respect to
    /// [`FeedForwardNet::flat_params`], evaluated in inference mode.
    pub fn loss_and_gradient(
        &self,
        x: &Matrix,
        labels: &[usize],
    ) -> Result<(f64, Vec<f64>), NnError> {
        if x.cols() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.cols(),
            });
        }
        let mut grad = vec![0.0; self.param_count()];
        let mut loss = 0.0;
        for (row, &y) in x.iter_rows().zip(labels) {
            loss += self.accumulate_gradient(row, y, &mut grad, None);
        }
        let n = labels.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grad))
    }

    /// Adds the gradient of one sample's loss into `grad` and returns that loss.
    /// With an rng, dropout layers sample inverted-dropout masks.
    fn accumulate_gradient(
        &self,
        x: &[f64],
        label: usize,
        grad: &mut [f64],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> f64 {
        // inputs[i] is the input of layer i; masks hold scaled dropout masks.
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut masks: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for layer in &self.layers {
            let next = match (layer, rng.as_deref_mut()) {
                (LayerSpec::Dropout { keep, .. }, Some(rng)) => {
                    let mask: Vec<f64> = (0..a.len())
                        .map(|_| {
                            if rng.random::<f64>() < *keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let out = a.iter().zip(&mask).map(|(v, m)| v * m).collect();
                    masks.push(Some(mask));
                    out
                }
                _ => {
                    masks.push(None);
                    super::apply_inference(layer, &a)
                }
            };
            inputs.push(std::mem::replace(&mut a, next));
        }

        let logp = log_softmax(&a);
        let loss = -logp[label];
        let mut delta: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        delta[label] -= 1.0;

        let mut offset = grad.len();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            offset -= layer.param_count();
            let g = &mut grad[offset..offset + layer.param_count()];
            let input = &inputs[i];
            delta = match layer {
                LayerSpec::Affine {
                    in_dim,
                    out_dim,
                    weights,
                    ..
                } => {
                    let mut dx = vec![0.0; *in_dim];
                    for o in 0..*out_dim {
                        let d = delta[o];
                        let row = &weights[o * in_dim..(o + 1) * in_dim];
                        let grow = &mut g[o * in_dim..(o + 1) * in_dim];
                        for j in 0..*in_dim {
                            grow[j] += d * input[j];
                            dx[j] += d * row[j];
                        }
                        g[in_dim * out_dim + o] += d;
                    }
                    dx
                }
                LayerSpec::Prelu { slopes, .. } => input
                    .iter()
                    .zip(&delta)
                    .enumerate()
                    .map(|(c, (&v, &d))| {
                        if v > 0.0 {
                            d
                        } else {
                            g[c] += d * v;
                            d * slopes[c]
                        }
                    })
                    .collect(),
                LayerSpec::Relu { .. } => input
                    .iter()
                    .zip(&delta)
                    .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
                    .collect(),
                LayerSpec::LeakyRelu { slope, .. } => input
                    .iter()
                    .zip(&delta)
                    .map(|(&v, &d)| if v > 0.0 { d } else { d * slope })
                    .collect(),
                LayerSpec::Dropout { .. } => match &masks[i] {
                    Some(mask) => delta.iter().zip(mask).map(|(d, m)| d * m).collect(),
                    None => delta,
                },
                LayerSpec::Identity { .. } => delta,
            };
        }
        loss
    }
}
