//! Two-dimensional Gaussian mixture with label noise.
//!
//! The default configuration has four components: two on the left labelled
//! class 0 and two on the right labelled class 1. Means `(±2, ±1.5)`,
//! covariance `0.8 I` and equal weights are chosen so that the classes overlap
//! mildly around `x1 = 0`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, RegionPredicate, RegionSampler};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
    pub class: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixtureConfig {
    pub components: Vec<MixtureComponent>,
    pub total_n: usize,
    pub flip_fraction: f64,
    pub seed: u64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        let cov = [[0.8, 0.0], [0.0, 0.8]];
        let comp = |mean: [f64; 2], class| MixtureComponent {
            mean,
            covariance: cov,
            class,
            weight: 0.25,
        };
        Self {
            components: vec![
                comp([-2.0, 1.5], 0),
                comp([-2.0, -1.5], 0),
                comp([2.0, 1.5], 1),
                comp([2.0, -1.5], 1),
            ],
            total_n: 7500,
            flip_fraction: 0.02,
            seed: 0,
        }
    }
}

/// Lower Cholesky factor `[l11, l21, l22]` of an SPD 2x2 matrix.
fn cholesky2(c: &[[f64; 2]; 2]) -> Option<[f64; 3]> {
    let [[a, b], [b2, d]] = *c;
    let finite = [a, b, b2, d].iter().all(|v| v.is_finite());
    if !finite || (b - b2).abs() > 1e-12 * (1.0 + b.abs()) || a <= 0.0 {
        return None;
    }
    let l11 = a.sqrt();
    let l21 = b / l11;
    let rest = d - l21 * l21;
    (rest > 0.0).then(|| [l11, l21, rest.sqrt()])
}

impl MixtureConfig {
    pub fn num_classes(&self) -> usize {
        self.components.iter().map(|c| c.class + 1).max().unwrap_or(0).max(2)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.components.is_empty() {
            return Err(DataError::Config("mixture has no components".into()));
        }
        for (i, c) in self.components.iter().enumerate() {
            if cholesky2(&c.covariance).is_none() {
                return Err(DataError::Config(format!(
                    "component {i}: covariance is not symmetric positive definite"
                )));
            }
            if !(c.weight >= 0.0 && c.weight.is_finite()) || !c.mean.iter().all(|m| m.is_finite()) {
                return Err(DataError::Config(format!("component {i}: invalid mean or weight")));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(DataError::Config(format!("weights sum to {total}, not 1")));
        }
        if !(0.0..1.0).contains(&self.flip_fraction) {
            return Err(DataError::Config(format!(
                "flip fraction {} outside [0, 1)",
                self.flip_fraction
            )));
        }
        if self.total_n == 0 {
            return Err(DataError::Empty);
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Dataset, DataError> {
        self.generate_with_components().map(|(d, _)| d)
    }

    /// Like [`generate`](Self::generate) but also returns the component of every row.
    pub fn generate_with_components(&self) -> Result<(Dataset, Vec<usize>), DataError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let draw = ComponentDraw::new(self)?;
        let n = self.total_n;
        let mut x = Matrix::zeros(n, 2);
        let mut labels = Vec::with_capacity(n);
        let mut comps = Vec::with_capacity(n);
        for i in 0..n {
            let (p, k) = draw.sample(&mut rng);
            x.row_mut(i).copy_from_slice(&p);
            labels.push(self.components[k].class);
            comps.push(k);
        }
        let num_classes = self.num_classes();
        let flips = (self.flip_fraction * n as f64).round() as usize;
        for i in rand::seq::index::sample(&mut rng, n, flips) {
            let shift = 1 + rng.random_range(0..num_classes - 1);
            labels[i] = (labels[i] + shift) % num_classes;
        }
        let data = Dataset::new(x, labels, num_classes)?
            .with_feature_names(vec!["x1".into(), "x2".into()])?;
        Ok((data, comps))
    }
}

struct ComponentDraw {
    choose: WeightedIndex<f64>,
    factors: Vec<[f64; 3]>,
    means: Vec<[f64; 2]>,
}

impl ComponentDraw {
    fn new(cfg: &MixtureConfig) -> Result<Self, DataError> {
        let choose = WeightedIndex::new(cfg.components.iter().map(|c| c.weight))
            .map_err(|e| DataError::Config(format!("component weights: {e}")))?;
        Ok(Self {
            choose,
            factors: cfg
                .components
                .iter()
                .map(|c| cholesky2(&c.covariance).expect("validated"))
                .collect(),
            means: cfg.components.iter().map(|c| c.mean).collect(),
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> ([f64; 2], usize) {
        let k = self.choose.sample(rng);
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let [l11, l21, l22] = self.factors[k];
        let m = self.means[k];
        ([m[0] + l11 * z1, m[1] + l21 * z1 + l22 * z2], k)
    }
}

/// Rejection sampler drawing from the mixture's generative model.
pub struct MixtureSampler {
    draw: ComponentDraw,
    rng: ChaCha8Rng,
    /// Upper bound on draws per requested point.
    pub max_draws_per_point: usize,
}

impl MixtureSampler {
    pub fn new(cfg: &MixtureConfig, seed: u64) -> Result<Self, DataError> {
        cfg.validate()?;
        Ok(Self {
            draw: ComponentDraw::new(cfg)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
            max_draws_per_point: 10_000,
        })
    }
}

impl RegionSampler for MixtureSampler {
    fn sample(&mut self, region: &RegionPredicate, n: usize) -> Result<Matrix, DataError> {
        let budget = n.saturating_mul(self.max_draws_per_point).max(1);
        let mut rows = Vec::with_capacity(n);
        let mut attempts = 0;
        while rows.len() < n {
            if attempts == budget {
                return Err(DataError::SamplingExhausted {
                    requested: n,
                    accepted: rows.len(),
                    attempts,
                });
            }
            attempts += 1;
            let (p, _) = self.draw.sample(&mut self.rng);
            if region.contains(&p) {
                rows.push(p);
            }
        }
        Ok(Matrix::from_rows(&rows).unwrap_or_else(|| Matrix::zeros(0, 2)))
    }
}
