//! Adaptive explanation: refit the distilling ensemble on fresh samples from a
//! shrinking region of interest.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, RegionPredicate};
use crate::ensemble::DistillingEnsemble;
use crate::matrix::Matrix;
use crate::nn::{argmax, FeedForwardNet};
use crate::streams::{build_stream_table, ReliabilityConfig, StreamAnalysis};
use crate::tree::TreeHyperParams;

/// Region-conditional source of fresh objects.
pub trait RegionSampler {
    /// Returns `n` rows, all satisfying `region`.
    fn sample(&mut self, region: &RegionPredicate, n: usize) -> Result<Matrix, DataError>;
}

/// Samples without replacement from a fixed pool of objects, for data without a
/// generative model.
#[derive(Debug, Clone)]
pub struct PoolSampler {
    pool: Matrix,
    rng: ChaCha8Rng,
}

impl PoolSampler {
    pub fn new(pool: Matrix, seed: u64) -> Self {
        Self {
            pool,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl RegionSampler for PoolSampler {
    fn sample(&mut self, region: &RegionPredicate, n: usize) -> Result<Matrix, DataError> {
        let inside: Vec<usize> = (0..self.pool.rows())
            .filter(|&i| region.contains(self.pool.row(i)))
            .collect();
        if inside.len() < n {
            return Err(DataError::SamplingExhausted {
                requested: n,
                accepted: inside.len(),
                attempts: self.pool.rows(),
            });
        }
        let mut picked: Vec<usize> = sample(&mut self.rng, inside.len(), n)
            .into_iter()
            .map(|k| inside[k])
            .collect();
        picked.sort_unstable();
        Ok(self.pool.select_rows(&picked))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    /// Fresh objects drawn per round.
    pub samples_per_round: usize,
    /// Per-layer tree hyperparameters for every refit.
    pub hp: Vec<TreeHyperParams>,
    #[serde(default)]
    pub use_multipliers: bool,
    #[serde(default)]
    pub reliability: ReliabilityConfig,
}

#[derive(Debug, Clone)]
pub struct AdaptiveRound {
    pub region: RegionPredicate,
    /// Fresh sample labelled by the network's argmax.
    pub data: Dataset,
    pub ensemble: DistillingEnsemble,
    pub analysis: StreamAnalysis,
}

/// Runs one refit per region. Regions must be nested: each one implies the
/// one before it.
pub fn adaptive_explain(
    net: &FeedForwardNet,
    sampler: &mut dyn RegionSampler,
    regions: &[RegionPredicate],
    cfg: &AdaptiveConfig,
) -> Result<Vec<AdaptiveRound>, DataError> {
    if regions.is_empty() {
        return Err(DataError::Config("adaptive explanation needs at least one round".into()));
    }
    if cfg.samples_per_round == 0 {
        return Err(DataError::Config("samples_per_round must be positive".into()));
    }
    for (i, w) in regions.windows(2).enumerate() {
        if !w[1].implies(&w[0]) {
            return Err(DataError::Config(format!(
                "region {} is not contained in region {}",
                i + 1,
                i
            )));
        }
    }
    let mut rounds = Vec::with_capacity(regions.len());
    for region in regions {
        let x = sampler.sample(region, cfg.samples_per_round)?;
        if x.rows() != cfg.samples_per_round || x.cols() != net.input_dim() {
            return Err(DataError::ShapeMismatch {
                what: "sampled rows",
                expected: cfg.samples_per_round,
                found: x.rows(),
            });
        }
        if let Some(i) = (0..x.rows()).find(|&i| !region.contains(x.row(i))) {
            return Err(DataError::Config(format!("sampler returned row {i} outside the region")));
        }
        let labels = x
            .iter_rows()
            .map(|r| net.forward(r).map(|l| argmax(&l)))
            .collect::<Result<Vec<_>, _>>()?;
        let data = Dataset::new(x, labels, net.num_classes())?;
        let ensemble = DistillingEnsemble::fit(net, &data, &cfg.hp, cfg.use_multipliers)?;
        let analysis = build_stream_table(&ensemble, net, &data, &cfg.reliability)?;
        rounds.push(AdaptiveRound {
            region: region.clone(),
            data,
            ensemble,
            analysis,
        });
    }
    Ok(rounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetBuilder;

    fn net() -> FeedForwardNet {
        FeedForwardNet::new(NetBuilder::with_seed(2, 3).affine(4).prelu().affine(2).layers()).unwrap()
    }

    fn pool() -> Matrix {
        let rows: Vec<[f64; 2]> = (0..100).map(|i| [(i % 10) as f64, (i / 10) as f64]).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    fn cfg(n: usize) -> AdaptiveConfig {
        AdaptiveConfig {
            samples_per_round: n,
            hp: vec![TreeHyperParams::with_depth(1); 2],
            use_multipliers: false,
            reliability: ReliabilityConfig::default(),
        }
    }

    #[test]
    fn full_region_matches_plain_fit() {
        let net = net();
        let mut s = PoolSampler::new(pool(), 0);
        let rounds = adaptive_explain(&net, &mut s, &[RegionPredicate::All], &cfg(100)).unwrap();
        let plain = DistillingEnsemble::fit(&net, &rounds[0].data, &cfg(100).hp, false).unwrap();
        assert_eq!(rounds[0].ensemble, plain);
        assert_eq!(rounds[0].data.features(), &pool());
    }

    #[test]
    fn nested_regions_shrink() {
        let outer = RegionPredicate::strip(0, 2.0, 7.0);
        let inner = outer.clone().and(RegionPredicate::strip(1, 0.0, 4.0));
        let mut s = PoolSampler::new(pool(), 1);
        let rounds = adaptive_explain(&net(), &mut s, &[outer, inner.clone()], &cfg(20)).unwrap();
        assert_eq!(rounds.len(), 2);
        assert!(rounds[1].data.features().iter_rows().all(|r| inner.contains(r)));
    }

    #[test]
    fn non_nested_rejected() {
        let a = RegionPredicate::strip(0, 2.0, 7.0);
        let b = RegionPredicate::strip(0, 0.0, 9.0);
        let mut s = PoolSampler::new(pool(), 1);
        assert!(matches!(
            adaptive_explain(&net(), &mut s, &[a, b], &cfg(5)),
            Err(DataError::Config(_))
        ));
    }

    #[test]
    fn exhausted_pool() {
        let mut s = PoolSampler::new(pool(), 1);
        let r = RegionPredicate::strip(0, 0.0, 0.0);
        assert!(matches!(
            adaptive_explain(&net(), &mut s, &[r], &cfg(11)),
            Err(DataError::SamplingExhausted { requested: 11, accepted: 10, .. })
        ));
    }
}
