//! Discretized streams, stream labels and reliability filtering.
//!
//! The discretized stream of an object is the tuple of leaf indices it reaches in
//! the trees of a distilling ensemble. Distinct tuples seen on the training set
//! are labelled `1..=U` in lexicographic order.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::ensemble::{distillation_error, DistillingEnsemble, EnsembleError, ErrorMetric};
use crate::nn::{FeedForwardNet, NnError, Stream};
use crate::persist::{self, PersistError};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("no objects")]
    Empty,
    #[error("invalid reliability configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Leaf-index tuple `[q^0(a^0(x)), ..., q^{M-1}(a^{M-1}(x))]`, 1-based.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiscretizedStream(pub Vec<usize>);

impl fmt::Display for DiscretizedStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

pub fn discretize(ens: &DistillingEnsemble, stream: &Stream) -> Result<DiscretizedStream, StreamError> {
    Ok(DiscretizedStream(ens.leaf_indices(stream)?))
}

/// Deliberate-interpretation criteria.
///
/// Objects whose distillation error reaches the threshold isolating the top
/// `alpha` fraction of training errors (or `error_threshold`, when set) are
/// kept out of inspector training sets. Streams populated by fewer than
/// `gamma * N` objects (or `min_population`, when set) are unreliable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReliabilityConfig {
    pub alpha: f64,
    pub error_threshold: Option<f64>,
    pub gamma: f64,
    pub min_population: Option<usize>,
    pub metric: ErrorMetric,
}

impl Default for ReliabilityConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            error_threshold: None,
            gamma: 0.0,
            min_population: None,
            metric: ErrorMetric::ProbCrossEntropy,
        }
    }
}

impl ReliabilityConfig {
    pub fn validate(&self) -> Result<(), StreamError> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(StreamError::Config(format!("alpha {} outside [0, 1)", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(StreamError::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if let Some(t) = self.error_threshold {
            if t.is_nan() {
                return Err(StreamError::Config("error threshold is NaN".into()));
            }
        }
        Ok(())
    }

    /// Minimal population of a reliable stream on a training set of size `n`.
    pub fn min_population_for(&self, n: usize) -> usize {
        self.min_population
            .unwrap_or_else(|| (self.gamma * n as f64).ceil() as usize)
    }

    /// Error threshold from the training errors; `None` when nothing is filtered.
    /// With `k = ceil(alpha N)` the threshold is the `k`-th largest error, and every
    /// object tied with it is flagged as well.
    pub fn error_threshold_for(&self, errors: &[f64]) -> Option<f64> {
        if let Some(t) = self.error_threshold {
            return Some(t);
        }
        let k = (self.alpha * errors.len() as f64).ceil() as usize;
        if k == 0 {
            return None;
        }
        let mut sorted = errors.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        Some(sorted[k - 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEntry {
    pub label: usize,
    pub leaf_indices: DiscretizedStream,
    pub population: usize,
    /// Ensemble logits of the stream (identical for all of its objects).
    pub mean_logits: Vec<f64>,
    pub reliable: bool,
}

/// Thresholds that travel with a table so new objects can be judged later.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityState {
    pub total_population: usize,
    pub min_population: usize,
    pub error_threshold: Option<f64>,
    pub metric: ErrorMetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamTable {
    entries: Vec<StreamEntry>,
    index: BTreeMap<DiscretizedStream, usize>,
    state: ReliabilityState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assignment {
    Label(usize),
    /// The leaf tuple never occurred on the training set. Advisory only: a
    /// populated stream can still hold anomalous objects.
    Anomaly,
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assignment::Label(l) => write!(f, "{l}"),
            Assignment::Anomaly => f.write_str("anomaly"),
        }
    }
}

impl StreamTable {
    fn from_entries(entries: Vec<StreamEntry>, state: ReliabilityState) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.leaf_indices.clone(), i))
            .collect();
        Self {
            entries,
            index,
            state,
        }
    }

    /// Number of populated streams `U`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[StreamEntry] {
        &self.entries
    }

    pub fn entry(&self, label: usize) -> Option<&StreamEntry> {
        label.checked_sub(1).and_then(|i| self.entries.get(i))
    }

    pub fn state(&self) -> &ReliabilityState {
        &self.state
    }

    pub fn total_population(&self) -> usize {
        self.state.total_population
    }

    pub fn assign_label(&self, ds: &DiscretizedStream) -> Assignment {
        match self.index.get(ds) {
            Some(&i) => Assignment::Label(self.entries[i].label),
            None => Assignment::Anomaly,
        }
    }

    /// Labels ordered by decreasing population (ties by label).
    pub fn labels_by_population(&self) -> Vec<usize> {
        let mut labels: Vec<usize> = self.entries.iter().map(|e| e.label).collect();
        labels.sort_by_key(|&l| (std::cmp::Reverse(self.entries[l - 1].population), l));
        labels
    }

    /// Shannon entropy (nats) of the population distribution over labels.
    pub fn population_entropy(&self) -> f64 {
        let n: usize = self.entries.iter().map(|e| e.population).sum();
        if n == 0 {
            return 0.0;
        }
        let n = n as f64;
        self.entries
            .iter()
            .filter(|e| e.population > 0)
            .map(|e| {
                let p = e.population as f64 / n;
                -p * p.ln()
            })
            .sum::<f64>()
            .max(0.0)
    }

    /// JSON array of `{label, leaf_indices, population, mean_logits, reliable}`.
    pub fn to_json(&self) -> String {
        persist::to_json(&self.entries)
    }

    pub fn from_json(text: &str, state: ReliabilityState) -> Result<Self, StreamError> {
        let entries: Vec<StreamEntry> = serde_json::from_str(text).map_err(PersistError::from)?;
        for (i, e) in entries.iter().enumerate() {
            if e.label != i + 1 {
                return Err(PersistError::invalid("label", format!("entry {i} has label {}", e.label)).into());
            }
            if i > 0 && entries[i - 1].leaf_indices >= e.leaf_indices {
                return Err(PersistError::invalid("leaf_indices", "entries not in lexicographic order").into());
            }
        }
        Ok(Self::from_entries(entries, state))
    }
}

/// Per-object outcome on the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub stream: DiscretizedStream,
    pub label: usize,
    pub error: f64,
    /// Distillation error reached the threshold; excluded from inspector training.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamAnalysis {
    pub table: StreamTable,
    pub objects: Vec<ObjectRecord>,
}

impl StreamAnalysis {
    pub fn flagged_count(&self) -> usize {
        self.objects.iter().filter(|o| o.flagged).count()
    }

    /// Indices of the objects carrying `label`.
    pub fn members(&self, label: usize) -> Vec<usize> {
        (0..self.objects.len())
            .filter(|&i| self.objects[i].label == label)
            .collect()
    }

    /// Share of objects whose ensemble argmax agrees with the network's.
    pub fn argmax_agreement(&self, net: &FeedForwardNet, data: &Dataset) -> Result<f64, StreamError> {
        let mut agree = 0usize;
        for (row, o) in data.features().iter_rows().zip(&self.objects) {
            let nn = crate::nn::argmax(&net.forward(row)?);
            let ens = crate::nn::argmax(&self.table.entry(o.label).expect("own label").mean_logits);
            agree += usize::from(nn == ens);
        }
        Ok(agree as f64 / self.objects.len().max(1) as f64)
    }

    /// CSV with columns `object_id,label_or_anomaly,distillation_error,filtered_flag`.
    pub fn write_objects_csv(&self, path: impl AsRef<Path>) -> Result<(), StreamError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "object_id,label_or_anomaly,distillation_error,filtered_flag")?;
        for (i, o) in self.objects.iter().enumerate() {
            writeln!(out, "{i},{},{:?},{}", o.label, o.error, u8::from(o.flagged))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Discretizes every training object, enumerates the streams and applies the
/// reliability criteria. Populations count all objects; the error filter only
/// marks objects for exclusion from inspector training sets.
pub fn build_stream_table(
    ens: &DistillingEnsemble,
    net: &FeedForwardNet,
    data: &Dataset,
    rc: &ReliabilityConfig,
) -> Result<StreamAnalysis, StreamError> {
    rc.validate()?;
    if data.is_empty() {
        return Err(StreamError::Empty);
    }
    let mut streams = Vec::with_capacity(data.len());
    let mut errors = Vec::with_capacity(data.len());
    for row in data.features().iter_rows() {
        let s = net.capture_stream(row)?;
        let ds = discretize(ens, &s)?;
        let logits = ens.predict_leaves(&ds.0)?;
        errors.push(distillation_error(s.logits(), &logits, rc.metric));
        streams.push(ds);
    }

    let mut populations: BTreeMap<&DiscretizedStream, usize> = BTreeMap::new();
    for ds in &streams {
        *populations.entry(ds).or_default() += 1;
    }
    let n = data.len();
    let min_population = rc.min_population_for(n);
    let entries = populations
        .into_iter()
        .enumerate()
        .map(|(i, (ds, population))| {
            Ok(StreamEntry {
                label: i + 1,
                leaf_indices: ds.clone(),
                population,
                mean_logits: ens.predict_leaves(&ds.0)?,
                reliable: population >= min_population,
            })
        })
        .collect::<Result<Vec<_>, StreamError>>()?;
    let error_threshold = rc.error_threshold_for(&errors);
    let table = StreamTable::from_entries(
        entries,
        ReliabilityState {
            total_population: n,
            min_population,
            error_threshold,
            metric: rc.metric,
        },
    );
    let objects = streams
        .into_iter()
        .zip(errors)
        .map(|(ds, error)| {
            let label = match table.assign_label(&ds) {
                Assignment::Label(l) => l,
                Assignment::Anomaly => unreachable!("training stream is in the table"),
            };
            ObjectRecord {
                stream: ds,
                label,
                error,
                flagged: error_threshold.is_some_and(|t| error >= t),
            }
        })
        .collect();
    Ok(StreamAnalysis { table, objects })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MixtureConfig;
    use crate::nn::NetBuilder;
    use crate::tree::TreeHyperParams;

    fn setup(n: usize, depths: &[usize]) -> (FeedForwardNet, DistillingEnsemble, Dataset) {
        let data = MixtureConfig {
            total_n: n,
            ..MixtureConfig::default()
        }
        .generate()
        .unwrap();
        let mut b = NetBuilder::with_seed(2, 1);
        for _ in 1..depths.len() {
            b = b.affine(3).prelu();
        }
        let net = FeedForwardNet::new(b.affine(2).layers()).unwrap();
        let hp: Vec<_> = depths.iter().map(|&d| TreeHyperParams::with_depth(d)).collect();
        let ens = DistillingEnsemble::fit(&net, &data, &hp, false).unwrap();
        (net, ens, data)
    }

    #[test]
    fn single_leaf_trees_give_one_stream() {
        let (net, ens, data) = setup(100, &[0, 0, 0]);
        let a = build_stream_table(&ens, &net, &data, &ReliabilityConfig::default()).unwrap();
        assert_eq!(a.table.len(), 1);
        assert_eq!(a.table.entries()[0].leaf_indices, DiscretizedStream(vec![1, 1, 1]));
        assert_eq!(a.table.population_entropy(), 0.0);
    }

    #[test]
    fn labels_are_lexicographic_and_populations_sum() {
        let (net, ens, data) = setup(500, &[1, 2, 2]);
        let a = build_stream_table(&ens, &net, &data, &ReliabilityConfig::default()).unwrap();
        let e = a.table.entries();
        assert!(e.windows(2).all(|w| w[0].leaf_indices < w[1].leaf_indices));
        assert!(e.iter().enumerate().all(|(i, x)| x.label == i + 1));
        assert_eq!(e.iter().map(|x| x.population).sum::<usize>(), 500);
        assert!(a.table.len() <= ens.max_streams().min(500));
        assert!(e.iter().all(|x| x.reliable));
        assert_eq!(a.flagged_count(), 0);
        let h = a.table.population_entropy();
        assert!(h >= 0.0 && h <= (a.table.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn same_label_same_logits() {
        let (net, ens, data) = setup(300, &[1, 1, 2]);
        let a = build_stream_table(&ens, &net, &data, &ReliabilityConfig::default()).unwrap();
        for (row, o) in data.features().iter_rows().zip(&a.objects) {
            let p = ens.predict(&net.capture_stream(row).unwrap()).unwrap();
            let bits: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
            let entry: Vec<u64> = a.table.entry(o.label).unwrap().mean_logits.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits, entry);
        }
    }

    #[test]
    fn alpha_flags_ceil_fraction() {
        let (net, ens, data) = setup(333, &[1, 1, 1]);
        let rc = ReliabilityConfig {
            alpha: 0.05,
            ..ReliabilityConfig::default()
        };
        let a = build_stream_table(&ens, &net, &data, &rc).unwrap();
        let mut errs: Vec<f64> = a.objects.iter().map(|o| o.error).collect();
        errs.sort_by(|x, y| y.total_cmp(x));
        let k = 17; // ceil(0.05 * 333)
        let threshold = errs[k - 1];
        let ties = errs.iter().filter(|&&e| e >= threshold).count();
        assert_eq!(a.flagged_count(), ties);
        assert!(a.flagged_count() >= k);
        assert_eq!(a.table.state().error_threshold, Some(threshold));
    }

    #[test]
    fn threshold_ties_are_all_flagged() {
        let rc = ReliabilityConfig {
            alpha: 0.25,
            ..ReliabilityConfig::default()
        };
        assert_eq!(rc.error_threshold_for(&[0.1, 0.5, 0.5, 0.2]), Some(0.5));
        assert_eq!(ReliabilityConfig::default().error_threshold_for(&[1.0, 2.0]), None);
    }

    #[test]
    fn gamma_marks_small_streams() {
        let (net, ens, data) = setup(400, &[1, 2, 2]);
        let rc = ReliabilityConfig {
            gamma: 0.1,
            ..ReliabilityConfig::default()
        };
        let a = build_stream_table(&ens, &net, &data, &rc).unwrap();
        for e in a.table.entries() {
            assert_eq!(e.reliable, e.population >= 40);
        }
        let abs = ReliabilityConfig {
            min_population: Some(1_000),
            ..ReliabilityConfig::default()
        };
        let a = build_stream_table(&ens, &net, &data, &abs).unwrap();
        assert!(a.table.entries().iter().all(|e| !e.reliable));
    }

    #[test]
    fn training_objects_are_never_anomalous() {
        let (net, ens, data) = setup(300, &[2, 2, 2]);
        let a = build_stream_table(&ens, &net, &data, &ReliabilityConfig::default()).unwrap();
        for (row, o) in data.features().iter_rows().zip(&a.objects) {
            let ds = discretize(&ens, &net.capture_stream(row).unwrap()).unwrap();
            assert_eq!(a.table.assign_label(&ds), Assignment::Label(o.label));
        }
        let fabricated = DiscretizedStream(vec![99, 99, 99]);
        assert_eq!(a.table.assign_label(&fabricated), Assignment::Anomaly);
    }

    #[test]
    fn entropy_of_two_equal_streams() {
        let state = ReliabilityState {
            total_population: 4,
            min_population: 0,
            error_threshold: None,
            metric: ErrorMetric::LogitMse,
        };
        let entry = |label, ds: Vec<usize>| StreamEntry {
            label,
            leaf_indices: DiscretizedStream(ds),
            population: 2,
            mean_logits: vec![0.0],
            reliable: true,
        };
        let t = StreamTable::from_entries(vec![entry(1, vec![1, 1]), entry(2, vec![1, 2])], state);
        assert!((t.population_entropy() - std::f64::consts::LN_2).abs() < 1e-15);
        let back = StreamTable::from_json(&t.to_json(), state).unwrap();
        assert_eq!(back, t);
    }
}
