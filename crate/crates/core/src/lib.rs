//! Interpretation of feed-forward classifiers through discretized activation streams.
//!
//! The pipeline has two steps. First a network is distilled into a chain of
//! regression trees, one tree per layer, fitted in gradient-boosting fashion on
//! the raw logits. Every object is then encoded by the tuple of leaf indices it
//! reaches (its *discretized stream*), and the finite set of codes partitions the
//! input space. Second, each partition is described by an *inspector*: an L1
//! logistic regression, a classification tree with extractable rules, or plain
//! feature averages.
//!
//! Two reliability filters guard the explanations: objects whose distillation
//! error is in the top `alpha` fraction are kept out of inspector training sets,
//! and streams populated by fewer than `gamma * N` objects are not explained.
//!
//! ```
//! use leafstream::data::MixtureConfig;
//! use leafstream::ensemble::DistillingEnsemble;
//! use leafstream::nn::{train, NetBuilder, TrainConfig};
//! use leafstream::streams::{build_stream_table, ReliabilityConfig};
//! use leafstream::tree::TreeHyperParams;
//!
//! let data = MixtureConfig { total_n: 400, ..MixtureConfig::default() }.generate().unwrap();
//! let layers = NetBuilder::new(2).affine(4).prelu().affine(2).layers();
//! let cfg = TrainConfig { epochs: 20, learning_rate: 1e-2, ..TrainConfig::default() };
//! let (net, _) = train(layers, &data, &cfg).unwrap();
//!
//! let hp = vec![TreeHyperParams::with_depth(1), TreeHyperParams::with_depth(2)];
//! let ens = DistillingEnsemble::fit(&net, &data, &hp, false).unwrap();
//! let analysis = build_stream_table(&ens, &net, &data, &ReliabilityConfig::default()).unwrap();
//! assert!(analysis.table.len() <= 2 * 4);
//! ```

pub mod data;
pub mod ensemble;
pub mod inspect;
pub mod matrix;
pub mod nn;
pub mod streams;
pub mod tree;

pub mod persist;

pub use matrix::Matrix;

/// Version tag written into every JSON artifact.
pub const FORMAT_VERSION: u32 = 1;
