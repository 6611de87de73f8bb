//! TOML run configuration. Every section is optional; the defaults reproduce
//! the Gaussian-mixture experiment.

use std::path::{Path, PathBuf};

use leafstream::data::{CsvSchema, MixtureConfig, RegionPredicate};
use leafstream::inspect::{ContrastSpec, LogisticConfig};
use leafstream::nn::{LayerSpec, NetBuilder, TrainConfig};
use leafstream::streams::ReliabilityConfig;
use leafstream::tree::{MinSamplesLeaf, TreeHyperParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataSection,
    pub network: NetworkSection,
    pub train: TrainConfig,
    pub distill: DistillSection,
    pub reliability: ReliabilityConfig,
    pub inspect: InspectSection,
    pub plot: PlotSection,
    pub adaptive: AdaptiveSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            data: DataSection::default(),
            network: NetworkSection::default(),
            train: TrainConfig {
                epochs: 1000,
                ..TrainConfig::default()
            },
            distill: DistillSection::default(),
            reliability: ReliabilityConfig {
                alpha: 0.05,
                gamma: 0.01,
                ..ReliabilityConfig::default()
            },
            inspect: InspectSection::default(),
            plot: PlotSection::default(),
            adaptive: AdaptiveSection::default(),
        }
    }
}

/// Data source. Section-level seeds are replaced by the run seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSection {
    Mixture {
        #[serde(default, flatten)]
        mixture: MixtureConfig,
    },
    Csv {
        path: PathBuf,
        #[serde(flatten)]
        schema: CsvSchema,
    },
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection::Mixture {
            mixture: MixtureConfig::default(),
        }
    }
}

/// One architecture entry; weights come from the initializer, not the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerEntry {
    Affine { out: usize },
    Prelu,
    Relu,
    LeakyRelu { slope: f64 },
    Dropout { keep: f64 },
    Identity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub layers: Vec<LayerEntry>,
    /// Defaults to `<out>/weights.json`.
    pub weights: Option<PathBuf>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let mut layers = Vec::new();
        for _ in 0..5 {
            layers.push(LayerEntry::Affine { out: 2 });
            layers.push(LayerEntry::Prelu);
        }
        layers.push(LayerEntry::Affine { out: 2 });
        Self { layers, weights: None }
    }
}

impl NetworkSection {
    pub fn build(&self, input_dim: usize, seed: u64) -> Vec<LayerSpec> {
        let mut b = NetBuilder::with_seed(input_dim, seed);
        for l in &self.layers {
            b = match *l {
                LayerEntry::Affine { out } => b.affine(out),
                LayerEntry::Prelu => b.prelu(),
                LayerEntry::Relu => b.relu(),
                LayerEntry::LeakyRelu { slope } => b.leaky_relu(slope),
                LayerEntry::Dropout { keep } => b.dropout(keep),
                LayerEntry::Identity => b.identity(),
            };
        }
        b.layers()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillSection {
    /// Tree depth per layer; ignored when `trees` is given.
    pub depths: Vec<usize>,
    pub min_samples_leaf: Option<MinSamplesLeaf>,
    pub min_impurity_decrease: Option<f64>,
    /// Full per-layer hyperparameters.
    pub trees: Option<Vec<TreeHyperParams>>,
    pub use_multipliers: bool,
    /// Defaults to `<out>/ensemble.json`.
    pub ensemble: Option<PathBuf>,
}

impl Default for DistillSection {
    fn default() -> Self {
        Self {
            // Constant tree on the raw input, then 1, 1, 1, 2, 2 on the hidden layers.
            depths: vec![0, 1, 1, 1, 2, 2],
            min_samples_leaf: None,
            min_impurity_decrease: None,
            trees: None,
            use_multipliers: false,
            ensemble: None,
        }
    }
}

impl DistillSection {
    pub fn hyper_params(&self) -> Vec<TreeHyperParams> {
        if let Some(t) = &self.trees {
            return t.clone();
        }
        self.depths
            .iter()
            .map(|&d| {
                let mut hp = TreeHyperParams::with_depth(d);
                if let Some(m) = self.min_samples_leaf {
                    hp.min_samples_leaf = m;
                }
                if let Some(m) = self.min_impurity_decrease {
                    hp.min_impurity_decrease = m;
                }
                hp
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InspectorKind {
    Logistic,
    Tree,
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformEntry {
    Identity,
    Polar,
    QuantileBins(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InspectSection {
    pub kind: InspectorKind,
    pub l1_strength: f64,
    pub top_k: usize,
    pub contrast: ContrastSpec,
    pub tree_depth: usize,
    /// Share of the contrast set held out for the reported AUC; 0 reports in-sample.
    pub holdout_fraction: f64,
    pub transform: TransformEntry,
}

impl Default for InspectSection {
    fn default() -> Self {
        Self {
            kind: InspectorKind::Logistic,
            l1_strength: LogisticConfig::default().l1_strength,
            top_k: 10,
            contrast: ContrastSpec::OneVsAll,
            tree_depth: 3,
            holdout_fraction: 0.0,
            transform: TransformEntry::Identity,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotSection {
    /// Heatmap cells per side.
    pub grid: usize,
    /// Horizontal cut `x2 = profile_y` for the profile plot.
    pub profile_y: f64,
    pub profile_points: usize,
    /// Class whose probability is drawn.
    pub class: usize,
}

impl Default for PlotSection {
    fn default() -> Self {
        Self {
            grid: 120,
            profile_y: -2.5,
            profile_points: 400,
            class: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveSection {
    pub samples_per_round: usize,
    /// Nested regions, outermost first.
    pub regions: Vec<RegionPredicate>,
}

impl Default for AdaptiveSection {
    fn default() -> Self {
        Self {
            samples_per_round: 7500,
            regions: vec![RegionPredicate::strip(0, -0.5, 0.5)],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        // Relative data paths are resolved against the config file.
        if let DataSection::Csv { path: p, .. } = &mut cfg.data {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Applies the common flags; they take precedence over the file.
    pub fn override_with(&mut self, seed: Option<u64>, out: Option<PathBuf>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out = o;
        }
    }

    pub fn weights_path(&self) -> PathBuf {
        self.network.weights.clone().unwrap_or_else(|| self.out.join("weights.json"))
    }

    pub fn ensemble_path(&self) -> PathBuf {
        self.distill.ensemble.clone().unwrap_or_else(|| self.out.join("ensemble.json"))
    }
}
