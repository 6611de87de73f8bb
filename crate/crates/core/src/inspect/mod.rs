//! Interpretable descriptions of stream partitions.

mod auc;
mod logistic;

pub use auc::roc_auc;
pub use logistic::{
    fit_l1_logistic, fit_logistic_inspector, l1_logistic_objective, logistic_loss_and_grad,
    LogisticConfig, LogisticInspector, Standardizer,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::streams::StreamAnalysis;
use crate::tree::{ClassificationTree, Rule, TreeError, TreeHyperParams};

#[derive(Debug, Error)]
pub enum InspectError {
    #[error("stream label {0} does not exist")]
    UnknownLabel(usize),
    #[error(
        "stream {label} is unreliable: population {population} is below the gamma threshold {min_population}"
    )]
    Unreliable {
        label: usize,
        population: usize,
        min_population: usize,
    },
    #[error("stream {label} has no objects left after the alpha error filter")]
    NoPositives { label: usize },
    #[error("the contrast group for stream {label} is empty")]
    NoNegatives { label: usize },
    #[error("inspector needs both classes present")]
    SingleClass,
    #[error("empty object subset")]
    Empty,
    #[error("length mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// How the negatives of a one-vs-rest contrast are chosen.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ContrastSpec {
    #[default]
    OneVsAll,
    /// Negatives drawn from the listed stream labels only.
    OneVsGroup { labels: Vec<usize> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedCounts {
    /// Objects of the target stream removed by the error filter.
    pub flagged_positives: usize,
    /// Candidate negatives removed by the error filter.
    pub flagged_negatives: usize,
    /// Candidate negatives sitting in unreliable streams.
    pub unreliable_negatives: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSetSizes {
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastDataset {
    pub x: Matrix,
    pub y: Vec<bool>,
    /// Row index into the analysed dataset for every training row.
    pub object_ids: Vec<usize>,
    pub sizes: TrainingSetSizes,
    pub excluded: ExcludedCounts,
}

/// Builds the binary training set for stream `label`. Flagged objects and
/// objects of unreliable streams never enter it. `features` is row-parallel to
/// the analysed objects and may live in a transformed space.
pub fn build_contrast_dataset(
    analysis: &StreamAnalysis,
    label: usize,
    spec: &ContrastSpec,
    features: &Matrix,
) -> Result<ContrastDataset, InspectError> {
    if features.rows() != analysis.objects.len() {
        return Err(InspectError::ShapeMismatch {
            expected: analysis.objects.len(),
            found: features.rows(),
        });
    }
    let table = &analysis.table;
    let target = table.entry(label).ok_or(InspectError::UnknownLabel(label))?;
    if !target.reliable {
        return Err(InspectError::Unreliable {
            label,
            population: target.population,
            min_population: table.state().min_population,
        });
    }
    if let ContrastSpec::OneVsGroup { labels } = spec {
        if let Some(&bad) = labels.iter().find(|&&l| table.entry(l).is_none()) {
            return Err(InspectError::UnknownLabel(bad));
        }
    }
    let in_group = |l: usize| match spec {
        ContrastSpec::OneVsAll => l != label,
        ContrastSpec::OneVsGroup { labels } => l != label && labels.contains(&l),
    };

    let mut ids = Vec::new();
    let mut y = Vec::new();
    let mut excluded = ExcludedCounts::default();
    for (i, o) in analysis.objects.iter().enumerate() {
        if o.label == label {
            if o.flagged {
                excluded.flagged_positives += 1;
            } else {
                ids.push(i);
                y.push(true);
            }
        } else if in_group(o.label) {
            let reliable = table.entry(o.label).is_some_and(|e| e.reliable);
            if !reliable {
                excluded.unreliable_negatives += 1;
            } else if o.flagged {
                excluded.flagged_negatives += 1;
            } else {
                ids.push(i);
                y.push(false);
            }
        }
    }
    let positives = y.iter().filter(|&&p| p).count();
    if positives == 0 {
        return Err(InspectError::NoPositives { label });
    }
    if positives == y.len() {
        return Err(InspectError::NoNegatives { label });
    }
    let sizes = TrainingSetSizes {
        positives,
        negatives: y.len() - positives,
    };
    Ok(ContrastDataset {
        x: features.select_rows(&ids),
        y,
        object_ids: ids,
        sizes,
        excluded,
    })
}

/// Multiclass training set over stream labels: unflagged objects of reliable
/// streams only.
pub fn tree_inspector_dataset(
    analysis: &StreamAnalysis,
    features: &Matrix,
) -> Result<(Matrix, Vec<usize>, Vec<usize>), InspectError> {
    if features.rows() != analysis.objects.len() {
        return Err(InspectError::ShapeMismatch {
            expected: analysis.objects.len(),
            found: features.rows(),
        });
    }
    let ids: Vec<usize> = analysis
        .objects
        .iter()
        .enumerate()
        .filter(|(_, o)| !o.flagged && analysis.table.entry(o.label).is_some_and(|e| e.reliable))
        .map(|(i, _)| i)
        .collect();
    let labels = ids.iter().map(|&i| analysis.objects[i].label).collect();
    Ok((features.select_rows(&ids), labels, ids))
}

/// Gini classification tree predicting stream labels.
pub fn fit_tree_inspector(
    x: &Matrix,
    labels: &[usize],
    hp: &TreeHyperParams,
) -> Result<ClassificationTree, InspectError> {
    let first = labels.first().ok_or(InspectError::Empty)?;
    if labels.iter().all(|l| l == first) {
        return Err(InspectError::SingleClass);
    }
    Ok(ClassificationTree::fit(x, labels, hp)?)
}

/// Column means of a non-empty object subset.
pub fn feature_average(x: &Matrix) -> Result<Vec<f64>, InspectError> {
    if x.rows() == 0 {
        return Err(InspectError::Empty);
    }
    Ok(x.column_means())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCoefficient {
    pub feature: usize,
    pub name: String,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InspectorBody {
    Logistic {
        bias: f64,
        l1_strength: f64,
        /// Non-zero standardized coefficients, largest magnitude first.
        coefficients: Vec<FeatureCoefficient>,
        standardizer: Standardizer,
        converged: bool,
    },
    Tree {
        rules: Vec<Rule>,
        described: Vec<String>,
    },
    Average {
        names: Vec<String>,
        mean: Vec<f64>,
    },
}

/// Exported description of one stream label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectorReport {
    /// `None` for the multiclass tree inspector.
    pub stream_label: Option<usize>,
    #[serde(flatten)]
    pub body: InspectorBody,
    pub auc: Option<f64>,
    /// True when `auc` was measured on held-out objects.
    pub holdout: bool,
    pub training_set_sizes: TrainingSetSizes,
    pub excluded_counts: ExcludedCounts,
}

impl InspectorReport {
    /// Logistic inspector report; AUC is computed on `eval` if given, otherwise
    /// on the training design.
    pub fn logistic(
        label: usize,
        model: &LogisticInspector,
        contrast: &ContrastDataset,
        names: &[String],
        top_k: usize,
        eval: Option<(&Matrix, &[bool])>,
    ) -> Result<Self, InspectError> {
        let (x, y) = eval.unwrap_or((&contrast.x, &contrast.y));
        let auc = roc_auc(&model.decision_batch(x), y)?;
        let coefficients = model
            .top_features(top_k)
            .into_iter()
            .map(|(feature, coefficient)| FeatureCoefficient {
                feature,
                name: names.get(feature).cloned().unwrap_or_else(|| format!("x{}", feature + 1)),
                coefficient,
            })
            .collect();
        Ok(Self {
            stream_label: Some(label),
            body: InspectorBody::Logistic {
                bias: model.bias,
                l1_strength: model.l1_strength,
                coefficients,
                standardizer: model.standardizer.clone(),
                converged: model.converged,
            },
            auc: Some(auc),
            holdout: eval.is_some(),
            training_set_sizes: contrast.sizes,
            excluded_counts: contrast.excluded,
        })
    }

    pub fn to_json(&self) -> String {
        crate::persist::to_json(self)
    }
}
