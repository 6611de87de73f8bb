//! Datasets, the Gaussian-mixture generator, CSV ingestion, input-space
//! transforms, region restriction and adaptive explanation.

mod adaptive;
mod mixture;
mod region;
mod tabular;
mod transform;

use thiserror::Error;

use crate::matrix::Matrix;

pub use adaptive::{adaptive_explain, AdaptiveConfig, AdaptiveRound, PoolSampler, RegionSampler};
pub use mixture::{MixtureComponent, MixtureConfig, MixtureSampler};
pub use region::{restrict_manifold, RegionPredicate};
pub use tabular::{load_csv, load_features, CsvSchema};
pub use transform::{
    transform_space, FeatureTransform, IdentityTransform, MapTransform, PolarTransform,
    QuantileBinning,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset is empty")]
    Empty,
    #[error("row {row}: label {label} outside 0..{num_classes}")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("row {row}, column {col}: non-finite feature value")]
    NonFinite { row: usize, col: usize },
    #[error("{what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("line {line}, column {col} (`{column}`): cannot parse {value:?} as a number")]
    NonNumeric {
        line: usize,
        col: usize,
        column: String,
        value: String,
    },
    #[error("file has no data rows")]
    EmptyFile,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: transform failed: {message}")]
    Transform { row: usize, message: String },
    #[error("region contains no objects")]
    EmptyRegion,
    #[error("sampler produced {accepted} of {requested} requested points after {attempts} draws")]
    SamplingExhausted {
        requested: usize,
        accepted: usize,
        attempts: usize,
    },
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Ensemble(#[from] crate::ensemble::EnsembleError),
    #[error(transparent)]
    Stream(#[from] crate::streams::StreamError),
}

/// Feature matrix with class labels.
///
/// Class labels are 0-based indices into the network's logits; `class_names`
/// keeps the original label values (for CSV input, in first-occurrence order).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    feature_names: Vec<String>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self, DataError> {
        if x.rows() == 0 {
            return Err(DataError::Empty);
        }
        if labels.len() != x.rows() {
            return Err(DataError::ShapeMismatch {
                what: "label count",
                expected: x.rows(),
                found: labels.len(),
            });
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(DataError::LabelOutOfRange {
                row,
                label,
                num_classes,
            });
        }
        for (row, r) in x.iter_rows().enumerate() {
            if let Some(col) = r.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFinite { row, col });
            }
        }
        let feature_names = (1..=x.cols()).map(|j| format!("x{j}")).collect();
        let class_names = (0..num_classes).map(|c| c.to_string()).collect();
        Ok(Self {
            x,
            labels,
            num_classes,
            feature_names,
            class_names,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self, DataError> {
        if names.len() != self.x.cols() {
            return Err(DataError::ShapeMismatch {
                what: "feature name count",
                expected: self.x.cols(),
                found: names.len(),
            });
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self, DataError> {
        if names.len() != self.num_classes {
            return Err(DataError::ShapeMismatch {
                what: "class name count",
                expected: self.num_classes,
                found: names.len(),
            });
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn num_features(&self) -> usize {
        self.x.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Matrix {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Rows at `indices`, in that order, keeping names and class count.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, DataError> {
        if indices.is_empty() {
            return Err(DataError::Empty);
        }
        Ok(Self {
            x: self.x.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        })
    }

    /// Replaces labels, e.g. with a network's predicted classes.
    pub fn relabel(&self, labels: Vec<usize>) -> Result<Self, DataError> {
        Dataset::new(self.x.clone(), labels, self.num_classes)?
            .with_feature_names(self.feature_names.clone())?
            .with_class_names(self.class_names.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(Dataset::new(x.clone(), vec![0, 1], 2).is_ok());
        assert!(matches!(
            Dataset::new(x.clone(), vec![0, 2], 2),
            Err(DataError::LabelOutOfRange { row: 1, .. })
        ));
        assert!(matches!(
            Dataset::new(x, vec![0], 2),
            Err(DataError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            Dataset::new(Matrix::zeros(0, 1), vec![], 2),
            Err(DataError::Empty)
        ));
        let nan = Matrix::from_rows(&[[0.0, f64::NAN]]).unwrap();
        assert!(matches!(
            Dataset::new(nan, vec![0], 1),
            Err(DataError::NonFinite { row: 0, col: 1 })
        ));
    }
}
