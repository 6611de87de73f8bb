//! Alternative input spaces for inspectors.
//!
//! A transformed dataset is row-aligned with the original one: the network and
//! the ensemble keep working on the original features, while inspectors may be
//! trained on the transformed ones.

use super::{DataError, Dataset};
use crate::matrix::Matrix;

pub trait FeatureTransform {
    fn output_names(&self, input_names: &[String]) -> Vec<String>;
    fn apply(&self, row: &[f64]) -> Result<Vec<f64>, String>;
}

pub struct IdentityTransform;

impl FeatureTransform for IdentityTransform {
    fn output_names(&self, input_names: &[String]) -> Vec<String> {
        input_names.to_vec()
    }

    fn apply(&self, row: &[f64]) -> Result<Vec<f64>, String> {
        Ok(row.to_vec())
    }
}

/// `(x1, x2) -> (r, theta)` with `theta` in `(-pi, pi]`.
pub struct PolarTransform;

impl FeatureTransform for PolarTransform {
    fn output_names(&self, _: &[String]) -> Vec<String> {
        vec!["r".into(), "theta".into()]
    }

    fn apply(&self, row: &[f64]) -> Result<Vec<f64>, String> {
        match row {
            [x, y] => Ok(vec![x.hypot(*y), y.atan2(*x)]),
            _ => Err(format!("polar transform needs 2 features, got {}", row.len())),
        }
    }
}

/// Per-feature quantile binning into integer codes `1..=bins`.
///
/// Edge `k` of a feature is its `ceil(k n / B)`-th smallest training value and a
/// value lands in bin `1 + #{edges < value}`, so with distinct training values bin
/// `k` holds exactly `ceil(k n / B) - ceil((k - 1) n / B)` training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileBinning {
    edges: Vec<Vec<f64>>,
    bins: usize,
}

impl QuantileBinning {
    pub fn fit(x: &Matrix, bins: usize) -> Result<Self, DataError> {
        if bins < 1 {
            return Err(DataError::Config("quantile binning needs at least one bin".into()));
        }
        if x.rows() == 0 {
            return Err(DataError::Empty);
        }
        let n = x.rows();
        let edges = (0..x.cols())
            .map(|j| {
                let mut col: Vec<f64> = (0..n).map(|i| x.get(i, j)).collect();
                col.sort_by(f64::total_cmp);
                (1..bins).map(|k| col[(k * n).div_ceil(bins).max(1) - 1]).collect()
            })
            .collect();
        Ok(Self { edges, bins })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }
}

impl FeatureTransform for QuantileBinning {
    fn output_names(&self, input_names: &[String]) -> Vec<String> {
        input_names.iter().map(|n| format!("{n}_bin")).collect()
    }

    fn apply(&self, row: &[f64]) -> Result<Vec<f64>, String> {
        if row.len() != self.edges.len() {
            return Err(format!(
                "binning fitted on {} features, got {}",
                self.edges.len(),
                row.len()
            ));
        }
        Ok(row
            .iter()
            .zip(&self.edges)
            .map(|(v, e)| (1 + e.iter().filter(|edge| *v > **edge).count()) as f64)
            .collect())
    }
}

/// Wraps a closure together with the names of its outputs.
pub struct MapTransform<F> {
    names: Vec<String>,
    f: F,
}

impl<F> MapTransform<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, String>,
{
    pub fn new(names: Vec<String>, f: F) -> Self {
        Self { names, f }
    }
}

impl<F> FeatureTransform for MapTransform<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, String>,
{
    fn output_names(&self, _: &[String]) -> Vec<String> {
        self.names.clone()
    }

    fn apply(&self, row: &[f64]) -> Result<Vec<f64>, String> {
        (self.f)(row)
    }
}

/// Applies `transform` row by row. Labels and row order are preserved.
pub fn transform_space(data: &Dataset, transform: &dyn FeatureTransform) -> Result<Dataset, DataError> {
    let names = transform.output_names(data.feature_names());
    let mut out = Matrix::zeros(data.len(), names.len());
    for (i, row) in data.features().iter_rows().enumerate() {
        let v = transform
            .apply(row)
            .map_err(|message| DataError::Transform { row: i, message })?;
        if v.len() != names.len() {
            return Err(DataError::Transform {
                row: i,
                message: format!("produced {} values for {} names", v.len(), names.len()),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(DataError::Transform {
                row: i,
                message: "non-finite output".into(),
            });
        }
        out.row_mut(i).copy_from_slice(&v);
    }
    Dataset::new(out, data.labels().to_vec(), data.num_classes())?
        .with_feature_names(names)?
        .with_class_names(data.class_names().to_vec())
}
