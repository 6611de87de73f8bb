//! L1-regularized logistic regression by proximal gradient descent.
//!
//! Minimizes `mean_i log(1 + exp(-s_i (w.z_i + b))) + l1 * ||w||_1` over
//! standardized features `z`, with the bias unpenalized. The step is `1/L` where
//! `L = lambda_max([Z 1]^T [Z 1]) / (4 n)` bounds the curvature of the loss, so the
//! objective never increases between iterations.

use serde::{Deserialize, Serialize};

use super::InspectError;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub l1_strength: f64,
    /// Stop when the norm of the proximal gradient mapping falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l1_strength: 0.01,
            tolerance: 1e-6,
            max_iterations: 10_000,
        }
    }
}

/// Column-wise `(x - mean) / std`; constant columns keep scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let mean = x.column_means();
        let n = x.rows().max(1) as f64;
        let mut var = vec![0.0; x.cols()];
        for r in x.iter_rows() {
            for ((v, m), s) in r.iter().zip(&mean).zip(var.iter_mut()) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            out.row_mut(i).copy_from_slice(&self.apply_row(x.row(i)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticInspector {
    /// Coefficients in standardized units.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l1_strength: f64,
    pub standardizer: Standardizer,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticInspector {
    /// Linear score `w.z + b` of a raw feature row.
    pub fn decision(&self, row: &[f64]) -> f64 {
        let z = self.standardizer.apply_row(row);
        self.bias + dot(&self.weights, &z)
    }

    pub fn decision_batch(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.decision(r)).collect()
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision(row))
    }

    /// `(feature, coefficient)` pairs by decreasing magnitude; zeros are dropped.
    pub fn top_features(&self, k: usize) -> Vec<(usize, f64)> {
        let mut pairs: Vec<(usize, f64)> = self
            .weights
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, w)| *w != 0.0)
            .collect();
        pairs.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        pairs.truncate(k);
        pairs
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Mean logistic loss and its gradient `(d/dw, d/db)` at `(w, b)`.
pub fn logistic_loss_and_grad(x: &Matrix, y: &[bool], w: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
    let n = x.rows().max(1) as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; x.cols()];
    let mut gb = 0.0;
    for (row, &pos) in x.iter_rows().zip(y) {
        let t = b + dot(w, row);
        let s = if pos { 1.0 } else { -1.0 };
        loss += softplus(-s * t);
        let r = sigmoid(t) - if pos { 1.0 } else { 0.0 };
        for (g, v) in gw.iter_mut().zip(row) {
            *g += r * v;
        }
        gb += r;
    }
    gw.iter_mut().for_each(|g| *g /= n);
    (loss / n, gw, gb / n)
}

/// Penalized objective `loss + l1 * ||w||_1`.
pub fn l1_logistic_objective(x: &Matrix, y: &[bool], w: &[f64], b: f64, l1: f64) -> f64 {
    logistic_loss_and_grad(x, y, w, b).0 + l1 * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// Largest eigenvalue of `A^T A` for `A = [x 1]`, by power iteration.
fn gram_spectral_bound(x: &Matrix) -> f64 {
    let p = x.cols() + 1;
    let mut v = vec![1.0 / (p as f64).sqrt(); p];
    let mut lambda = 0.0;
    for _ in 0..1000 {
        // u = A^T A v
        let mut u = vec![0.0; p];
        for row in x.iter_rows() {
            let av = dot(&v[..p - 1], row) + v[p - 1];
            for (ui, r) in u.iter_mut().zip(row) {
                *ui += av * r;
            }
            u[p - 1] += av;
        }
        let norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm; // ||A^T A v|| with ||v|| = 1
        u.iter_mut().for_each(|a| *a /= norm);
        v = u;
        if (next - lambda).abs() <= 1e-12 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Power iteration approaches from below; the Frobenius norm is a hard cap.
    let frobenius = x.as_slice().iter().map(|a| a * a).sum::<f64>() + x.rows() as f64;
    (lambda * 1.01).min(frobenius)
}

/// Proximal-gradient fit on already standardized features.
pub fn fit_l1_logistic(
    x: &Matrix,
    y: &[bool],
    cfg: &LogisticConfig,
) -> Result<(Vec<f64>, f64, usize, bool), InspectError> {
    let n = x.rows();
    let lipschitz = gram_spectral_bound(x) / (4.0 * n as f64);
    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };
    let mut w = vec![0.0; x.cols()];
    let mut b = 0.0;
    for it in 0..cfg.max_iterations {
        let (_, gw, gb) = logistic_loss_and_grad(x, y, &w, b);
        let mut mapping = 0.0;
        for (wj, g) in w.iter_mut().zip(&gw) {
            let z = *wj - step * g;
            let shrunk = z.signum() * (z.abs() - step * cfg.l1_strength).max(0.0);
            mapping += (*wj - shrunk) * (*wj - shrunk);
            *wj = shrunk;
        }
        let nb = b - step * gb;
        mapping += (b - nb) * (b - nb);
        b = nb;
        if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(InspectError::NonFinite("logistic coefficients"));
        }
        if mapping.sqrt() / step <= cfg.tolerance {
            return Ok((w, b, it + 1, true));
        }
    }
    Ok((w, b, cfg.max_iterations, false))
}

/// Fits a one-vs-rest inspector on raw features. Standardization statistics are
/// taken from `x` and stored with the model.
pub fn fit_logistic_inspector(
    x: &Matrix,
    y: &[bool],
    cfg: &LogisticConfig,
) -> Result<LogisticInspector, InspectError> {
    if x.rows() != y.len() {
        return Err(InspectError::ShapeMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if cfg.l1_strength.is_nan() || cfg.l1_strength < 0.0 {
        return Err(InspectError::Config(format!("l1 strength {} is negative", cfg.l1_strength)));
    }
    let positives = y.iter().filter(|&&p| p).count();
    if positives == 0 || positives == y.len() {
        return Err(InspectError::SingleClass);
    }
    if !x.is_finite() {
        return Err(InspectError::NonFinite("features"));
    }
    let standardizer = Standardizer::fit(x);
    let z = standardizer.apply(x);
    let (weights, bias, iterations, converged) = fit_l1_logistic(&z, y, cfg)?;
    Ok(LogisticInspector {
        weights,
        bias,
        l1_strength: cfg.l1_strength,
        standardizer,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(l1: f64) -> LogisticConfig {
        LogisticConfig {
            l1_strength: l1,
            ..LogisticConfig::default()
        }
    }

    #[test]
    fn separable_one_dimensional() {
        let x = Matrix::from_rows(&[[-3.0], [-2.0], [-1.0], [1.0], [2.0], [3.0]]).unwrap();
        let y = [true, true, true, false, false, false];
        let m = fit_logistic_inspector(&x, &y, &cfg(0.01)).unwrap();
        assert!(m.weights[0] < 0.0);
        let auc = super::super::roc_auc(&m.decision_batch(&x), &y).unwrap();
        assert_eq!(auc, 1.0);
    }

    #[test]
    fn full_shrinkage_gives_base_rate_log_odds() {
        let x = Matrix::from_rows(&[[0.3, 1.0], [1.2, -1.0], [0.1, 0.5], [2.0, 2.0], [0.0, 0.1]]).unwrap();
        let y = [true, false, false, true, false];
        let m = fit_logistic_inspector(&x, &y, &cfg(1e6)).unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0));
        assert!((m.bias - (2.0f64 / 3.0).ln()).abs() < 1e-6);
        assert!(m.top_features(10).is_empty());
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(matches!(
            fit_logistic_inspector(&x, &[true, true], &cfg(0.1)),
            Err(InspectError::SingleClass)
        ));
    }

    #[test]
    fn standardizer_handles_constant_columns() {
        let x = Matrix::from_rows(&[[1.0, 5.0], [3.0, 5.0]]).unwrap();
        let s = Standardizer::fit(&x);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        assert_eq!(s.apply_row(&[3.0, 5.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn power_iteration_bounds_the_gram_spectrum() {
        // A = [[1, 1], [1, 1]] -> A^T A = [[2, 2], [2, 2]], lambda_max 4.
        let x = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let l = gram_spectral_bound(&x);
        assert!((4.0..=4.0 * 1.01 + 1e-12).contains(&l));
    }
}
