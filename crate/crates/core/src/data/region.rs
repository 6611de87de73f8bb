use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

/// Pure predicate over feature vectors. It never sees labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RegionPredicate {
    All,
    /// Closed axis-aligned box; infinite bounds leave a side open.
    AxisBox { lower: Vec<f64>, upper: Vec<f64> },
    /// Closed Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
    And { all: Vec<RegionPredicate> },
    Not { inner: Box<RegionPredicate> },
}

impl RegionPredicate {
    /// `lo <= x[feature] <= hi` in a space of any dimension.
    pub fn strip(feature: usize, lo: f64, hi: f64) -> Self {
        let mut lower = vec![f64::NEG_INFINITY; feature + 1];
        let mut upper = vec![f64::INFINITY; feature + 1];
        lower[feature] = lo;
        upper[feature] = hi;
        RegionPredicate::AxisBox { lower, upper }
    }

    pub fn and(self, other: RegionPredicate) -> Self {
        RegionPredicate::And {
            all: vec![self, other],
        }
    }

    /// Box bounds shorter than `x` leave the remaining coordinates unconstrained.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            RegionPredicate::All => true,
            RegionPredicate::AxisBox { lower, upper } => {
                lower.iter().zip(x).all(|(l, v)| v >= l) && upper.iter().zip(x).all(|(u, v)| v <= u)
            }
            RegionPredicate::Ball { center, radius } => {
                let d2: f64 = center.iter().zip(x).map(|(c, v)| (v - c) * (v - c)).sum();
                d2 <= radius * radius
            }
            RegionPredicate::And { all } => all.iter().all(|p| p.contains(x)),
            RegionPredicate::Not { inner } => !inner.contains(x),
        }
    }

    /// Sound but incomplete check that every point of `self` lies in `other`.
    pub fn implies(&self, other: &RegionPredicate) -> bool {
        use RegionPredicate::*;
        if self == other || matches!(other, All) {
            return true;
        }
        if let And { all } = other {
            return all.iter().all(|q| self.implies(q));
        }
        match (self, other) {
            (And { all }, _) => all.iter().any(|p| p.implies(other)),
            (AxisBox { lower: l1, upper: u1 }, AxisBox { lower: l2, upper: u2 }) => {
                let bound = |v: &[f64], i: usize, default: f64| v.get(i).copied().unwrap_or(default);
                let dims = l1.len().max(u1.len()).max(l2.len()).max(u2.len());
                (0..dims).all(|i| {
                    bound(l1, i, f64::NEG_INFINITY) >= bound(l2, i, f64::NEG_INFINITY)
                        && bound(u1, i, f64::INFINITY) <= bound(u2, i, f64::INFINITY)
                })
            }
            (Ball { center: c1, radius: r1 }, Ball { center: c2, radius: r2 }) => {
                c1.len() == c2.len() && {
                    let d: f64 = c1.iter().zip(c2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    d + r1 <= *r2
                }
            }
            (Ball { center, radius }, AxisBox { lower, upper }) => {
                center.iter().enumerate().all(|(i, c)| {
                    lower.get(i).is_none_or(|l| c - radius >= *l)
                        && upper.get(i).is_none_or(|u| c + radius <= *u)
                }) && lower.len().max(upper.len()) <= center.len()
            }
            _ => false,
        }
    }
}

/// Rows matching `pred`, in their original order.
pub fn restrict_manifold(data: &Dataset, pred: &RegionPredicate) -> Result<Dataset, DataError> {
    let keep: Vec<usize> = (0..data.len())
        .filter(|&i| pred.contains(data.features().row(i)))
        .collect();
    if keep.is_empty() {
        return Err(DataError::EmptyRegion);
    }
    data.subset(&keep)
}
