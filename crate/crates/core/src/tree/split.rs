//! Exhaustive CART split search.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted decrease `(n_node / n_total) * (impurity - weighted child impurity)`.
    pub impurity_decrease: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConstraints {
    pub min_samples_leaf: usize,
    pub min_impurity_decrease: f64,
    /// Size of the whole training set, used to weight the decrease.
    pub total_samples: usize,
}

impl SplitConstraints {
    pub fn unconstrained(total_samples: usize) -> Self {
        Self {
            min_samples_leaf: 1,
            min_impurity_decrease: 0.0,
            total_samples,
        }
    }
}

/// Relative size below which a reduction of the node's squared error is treated
/// as rounding noise rather than a real improvement.
pub(crate) const RELATIVE_GAIN_EPS: f64 = 1e-10;

/// Best split of all rows of `x` against `targets`, or `None` when no split
/// satisfies the constraints.
pub fn best_split(x: &Matrix, targets: &Matrix, constraints: &SplitConstraints) -> Option<Split> {
    let indices: Vec<usize> = (0..x.rows()).collect();
    best_split_indices(x, targets, &indices, constraints)
}

pub(crate) fn is_pure(targets: &Matrix, indices: &[usize]) -> bool {
    let first = targets.row(indices[0]);
    indices.iter().all(|&i| targets.row(i) == first)
}

/// Sum of squared deviations from the mean, per node, over all outputs.
fn node_sse(targets: &Matrix, indices: &[usize]) -> f64 {
    let c = targets.cols();
    let n = indices.len() as f64;
    let mut mean = vec![0.0; c];
    for &i in indices {
        for (m, v) in mean.iter_mut().zip(targets.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    indices
        .iter()
        .map(|&i| {
            targets
                .row(i)
                .iter()
                .zip(&mean)
                .map(|(v, m)| (v - m) * (v - m))
                .sum::<f64>()
        })
        .sum()
}

pub(crate) fn best_split_indices(
    x: &Matrix,
    targets: &Matrix,
    indices: &[usize],
    constraints: &SplitConstraints,
) -> Option<Split> {
    let n = indices.len();
    let min_leaf = constraints.min_samples_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let c = targets.cols();
    let mut total = vec![0.0; c];
    for &i in indices {
        for (t, v) in total.iter_mut().zip(targets.row(i)) {
            *t += v;
        }
    }
    let parent_term: f64 = total.iter().map(|s| s * s).sum::<f64>() / n as f64;
    let floor = RELATIVE_GAIN_EPS * node_sse(targets, indices);
    let weight = 1.0 / constraints.total_samples.max(n) as f64;

    let mut best: Option<Split> = None;
    let mut order = indices.to_vec();
    let mut left = vec![0.0; c];
    for feature in 0..x.cols() {
        order.sort_by(|&a, &b| x.get(a, feature).total_cmp(&x.get(b, feature)));
        left.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..n - 1 {
            for (l, v) in left.iter_mut().zip(targets.row(order[k])) {
                *l += v;
            }
            let n_left = k + 1;
            let n_right = n - n_left;
            if n_left < min_leaf {
                continue;
            }
            if n_right < min_leaf {
                break;
            }
            let lo = x.get(order[k], feature);
            let hi = x.get(order[k + 1], feature);
            if lo >= hi {
                continue;
            }
            let mut gain = -parent_term;
            for (l, t) in left.iter().zip(&total) {
                let r = t - l;
                gain += l * l / n_left as f64 + r * r / n_right as f64;
            }
            if gain <= floor {
                continue;
            }
            let decrease = gain * weight;
            if decrease < constraints.min_impurity_decrease {
                continue;
            }
            if best.is_none_or(|b| decrease > b.impurity_decrease) {
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                best = Some(Split {
                    feature,
                    threshold,
                    impurity_decrease: decrease,
                });
            }
        }
    }
    best
}
