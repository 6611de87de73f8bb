//! Independent oracles shared by the integration tests and the acceptance run.
//! Every check returns `Err` with a description of the first mismatch.

#![allow(dead_code)]

use leafstream::data::Dataset;
use leafstream::ensemble::{fit_multiplier, DistillingEnsemble};
use leafstream::inspect::{logistic_loss_and_grad, roc_auc};
use leafstream::nn::{FeedForwardNet, NetBuilder};
use leafstream::streams::{build_stream_table, Assignment, ReliabilityConfig};
use leafstream::tree::{best_split, RegressionTree, SplitConstraints, TreeHyperParams};
use leafstream::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Check = Result<(), String>;

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Feature matrix with few distinct values per column, so duplicate values occur.
fn coarse_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(0..6) as f64 * 0.5).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn sse(targets: &Matrix, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for c in 0..targets.cols() {
        let mean = idx.iter().map(|&i| targets.get(i, c)).sum::<f64>() / idx.len() as f64;
        total += idx.iter().map(|&i| (targets.get(i, c) - mean).powi(2)).sum::<f64>();
    }
    total
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Enumerates every (feature, threshold) on `idx` and returns the best by SSE
/// reduction, lowest feature then threshold among near-ties.
fn brute_force_split(x: &Matrix, g: &Matrix, idx: &[usize]) -> Option<(usize, f64, f64)> {
    let parent = sse(g, idx);
    let mut candidates = Vec::new();
    for f in 0..x.cols() {
        let mut values: Vec<f64> = idx.iter().map(|&i| x.get(i, f)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = midpoint(w[0], w[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x.get(i, f) <= t);
            candidates.push((f, t, parent - sse(g, &l) - sse(g, &r)));
        }
    }
    let best = candidates.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    if candidates.is_empty() || best <= 1e-10 * parent + 1e-12 {
        return None;
    }
    candidates
        .into_iter()
        .filter(|c| c.2 >= best - 1e-9 * best.abs())
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)))
}

fn brute_force_tree(x: &Matrix, g: &Matrix, idx: &[usize], depth: usize, out: &mut Vec<(usize, Vec<f64>)>) {
    let split = if depth == 0 { None } else { brute_force_split(x, g, idx) };
    match split {
        Some((f, t, _)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x.get(i, f) <= t);
            brute_force_tree(x, g, &l, depth - 1, out);
            brute_force_tree(x, g, &r, depth - 1, out);
        }
        None => {
            let mean: Vec<f64> = (0..g.cols())
                .map(|c| idx.iter().map(|&i| g.get(i, c)).sum::<f64>() / idx.len() as f64)
                .collect();
            out.extend(idx.iter().map(|&i| (i, mean.clone())));
        }
    }
}

/// Root split and full greedy tree against exhaustive enumeration.
pub fn tree_matches_brute_force(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..instances {
        let n = rng.random_range(2..=32);
        let p = rng.random_range(1..=4);
        let c = rng.random_range(1..=3);
        let mut x = if case % 2 == 0 { coarse_matrix(&mut rng, n, p) } else { random_matrix(&mut rng, n, p) };
        if case % 5 == 0 && p > 1 {
            // Duplicate column 0 into the last column to force exact ties.
            for i in 0..n {
                let v = x.get(i, 0);
                x.set(i, p - 1, v);
            }
        }
        let g = random_matrix(&mut rng, n, c);
        let idx: Vec<usize> = (0..n).collect();
        let ours = best_split(&x, &g, &SplitConstraints::unconstrained(n));
        let oracle = brute_force_split(&x, &g, &idx);
        match (ours, oracle) {
            (None, None) => {}
            (Some(s), Some((f, t, gain))) => {
                if s.feature != f || s.threshold != t {
                    return Err(format!(
                        "case {case}: split ({}, {}) vs oracle ({f}, {t})",
                        s.feature, s.threshold
                    ));
                }
                let expected = gain / n as f64;
                if (s.impurity_decrease - expected).abs() > 1e-9 * expected.abs().max(1e-12) {
                    return Err(format!("case {case}: decrease {} vs {expected}", s.impurity_decrease));
                }
            }
            (a, b) => return Err(format!("case {case}: {a:?} vs oracle {b:?}")),
        }

        let depth = case % 4;
        let tree = RegressionTree::fit(&x, &g, &TreeHyperParams::with_depth(depth)).map_err(|e| e.to_string())?;
        let mut leaves = Vec::new();
        brute_force_tree(&x, &g, &idx, depth, &mut leaves);
        for (i, mean) in leaves {
            let pred = tree.predict(x.row(i)).map_err(|e| e.to_string())?;
            if pred.iter().zip(&mean).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + b.abs())) {
                return Err(format!("case {case}: row {i} predicts {pred:?}, oracle {mean:?}"));
            }
        }
    }
    Ok(())
}

/// A random small network mixing every activation kind.
pub fn random_net(rng: &mut ChaCha8Rng, input_dim: usize, classes: usize) -> FeedForwardNet {
    let mut b = NetBuilder::with_seed(input_dim, rng.random());
    let hidden = rng.random_range(1..=3);
    for _ in 0..hidden {
        b = b.affine(rng.random_range(2..=5));
        b = match rng.random_range(0..4) {
            0 => b.prelu(),
            1 => b.relu(),
            2 => b.leaky_relu(0.1),
            _ => b.identity(),
        };
        if rng.random_bool(0.3) {
            b = b.dropout(0.8);
        }
    }
    FeedForwardNet::new(b.affine(classes).layers()).unwrap()
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, classes: usize) -> Dataset {
    let x = random_matrix(rng, n, d);
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Dataset::new(x, labels, classes).unwrap()
}

fn random_hp(rng: &mut ChaCha8Rng, depth: usize) -> Vec<TreeHyperParams> {
    (0..depth).map(|_| TreeHyperParams::with_depth(rng.random_range(0..=3))).collect()
}

/// Training logit MSE never increases as trees are added.
pub fn boosting_mse_non_increasing(nets: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for case in 0..nets {
        let d = rng.random_range(1..=4);
        let classes = rng.random_range(2..=4);
        let net = random_net(&mut rng, d, classes);
        let n = rng.random_range(20..=200);
        let data = random_dataset(&mut rng, n, d, classes);
        let hp = random_hp(&mut rng, net.depth());
        for use_mult in [false, true] {
            let (_, trace) = DistillingEnsemble::fit_with_trace(&net, &data, &hp, use_mult).map_err(|e| e.to_string())?;
            for (k, w) in trace.windows(2).enumerate() {
                if w[1] > w[0] + 1e-12 * trace[0].max(1e-300) {
                    return Err(format!("case {case}, multipliers {use_mult}: MSE rose at tree {k}: {trace:?}"));
                }
            }
        }
    }
    Ok(())
}

/// The closed-form multiplier minimizes the residual norm at least as well as a
/// golden-section search.
pub fn multiplier_matches_golden_section(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for case in 0..instances {
        let n = rng.random_range(2..=40);
        let c = rng.random_range(1..=3);
        let o = random_matrix(&mut rng, n, c);
        let r = random_matrix(&mut rng, n, c);
        let f = |b: f64| -> f64 {
            o.as_slice().iter().zip(r.as_slice()).map(|(o, r)| (r - b * o).powi(2)).sum()
        };
        let (mut a, mut b) = (-100.0f64, 100.0f64);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c1 = b - phi * (b - a);
            let c2 = a + phi * (b - a);
            if f(c1) < f(c2) {
                b = c2;
            } else {
                a = c1;
            }
        }
        let golden = (a + b) / 2.0;
        let beta = fit_multiplier(&o, &r);
        if f(beta) > f(golden) + 1e-9 * f(golden).max(1.0) || (beta - golden).abs() > 1e-6 * (1.0 + golden.abs()) {
            return Err(format!("case {case}: beta {beta}, golden {golden}"));
        }
    }
    Ok(())
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) || (a - b).abs() <= 1e-8
}

/// Backpropagated gradients against central differences, `h = 1e-5`.
pub fn nn_gradient_matches_fd(nets: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let h = 1e-5;
    for case in 0..nets {
        let d = rng.random_range(1..=4);
        let classes = rng.random_range(2..=4);
        let net = random_net(&mut rng, d, classes);
        let data = random_dataset(&mut rng, 6, d, classes);
        let (_, grad) = net.loss_and_gradient(data.features(), data.labels()).map_err(|e| e.to_string())?;
        let params = net.flat_params();
        let mut probe = net.clone();
        for j in 0..params.len() {
            let mut p = params.clone();
            p[j] = params[j] + h;
            probe.set_flat_params(&p).unwrap();
            let up = probe.loss_and_gradient(data.features(), data.labels()).unwrap().0;
            p[j] = params[j] - h;
            probe.set_flat_params(&p).unwrap();
            let down = probe.loss_and_gradient(data.features(), data.labels()).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            if !close(fd, grad[j], 1e-4) {
                return Err(format!("case {case}, parameter {j}: analytic {} vs fd {fd}", grad[j]));
            }
        }
    }
    Ok(())
}

pub fn logistic_gradient_matches_fd(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let h = 1e-5;
    for case in 0..instances {
        let n = rng.random_range(2..=30);
        let p = rng.random_range(1..=5);
        let x = random_matrix(&mut rng, n, p);
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let w: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let b: f64 = rng.sample(StandardNormal);
        let (_, gw, gb) = logistic_loss_and_grad(&x, &y, &w, b);
        for j in 0..=p {
            let at = |delta: f64| {
                let mut w2 = w.clone();
                let mut b2 = b;
                if j < p {
                    w2[j] += delta;
                } else {
                    b2 += delta;
                }
                logistic_loss_and_grad(&x, &y, &w2, b2).0
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let analytic = if j < p { gw[j] } else { gb };
            if !close(fd, analytic, 1e-4) {
                return Err(format!("case {case}, coordinate {j}: analytic {analytic} vs fd {fd}"));
            }
        }
    }
    Ok(())
}

/// AUC against the share of correctly ordered positive-negative pairs.
pub fn roc_auc_matches_pairs(vectors: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for case in 0..vectors {
        let n = rng.random_range(2..=60);
        // Coarse scores so ties are common.
        let scores: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 10.0).floor() / 10.0).collect();
        let mut y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        y[0] = true;
        y[1] = false;
        let mut num = 0.0;
        let mut pairs = 0.0;
        for i in 0..n {
            for j in 0..n {
                if y[i] && !y[j] {
                    pairs += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        let auc = roc_auc(&scores, &y).map_err(|e| e.to_string())?;
        if (auc - num / pairs).abs() > 1e-12 {
            return Err(format!("case {case}: {auc} vs {}", num / pairs));
        }
    }
    Ok(())
}

/// Weights, trees and ensembles survive a JSON round trip with bitwise-equal outputs.
pub fn serialization_round_trips(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for case in 0..instances {
        let d = rng.random_range(1..=4);
        let classes = rng.random_range(2..=3);
        let net = random_net(&mut rng, d, classes);
        let data = random_dataset(&mut rng, 80, d, classes);
        let hp = random_hp(&mut rng, net.depth());
        let ens = DistillingEnsemble::fit(&net, &data, &hp, case % 2 == 1).map_err(|e| e.to_string())?;

        let net2 = FeedForwardNet::from_json(&net.to_json()).map_err(|e| e.to_string())?;
        let ens2 = DistillingEnsemble::from_json(&ens.to_json()).map_err(|e| e.to_string())?;
        let tree = &ens.trees()[ens.depth() - 1];
        let tree2: RegressionTree =
            serde_json::from_str(&serde_json::to_string(tree).unwrap()).map_err(|e| e.to_string())?;
        if ens2.to_json() != ens.to_json() || net2.to_json() != net.to_json() {
            return Err(format!("case {case}: re-serialization differs"));
        }
        let probe = random_matrix(&mut rng, 50, d);
        for row in probe.iter_rows() {
            let s1 = net.capture_stream(row).unwrap();
            let s2 = net2.capture_stream(row).unwrap();
            let same = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(u, v)| u.to_bits() == v.to_bits());
            if !same(s1.logits(), s2.logits()) {
                return Err(format!("case {case}: network output differs after reload"));
            }
            if !same(&ens.predict(&s1).unwrap(), &ens2.predict(&s1).unwrap()) {
                return Err(format!("case {case}: ensemble output differs after reload"));
            }
            let a = &s1.activations[ens.depth() - 1];
            if tree.leaf_index(a).unwrap() != tree2.leaf_index(a).unwrap()
                || !same(tree.predict(a).unwrap(), tree2.predict(a).unwrap())
            {
                return Err(format!("case {case}: tree output differs after reload"));
            }
        }
    }
    Ok(())
}

/// Every training object maps to a stream of the table it built.
pub fn training_objects_never_anomalous(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for case in 0..instances {
        let d = rng.random_range(1..=3);
        let net = random_net(&mut rng, d, 2);
        let data = random_dataset(&mut rng, 120, d, 2);
        let hp = random_hp(&mut rng, net.depth());
        let ens = DistillingEnsemble::fit(&net, &data, &hp, false).map_err(|e| e.to_string())?;
        let rc = ReliabilityConfig { alpha: 0.05, gamma: 0.05, ..ReliabilityConfig::default() };
        let an = build_stream_table(&ens, &net, &data, &rc).map_err(|e| e.to_string())?;
        for (i, o) in an.objects.iter().enumerate() {
            if an.table.assign_label(&o.stream) != Assignment::Label(o.label) {
                return Err(format!("case {case}: object {i} is anomalous"));
            }
        }
    }
    Ok(())
}
