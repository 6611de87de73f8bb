//! End-to-end run on the default four-component Gaussian mixture.

use std::time::Instant;

use leafstream::data::{adaptive_explain, AdaptiveConfig, MixtureConfig, MixtureSampler, RegionPredicate};
use leafstream::ensemble::{DistillingEnsemble, ErrorMetric};
use leafstream::inspect::{build_contrast_dataset, fit_logistic_inspector, roc_auc, ContrastSpec, LogisticConfig};
use leafstream::nn::{train, NetBuilder, TrainConfig};
use leafstream::streams::{build_stream_table, ReliabilityConfig};
use leafstream::nn::FeedForwardNet;
use leafstream::tree::TreeHyperParams;

fn mean_ce(net: &FeedForwardNet, ens: &DistillingEnsemble, pts: &[[f64; 2]]) -> f64 {
    pts.iter()
        .map(|p| ens.distillation_error(net, p, ErrorMetric::ProbCrossEntropy).unwrap())
        .sum::<f64>()
        / pts.len() as f64
}

fn main() {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().unwrap());
    let t = Instant::now();
    let mix = MixtureConfig { seed, ..MixtureConfig::default() };
    let data = mix.generate().unwrap();
    let mut b = NetBuilder::with_seed(2, seed);
    for _ in 0..5 {
        b = b.affine(2).prelu();
    }
    let cfg = TrainConfig { epochs: 1000, seed, ..TrainConfig::default() };
    let (net, report) = train(b.affine(2).layers(), &data, &cfg).unwrap();
    println!("accuracy {:.4} loss {:.4} ({:?})", report.final_accuracy, report.final_loss, t.elapsed());

    let depths = [0, 1, 1, 1, 2, 2];
    let hp: Vec<_> = depths.iter().map(|&d| TreeHyperParams::with_depth(d)).collect();
    let ens = DistillingEnsemble::fit(&net, &data, &hp, false).unwrap();
    let rc = ReliabilityConfig { alpha: 0.05, ..ReliabilityConfig::default() };
    let an = build_stream_table(&ens, &net, &data, &rc).unwrap();
    let agree = an.argmax_agreement(&net, &data).unwrap();
    let flagged: Vec<f64> = an.objects.iter().filter(|o| o.flagged).map(|o| o.error).collect();
    let clean: Vec<f64> = an.objects.iter().filter(|o| !o.flagged).map(|o| o.error).collect();
    println!(
        "agreement {agree:.4} streams {} flagged {} mean ce flagged {:.4} clean {:.4}",
        an.table.len(),
        flagged.len(),
        flagged.iter().sum::<f64>() / flagged.len() as f64,
        clean.iter().sum::<f64>() / clean.len() as f64
    );
    for e in an.table.entries().iter().filter(|e| e.population >= 100) {
        println!("  stream {} {} pop {} reliable {}", e.label, e.leaf_indices, e.population, e.reliable);
    }

    let sd = 0.8f64.sqrt();
    let mut strip = Vec::new();
    let mut dense = Vec::new();
    for i in 0..=200 {
        for j in 0..=200 {
            let p = [-5.0 + 0.05 * i as f64, -5.0 + 0.05 * j as f64];
            if p[0].abs() < 0.5 {
                strip.push(p);
            }
            if mix.components.iter().any(|c| {
                let d = ((p[0] - c.mean[0]).powi(2) + (p[1] - c.mean[1]).powi(2)).sqrt();
                d <= sd
            }) {
                dense.push(p);
            }
        }
    }
    let strip_ce = mean_ce(&net, &ens, &strip);
    println!("strip ce {strip_ce:.4} dense ce {:.4}", mean_ce(&net, &ens, &dense));

    let region = RegionPredicate::strip(0, -0.5, 0.5);
    let mut sampler = MixtureSampler::new(&mix, seed + 1).unwrap();
    let acfg = AdaptiveConfig { samples_per_round: 7500, hp: hp.clone(), use_multipliers: false, reliability: rc };
    let rounds = adaptive_explain(&net, &mut sampler, &[region], &acfg).unwrap();
    let refit = mean_ce(&net, &rounds[0].ensemble, &strip);
    println!("refit strip ce {refit:.4} reduction {:.3}", 1.0 - refit / strip_ce);

    for label in an.table.labels_by_population().into_iter().take(2) {
        let c = build_contrast_dataset(&an, label, &ContrastSpec::OneVsAll, data.features()).unwrap();
        let m = fit_logistic_inspector(&c.x, &c.y, &LogisticConfig::default()).unwrap();
        let auc = roc_auc(&m.decision_batch(&c.x), &c.y).unwrap();
        println!("stream {label} auc {auc:.4} weights {:?}", m.weights);
    }
    println!("total {:?}", t.elapsed());
}
