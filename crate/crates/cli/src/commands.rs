use std::fs;
use std::path::{Path, PathBuf};

use leafstream::data::{
    adaptive_explain, load_csv, load_features, transform_space, AdaptiveConfig, Dataset, FeatureTransform,
    IdentityTransform, MixtureSampler, PolarTransform, PoolSampler, QuantileBinning, RegionSampler,
};
use leafstream::ensemble::{distillation_error, DistillingEnsemble, ErrorMetric};
use leafstream::inspect::{
    build_contrast_dataset, feature_average, fit_logistic_inspector, fit_tree_inspector, tree_inspector_dataset,
    ContrastDataset, ExcludedCounts, InspectError, InspectorBody, InspectorReport, LogisticConfig,
    TrainingSetSizes,
};
use leafstream::nn::{argmax, train, FeedForwardNet, TrainConfig};
use leafstream::persist;
use leafstream::streams::{build_stream_table, discretize, Assignment, ReliabilityState, StreamAnalysis, StreamTable};
use leafstream::tree::TreeHyperParams;
use leafstream::Matrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{DataSection, InspectorKind, RunConfig, TransformEntry};
use crate::error::CliError;
use crate::plot;

pub type CmdResult = Result<(), CliError>;

pub fn load_data(cfg: &RunConfig) -> Result<Dataset, CliError> {
    match &cfg.data {
        DataSection::Mixture { mixture } => {
            let m = leafstream::data::MixtureConfig {
                seed: cfg.seed,
                ..mixture.clone()
            };
            Ok(m.generate()?)
        }
        DataSection::Csv { path, schema } => {
            if !path.exists() {
                return Err(CliError::usage(format!("dataset {} does not exist", path.display())));
            }
            Ok(load_csv(path, schema)?)
        }
    }
}

fn load_net(cfg: &RunConfig) -> Result<FeedForwardNet, CliError> {
    let path = cfg.weights_path();
    if !path.exists() {
        return Err(CliError::usage(format!(
            "weights {} not found; run `leafstream train` first",
            path.display()
        )));
    }
    Ok(FeedForwardNet::load_weights(&path)?)
}

fn load_ensemble(cfg: &RunConfig, net: &FeedForwardNet) -> Result<DistillingEnsemble, CliError> {
    let path = cfg.ensemble_path();
    if !path.exists() {
        return Err(CliError::usage(format!(
            "ensemble {} not found; run `leafstream distill` first",
            path.display()
        )));
    }
    let ens = DistillingEnsemble::load(&path)?;
    if ens.depth() != net.depth() {
        return Err(CliError::usage(format!(
            "ensemble has {} trees but the network has {} layers",
            ens.depth(),
            net.depth()
        )));
    }
    Ok(ens)
}

fn check_classes(net: &FeedForwardNet, data: &Dataset) -> CmdResult {
    if net.input_dim() != data.num_features() {
        return Err(CliError::usage(format!(
            "network expects {} features, dataset has {}",
            net.input_dim(),
            data.num_features()
        )));
    }
    if data.num_classes() > net.num_classes() {
        return Err(CliError::usage(format!(
            "dataset has {} classes, network outputs {}",
            data.num_classes(),
            net.num_classes()
        )));
    }
    Ok(())
}

fn hyper_params(cfg: &RunConfig, net: &FeedForwardNet) -> Result<Vec<TreeHyperParams>, CliError> {
    let hp = cfg.distill.hyper_params();
    if hp.len() != net.depth() {
        return Err(CliError::usage(format!(
            "distill config has {} tree settings but the network has M = {} layers",
            hp.len(),
            net.depth()
        )));
    }
    Ok(hp)
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", cfg.out.display())))?;
    Ok(&cfg.out)
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> CmdResult {
    persist::write_file(&path, &persist::to_json(value))?;
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, epochs: Option<usize>) -> CmdResult {
    let data = load_data(cfg)?;
    let layers = cfg.network.build(data.num_features(), cfg.seed);
    let tc = TrainConfig {
        seed: cfg.seed,
        epochs: epochs.unwrap_or(cfg.train.epochs),
        ..cfg.train.clone()
    };
    let (net, report) = train(layers, &data, &tc)?;
    let out = out_dir(cfg)?;
    net.save_weights(out.join("weights.json"))?;
    write_json(out.join("train_report.json"), &report)?;
    println!(
        "trained {} epochs on {} objects: accuracy {:.4}, loss {:.4}",
        tc.epochs,
        data.len(),
        report.final_accuracy,
        report.final_loss
    );
    println!("wrote {}", out.join("weights.json").display());
    Ok(())
}

#[derive(Serialize)]
struct DistillSummary {
    streams: usize,
    max_streams: usize,
    argmax_agreement: f64,
    flagged: usize,
    error_threshold: Option<f64>,
    mean_error: f64,
    min_population: usize,
    unreliable_streams: usize,
    population_entropy: f64,
}

pub fn cmd_distill(cfg: &RunConfig) -> CmdResult {
    let data = load_data(cfg)?;
    let net = load_net(cfg)?;
    check_classes(&net, &data)?;
    let hp = hyper_params(cfg, &net)?;
    let ens = DistillingEnsemble::fit(&net, &data, &hp, cfg.distill.use_multipliers)?;
    let an = build_stream_table(&ens, &net, &data, &cfg.reliability)?;
    let out = out_dir(cfg)?;
    ens.save(out.join("ensemble.json"))?;
    persist::write_file(out.join("streams.json"), &an.table.to_json())?;
    write_json(out.join("reliability.json"), an.table.state())?;
    an.write_objects_csv(out.join("objects.csv"))?;
    let summary = DistillSummary {
        streams: an.table.len(),
        max_streams: ens.max_streams(),
        argmax_agreement: an.argmax_agreement(&net, &data)?,
        flagged: an.flagged_count(),
        error_threshold: an.table.state().error_threshold,
        mean_error: an.objects.iter().map(|o| o.error).sum::<f64>() / an.objects.len() as f64,
        min_population: an.table.state().min_population,
        unreliable_streams: an.table.entries().iter().filter(|e| !e.reliable).count(),
        population_entropy: an.table.population_entropy(),
    };
    write_json(out.join("fidelity.json"), &summary)?;
    println!("streams U = {} (bound {})", summary.streams, summary.max_streams);
    println!("argmax agreement {:.4}", summary.argmax_agreement);
    println!(
        "alpha-flagged objects {} (threshold {})",
        summary.flagged,
        summary.error_threshold.map_or("none".into(), |t| format!("{t:.6}"))
    );
    println!(
        "unreliable streams {} (min population {})",
        summary.unreliable_streams, summary.min_population
    );
    for e in an.table.entries() {
        println!(
            "  stream {:>3} {} population {:>5}{}",
            e.label,
            e.leaf_indices,
            e.population,
            if e.reliable { "" } else { "  unreliable" }
        );
    }
    Ok(())
}

/// Features handed to inspectors, row-aligned with the training data.
fn inspector_features(cfg: &RunConfig, data: &Dataset) -> Result<Dataset, CliError> {
    let t: Box<dyn FeatureTransform> = match cfg.inspect.transform {
        TransformEntry::Identity => Box::new(IdentityTransform),
        TransformEntry::Polar => Box::new(PolarTransform),
        TransformEntry::QuantileBins(b) => Box::new(QuantileBinning::fit(data.features(), b)?),
    };
    Ok(transform_space(data, t.as_ref())?)
}

fn analyse(cfg: &RunConfig) -> Result<(Dataset, FeedForwardNet, DistillingEnsemble, StreamAnalysis), CliError> {
    let data = load_data(cfg)?;
    let net = load_net(cfg)?;
    check_classes(&net, &data)?;
    let ens = load_ensemble(cfg, &net)?;
    let an = build_stream_table(&ens, &net, &data, &cfg.reliability)?;
    Ok((data, net, ens, an))
}

/// Splits a contrast set into fit and evaluation parts, stratified by class.
fn holdout_split(c: &ContrastDataset, fraction: f64, seed: u64) -> (ContrastDataset, Matrix, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fit_rows = Vec::new();
    let mut eval_rows = Vec::new();
    for class in [true, false] {
        let mut rows: Vec<usize> = (0..c.y.len()).filter(|&i| c.y[i] == class).collect();
        rows.shuffle(&mut rng);
        let k = ((rows.len() as f64 * fraction).round() as usize).clamp(1, rows.len().saturating_sub(1).max(1));
        eval_rows.extend_from_slice(&rows[..k]);
        fit_rows.extend_from_slice(&rows[k..]);
    }
    fit_rows.sort_unstable();
    eval_rows.sort_unstable();
    let fit = ContrastDataset {
        x: c.x.select_rows(&fit_rows),
        y: fit_rows.iter().map(|&i| c.y[i]).collect(),
        object_ids: fit_rows.iter().map(|&i| c.object_ids[i]).collect(),
        sizes: TrainingSetSizes {
            positives: fit_rows.iter().filter(|&&i| c.y[i]).count(),
            negatives: fit_rows.iter().filter(|&&i| !c.y[i]).count(),
        },
        excluded: c.excluded,
    };
    (fit, c.x.select_rows(&eval_rows), eval_rows.iter().map(|&i| c.y[i]).collect())
}

pub fn cmd_inspect(
    cfg: &RunConfig,
    labels: &[usize],
    top: Option<usize>,
    kind: Option<InspectorKind>,
) -> CmdResult {
    let (data, _, _, an) = analyse(cfg)?;
    let feats = inspector_features(cfg, &data)?;
    let names = feats.feature_names().to_vec();
    let kind = kind.unwrap_or(cfg.inspect.kind);
    let out = out_dir(cfg)?.to_path_buf();

    if kind == InspectorKind::Tree {
        let (x, y, ids) = tree_inspector_dataset(&an, feats.features())?;
        let hp = TreeHyperParams::with_depth(cfg.inspect.tree_depth);
        let tree = fit_tree_inspector(&x, &y, &hp)?;
        let rules = tree.rules();
        let described: Vec<String> = rules.iter().map(|r| r.describe(&names)).collect();
        let correct = (0..x.rows()).filter(|&i| tree.predict(x.row(i)).ok() == Some(y[i])).count();
        let report = InspectorReport {
            stream_label: None,
            body: InspectorBody::Tree { rules, described: described.clone() },
            auc: None,
            holdout: false,
            training_set_sizes: TrainingSetSizes { positives: ids.len(), negatives: 0 },
            excluded_counts: ExcludedCounts {
                flagged_positives: an.flagged_count(),
                ..ExcludedCounts::default()
            },
        };
        persist::write_file(out.join("inspector_tree.json"), &report.to_json())?;
        println!(
            "tree inspector over {} objects, training accuracy {:.4}",
            ids.len(),
            correct as f64 / ids.len() as f64
        );
        for d in described {
            println!("  {d}");
        }
        return Ok(());
    }

    let mut targets: Vec<usize> = labels.to_vec();
    if let Some(k) = top {
        let reliable = an
            .table
            .labels_by_population()
            .into_iter()
            .filter(|&l| an.table.entry(l).is_some_and(|e| e.reliable));
        targets.extend(reliable.take(k));
    }
    if targets.is_empty() {
        return Err(CliError::usage("give at least one --label or --top"));
    }
    let mut refusal = None;
    for label in targets {
        let result = match kind {
            InspectorKind::Logistic => inspect_logistic(cfg, &an, label, &feats, &names),
            InspectorKind::Average => inspect_average(&an, label, &feats, &names),
            InspectorKind::Tree => unreachable!("handled above"),
        };
        match result {
            Ok(report) => {
                persist::write_file(out.join(format!("inspector_{label}.json")), &report.to_json())?;
            }
            Err(e @ CliError::Refusal(_)) => {
                eprintln!("stream {label}: {e}");
                refusal.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    refusal.map_or(Ok(()), Err)
}

fn inspect_logistic(
    cfg: &RunConfig,
    an: &StreamAnalysis,
    label: usize,
    feats: &Dataset,
    names: &[String],
) -> Result<InspectorReport, CliError> {
    let contrast = build_contrast_dataset(an, label, &cfg.inspect.contrast, feats.features())?;
    let lc = LogisticConfig {
        l1_strength: cfg.inspect.l1_strength,
        ..LogisticConfig::default()
    };
    let f = cfg.inspect.holdout_fraction;
    if !(0.0..1.0).contains(&f) {
        return Err(CliError::usage(format!("holdout_fraction {f} outside [0, 1)")));
    }
    let report = if f > 0.0 {
        let (fit, ex, ey) = holdout_split(&contrast, f, cfg.seed);
        let model = fit_logistic_inspector(&fit.x, &fit.y, &lc)?;
        InspectorReport::logistic(label, &model, &fit, names, cfg.inspect.top_k, Some((&ex, &ey)))?
    } else {
        let model = fit_logistic_inspector(&contrast.x, &contrast.y, &lc)?;
        InspectorReport::logistic(label, &model, &contrast, names, cfg.inspect.top_k, None)?
    };
    println!(
        "stream {label}: ROC AUC {:.4} ({}) on {} positives / {} negatives",
        report.auc.unwrap_or(f64::NAN),
        if report.holdout { "holdout" } else { "in-sample" },
        report.training_set_sizes.positives,
        report.training_set_sizes.negatives
    );
    if let InspectorBody::Logistic { coefficients, .. } = &report.body {
        for c in coefficients {
            println!("  {:<24} {:+.6}", c.name, c.coefficient);
        }
    }
    Ok(report)
}

fn inspect_average(
    an: &StreamAnalysis,
    label: usize,
    feats: &Dataset,
    names: &[String],
) -> Result<InspectorReport, CliError> {
    let entry = an.table.entry(label).ok_or(InspectError::UnknownLabel(label))?;
    if !entry.reliable {
        return Err(InspectError::Unreliable {
            label,
            population: entry.population,
            min_population: an.table.state().min_population,
        }
        .into());
    }
    let members = an.members(label);
    let kept: Vec<usize> = members.iter().copied().filter(|&i| !an.objects[i].flagged).collect();
    if kept.is_empty() {
        return Err(InspectError::NoPositives { label }.into());
    }
    let mean = feature_average(&feats.features().select_rows(&kept))?;
    println!("stream {label}: average of {} objects", kept.len());
    for (n, v) in names.iter().zip(&mean) {
        println!("  {n:<24} {v:.6}");
    }
    Ok(InspectorReport {
        stream_label: Some(label),
        body: InspectorBody::Average {
            names: names.to_vec(),
            mean,
        },
        auc: None,
        holdout: false,
        training_set_sizes: TrainingSetSizes {
            positives: kept.len(),
            negatives: 0,
        },
        excluded_counts: ExcludedCounts {
            flagged_positives: members.len() - kept.len(),
            ..ExcludedCounts::default()
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Interpretable,
    UnseenStream,
    UnreliableStream,
    HighError,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Interpretable => "interpretable",
            Verdict::UnseenStream => "interpretation withheld: unseen stream",
            Verdict::UnreliableStream => "interpretation withheld: unreliable stream",
            Verdict::HighError => "interpretation withheld: high distillation error",
        }
    }
}

pub fn verdict(table: &StreamTable, assignment: Assignment, error: f64) -> Verdict {
    match assignment {
        Assignment::Anomaly => Verdict::UnseenStream,
        Assignment::Label(l) if !table.entry(l).is_some_and(|e| e.reliable) => Verdict::UnreliableStream,
        _ if table.state().error_threshold.is_some_and(|t| error >= t) => Verdict::HighError,
        _ => Verdict::Interpretable,
    }
}

fn load_table(cfg: &RunConfig) -> Result<StreamTable, CliError> {
    let streams = cfg.out.join("streams.json");
    let state = cfg.out.join("reliability.json");
    if !streams.exists() || !state.exists() {
        return Err(CliError::usage(format!(
            "{} and {} are required; run `leafstream distill` first",
            streams.display(),
            state.display()
        )));
    }
    let state: ReliabilityState = serde_json::from_str(&persist::read_file(&state)?)
        .map_err(|e| CliError::usage(format!("reliability.json: {e}")))?;
    Ok(StreamTable::from_json(&persist::read_file(&streams)?, state)?)
}

pub fn cmd_classify(cfg: &RunConfig, input: &Path) -> CmdResult {
    let data = load_data(cfg)?;
    let net = load_net(cfg)?;
    check_classes(&net, &data)?;
    let ens = load_ensemble(cfg, &net)?;
    let table = load_table(cfg)?;
    let x = load_features(input, data.feature_names())?;
    let metric = table.state().metric;
    let out = out_dir(cfg)?;
    let mut csv = String::from("object_id,label_or_anomaly,distillation_error,predicted_class,verdict\n");
    let mut counts = [0usize; 4];
    for (i, row) in x.iter_rows().enumerate() {
        let stream = net.capture_stream(row)?;
        let ds = discretize(&ens, &stream)?;
        let err = distillation_error(stream.logits(), &ens.predict_leaves(&ds.0)?, metric);
        let a = table.assign_label(&ds);
        let v = verdict(&table, a, err);
        counts[v as usize] += 1;
        let class = argmax(stream.logits());
        let class_name = data.class_names().get(class).cloned().unwrap_or_else(|| class.to_string());
        csv.push_str(&format!("{i},{a},{err:?},{class_name},{}\n", v.as_str()));
    }
    persist::write_file(out.join("classified.csv"), &csv)?;
    println!("classified {} objects", x.rows());
    for v in [Verdict::Interpretable, Verdict::UnseenStream, Verdict::UnreliableStream, Verdict::HighError] {
        println!("  {:<50} {}", v.as_str(), counts[v as usize]);
    }
    Ok(())
}

pub fn cmd_plot(cfg: &RunConfig) -> CmdResult {
    let (data, net, ens, an) = analyse(cfg)?;
    if data.num_features() != 2 {
        return Err(CliError::usage(format!(
            "plot supports 2-D inputs only, dataset has {} features",
            data.num_features()
        )));
    }
    let out = out_dir(cfg)?;
    let view = plot::View::fit(data.features());
    let files = [
        ("heatmap.svg", plot::heatmap(&net, &data, &view, &cfg.plot)?),
        ("streams.svg", plot::stream_scatter(&data, &an, &view, &cfg.plot)),
        ("profile.svg", plot::profile(&net, &ens, &an, &view, &cfg.plot)?),
    ];
    for (name, svg) in files {
        persist::write_file(out.join(name), &svg)?;
        println!("wrote {}", out.join(name).display());
    }
    Ok(())
}

fn mean_error(net: &FeedForwardNet, ens: &DistillingEnsemble, x: &Matrix) -> Result<f64, CliError> {
    let mut total = 0.0;
    for row in x.iter_rows() {
        total += ens.distillation_error(net, row, ErrorMetric::ProbCrossEntropy)?;
    }
    Ok(total / x.rows().max(1) as f64)
}

pub fn cmd_adaptive(cfg: &RunConfig) -> CmdResult {
    let data = load_data(cfg)?;
    let net = load_net(cfg)?;
    check_classes(&net, &data)?;
    let hp = hyper_params(cfg, &net)?;
    let global = cfg.ensemble_path().exists().then(|| load_ensemble(cfg, &net)).transpose()?;
    let mut sampler: Box<dyn RegionSampler> = match &cfg.data {
        DataSection::Mixture { mixture } => Box::new(MixtureSampler::new(mixture, cfg.seed.wrapping_add(1))?),
        DataSection::Csv { .. } => Box::new(PoolSampler::new(data.features().clone(), cfg.seed)),
    };
    let acfg = AdaptiveConfig {
        samples_per_round: cfg.adaptive.samples_per_round,
        hp,
        use_multipliers: cfg.distill.use_multipliers,
        reliability: cfg.reliability,
    };
    let rounds = adaptive_explain(&net, sampler.as_mut(), &cfg.adaptive.regions, &acfg)?;
    let out = out_dir(cfg)?;
    for (k, r) in rounds.iter().enumerate() {
        let dir = out.join("adaptive").join(format!("round_{}", k + 1));
        fs::create_dir_all(&dir)?;
        r.ensemble.save(dir.join("ensemble.json"))?;
        persist::write_file(dir.join("streams.json"), &r.analysis.table.to_json())?;
        write_json(dir.join("reliability.json"), r.analysis.table.state())?;
        r.analysis.write_objects_csv(dir.join("objects.csv"))?;
        let refit = mean_error(&net, &r.ensemble, r.data.features())?;
        print!(
            "round {}: {} objects, {} streams, mean cross-entropy {:.4}",
            k + 1,
            r.data.len(),
            r.analysis.table.len(),
            refit
        );
        match &global {
            Some(g) => println!(" (global ensemble {:.4})", mean_error(&net, g, r.data.features())?),
            None => println!(),
        }
    }
    Ok(())
}
