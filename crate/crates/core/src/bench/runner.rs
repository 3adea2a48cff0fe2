//! Benchmark execution: dataset loading, model acquisition, node
//! selection, and the evaluation sweep itself.
//!
//! The run is a cross product over seeds, explainers, and selected
//! nodes; each (seed, explainer, node) task yields one record per
//! (focus, k, mask nature) cell. Tasks are evaluated in parallel but
//! records land in canonical task order, so finished runs are
//! byte-identical regardless of worker count. Interrupted runs resume:
//! existing records are kept, only tasks with missing cells recompute,
//! and the final record set matches an uninterrupted run.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::bench::config::{DatasetSource, ExperimentConfig, ModelSource, NodePolicy};
use crate::bench::records::{EvalRecord, RECORDS_FILE, RECORDS_HEADER, SKIPS_FILE};
use crate::bundle::load_bundle;
use crate::error::{Error, Result};
use crate::explain::Explanation;
use crate::gcn::{
    load_checkpoint, predict_graph, predict_target, predict_target_with, train, GcnModel,
};
use crate::graph::{k_hop_subgraph, Graph, Split};
use crate::mask::{apply_mask, complement, harden, transform};
use crate::metrics::{
    characterization, fidelity, groundtruth_accuracy, mask_properties, FidForm, FidKind, Focus,
    MaskNature, NodeOutcome,
};
use crate::rng;
use crate::synthetic::{generate, groundtruth_edges, named_spec, GroundTruth};

const TAG_SELECT: u64 = 0xB5;
const CHUNK: usize = 16;

pub const SKIPS_HEADER: &str = "dataset,explainer,seed,node,error";

/// A dataset resolved from its source, with optional ground truth.
pub struct LoadedDataset {
    pub name: String,
    pub graph: Graph,
    pub groundtruth: Option<GroundTruth>,
}

pub fn load_dataset(src: &DatasetSource) -> Result<LoadedDataset> {
    match src {
        DatasetSource::Named { name } => {
            let spec = named_spec(name)?;
            let (graph, gt) = generate(&spec)?;
            Ok(LoadedDataset {
                name: src.label(),
                graph,
                groundtruth: Some(gt),
            })
        }
        DatasetSource::Bundle { path } => {
            let (graph, gt) = load_bundle(path)?;
            Ok(LoadedDataset {
                name: src.label(),
                graph,
                groundtruth: gt,
            })
        }
    }
}

/// Picks the nodes to explain under a policy, deterministically per seed.
///
/// The pool is the test split filtered by the policy; when it holds more
/// than `n` nodes a seeded partial shuffle keeps exactly `n`. The result
/// is sorted ascending. A pool smaller than `n` is kept whole with a
/// warning; an empty pool is an error.
pub fn select_nodes(
    g: &Graph,
    predicted: &[usize],
    gt: Option<&GroundTruth>,
    policy: &NodePolicy,
    n: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if predicted.len() != g.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} nodes",
            predicted.len(),
            g.num_nodes()
        )));
    }
    if matches!(policy, NodePolicy::MotifOnly) && gt.is_none() {
        return Err(Error::Config(
            "motif_only node policy needs a dataset with ground truth".into(),
        ));
    }
    let labels = g.labels();
    let mut pool: Vec<usize> = g
        .split_nodes(Split::Test)
        .into_iter()
        .filter(|&v| match *policy {
            NodePolicy::TestSplit => true,
            NodePolicy::MotifOnly => gt.expect("checked above").motif_of(v).is_some(),
            NodePolicy::LabelFilter { class } => labels[v] == class,
            NodePolicy::CorrectOnly => predicted[v] == labels[v],
            NodePolicy::WrongOnly => predicted[v] != labels[v],
        })
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptySelection(format!(
            "node policy {} matches no test node",
            policy.label()
        )));
    }
    if pool.len() <= n {
        if pool.len() < n {
            log::warn!(
                "node policy {} yields only {} of {n} requested nodes",
                policy.label(),
                pool.len()
            );
        }
        return Ok(pool);
    }
    let mut rng = rng::stream(seed, TAG_SELECT);
    for i in 0..n {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(n);
    pool.sort_unstable();
    Ok(pool)
}

/// Models keyed by evaluation seed. A checkpoint or a fixed-seed recipe
/// shares one model across seeds.
pub fn build_models(
    cfg: &ExperimentConfig,
    g: &Graph,
) -> Result<BTreeMap<u64, Arc<GcnModel>>> {
    let mut out = BTreeMap::new();
    match &cfg.model {
        ModelSource::Checkpoint { path } => {
            let model = Arc::new(load_checkpoint(path)?);
            for &seed in &cfg.seeds {
                out.insert(seed, Arc::clone(&model));
            }
        }
        ModelSource::Train { recipe } => {
            let shape = recipe.shape(g.feature_dim(), g.num_classes());
            let mut by_train_seed: BTreeMap<u64, Arc<GcnModel>> = BTreeMap::new();
            for &seed in &cfg.seeds {
                let tc = recipe.train_config(seed);
                let model = match by_train_seed.get(&tc.seed) {
                    Some(m) => Arc::clone(m),
                    None => {
                        let outcome = train(g, &shape, &tc)?;
                        log::info!(
                            "trained model for seed {seed}: test accuracy {:.4}",
                            outcome.report.accuracy
                        );
                        let m = Arc::new(outcome.model);
                        by_train_seed.insert(tc.seed, Arc::clone(&m));
                        m
                    }
                };
                out.insert(seed, model);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct Task {
    seed: u64,
    explainer: usize,
    node: usize,
}

struct TaskSkip {
    task: Task,
    error: String,
}

/// Summary of one `run` invocation.
#[derive(Debug)]
pub struct RunArtifacts {
    pub records_path: PathBuf,
    pub skips_path: Option<PathBuf>,
    /// Records already present before this invocation.
    pub resumed_records: usize,
    /// Records appended by this invocation.
    pub new_records: usize,
    /// Tasks abandoned because their explainer failed.
    pub skipped_tasks: usize,
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for c in 1..p.len() {
        if p[c] > p[best] {
            best = c;
        }
    }
    best
}

fn focus_label(focus: Focus, true_label: usize, predicted: usize) -> usize {
    match focus {
        Focus::Phenomenon => true_label,
        Focus::Model => predicted,
    }
}

/// Evaluates one (seed, explainer, node) task into its records, in
/// canonical (focus, k, nature) order.
#[allow(clippy::too_many_arguments)]
fn eval_task(
    cfg: &ExperimentConfig,
    dataset: &str,
    g: &Graph,
    gt: Option<&GroundTruth>,
    model: &GcnModel,
    predicted: &[usize],
    sweep: &[usize],
    task: Task,
) -> Result<Vec<EvalRecord>> {
    let spec = &cfg.explainers[task.explainer];
    let node = task.node;
    let y = g.labels()[node];
    let yhat = predicted[node];
    let cg = k_hop_subgraph(g, node, model.num_layers())?;
    let base_weights = cg.subgraph.effective_weights();
    let prob_full = predict_target(model, &cg, &base_weights)?.to_vec();

    // One explanation per distinct requested label; both focuses reuse it
    // when the prediction matches the true label.
    let mut explanations: BTreeMap<usize, Explanation> = BTreeMap::new();
    for &focus in &cfg.focus {
        let label = focus_label(focus, y, yhat);
        if let std::collections::btree_map::Entry::Vacant(slot) = explanations.entry(label) {
            slot.insert(spec.explain(model, &cg, node, label, focus, task.seed)?);
        }
    }

    let gt_pairs: Option<Vec<(usize, usize)>> = match gt {
        Some(gt) if gt.motif_of(node).is_some() => {
            let ids = groundtruth_edges(gt, g, node)?;
            Some(ids.iter().map(|&e| g.edges()[e]).collect())
        }
        _ => None,
    };

    let strategy_label = cfg.strategy.label();
    let mut rows = Vec::with_capacity(cfg.focus.len() * sweep.len() * cfg.mask_nature.len());
    for &focus in &cfg.focus {
        let expl = &explanations[&focus_label(focus, y, yhat)];
        for &k in sweep {
            let strat = cfg.strategy.with_k(k.max(1));
            let transformed = transform(&expl.edge_mask.values, &expl.edges, &strat)?;
            for &nature in &cfg.mask_nature {
                let vals = match nature {
                    MaskNature::Hard => harden(&transformed),
                    MaskNature::Soft => transformed.clone(),
                };
                let (w_masked, x_masked) = apply_mask(&cg, &vals, expl.feature_mask.as_ref())?;
                let prob_masked = predict_target_with(model, &cg, &w_masked, &x_masked)?.to_vec();
                // The complement removes explanation edges but keeps the
                // features intact: it asks what the rest of the graph
                // still predicts, not what masked features would.
                let comp_vals = complement(&vals);
                let (w_comp, _) = apply_mask(&cg, &comp_vals, None)?;
                let prob_complement = predict_target(model, &cg, &w_comp)?.to_vec();
                let outcome = NodeOutcome {
                    node,
                    true_label: y,
                    pred_full: yhat,
                    prob_full: prob_full.clone(),
                    pred_masked: argmax(&prob_masked),
                    prob_masked,
                    pred_complement: argmax(&prob_complement),
                    prob_complement,
                };
                let one = [outcome];
                let fid_plus_acc = fidelity(&one, FidKind::Plus, FidForm::Acc, focus)?;
                let fid_minus_acc = fidelity(&one, FidKind::Minus, FidForm::Acc, focus)?;
                let fid_plus_prob = fidelity(&one, FidKind::Plus, FidForm::Prob, focus)?;
                let fid_minus_prob = fidelity(&one, FidKind::Minus, FidForm::Prob, focus)?;
                let charact =
                    characterization(fid_plus_acc, fid_minus_acc, cfg.weights.0, cfg.weights.1)?;
                let props = mask_properties(&vals, &expl.edges);
                let gt_f1 = match &gt_pairs {
                    Some(gtp) => {
                        let support: Vec<(usize, usize)> = expl
                            .edges
                            .iter()
                            .zip(&vals)
                            .filter(|(_, &v)| v > 0.0)
                            .map(|(&pair, _)| pair)
                            .collect();
                        Some(groundtruth_accuracy(&support, gtp)?.2)
                    }
                    None => None,
                };
                rows.push(EvalRecord {
                    dataset: dataset.to_string(),
                    explainer: spec.name.clone(),
                    seed: task.seed,
                    focus,
                    mask_nature: nature,
                    strategy: strategy_label.clone(),
                    k,
                    node,
                    fid_plus_acc,
                    fid_minus_acc,
                    fid_plus_prob,
                    fid_minus_prob,
                    charact,
                    gt_f1,
                    time_ms: expl.time_ms,
                    mask_size: props.size,
                    mask_entropy: props.entropy,
                    mask_max: props.max_value,
                    cc_ratio: props.cc_ratio,
                });
            }
        }
    }
    Ok(rows)
}

fn expected_keys(
    cfg: &ExperimentConfig,
    dataset: &str,
    strategy_label: &str,
    sweep: &[usize],
    task: Task,
) -> Vec<String> {
    let name = &cfg.explainers[task.explainer].name;
    let mut keys = Vec::with_capacity(cfg.focus.len() * sweep.len() * cfg.mask_nature.len());
    for focus in &cfg.focus {
        for &k in sweep {
            for nature in &cfg.mask_nature {
                keys.push(format!(
                    "{dataset}|{name}|{}|{}|{}|{strategy_label}|{k}|{}",
                    task.seed,
                    focus.as_str(),
                    nature.as_str(),
                    task.node
                ));
            }
        }
    }
    keys
}

fn skip_key(dataset: &str, name: &str, task: Task) -> String {
    format!("{dataset}|{name}|{}|{}", task.seed, task.node)
}

/// Executes (or resumes) an experiment, streaming records to
/// `out_dir/records.csv`. Explainer failures skip their task, land in
/// `out_dir/skips.csv`, and never abort the sweep.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let ds = load_dataset(&cfg.dataset)?;
    let models = build_models(cfg, &ds.graph)?;
    let mut predictions: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (&seed, model) in &models {
        predictions.insert(seed, predict_graph(model, &ds.graph)?.labels);
    }
    let mut nodes_by_seed: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for &seed in &cfg.seeds {
        nodes_by_seed.insert(
            seed,
            select_nodes(
                &ds.graph,
                &predictions[&seed],
                ds.groundtruth.as_ref(),
                &cfg.node_policy,
                cfg.num_nodes,
                seed,
            )?,
        );
    }

    let sweep = cfg.sweep();
    let strategy_label = cfg.strategy.label();
    let records_path = out_dir.join(RECORDS_FILE);
    let skips_path = out_dir.join(SKIPS_FILE);

    let mut existing: BTreeSet<String> = BTreeSet::new();
    let mut resumed_records = 0usize;
    if records_path.exists() {
        let old = crate::bench::records::read_records(&records_path)?;
        resumed_records = old.len();
        for r in &old {
            existing.insert(r.key());
        }
        if resumed_records > 0 {
            log::info!("resuming: {resumed_records} records already present");
        }
    } else {
        std::fs::write(&records_path, format!("{RECORDS_HEADER}\n"))?;
    }
    let mut existing_skips: BTreeSet<String> = BTreeSet::new();
    if skips_path.exists() {
        let text = std::fs::read_to_string(&skips_path)?;
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() >= 4 {
                existing_skips.insert(format!("{}|{}|{}|{}", f[0], f[1], f[2], f[3]));
            }
        }
    }

    let mut tasks: Vec<Task> = Vec::new();
    for &seed in &cfg.seeds {
        for explainer in 0..cfg.explainers.len() {
            for &node in &nodes_by_seed[&seed] {
                tasks.push(Task {
                    seed,
                    explainer,
                    node,
                });
            }
        }
    }
    let pending: Vec<Task> = tasks
        .into_iter()
        .filter(|&t| {
            expected_keys(cfg, &ds.name, &strategy_label, &sweep, t)
                .iter()
                .any(|k| !existing.contains(k))
        })
        .collect();

    let mut out = std::fs::OpenOptions::new().append(true).open(&records_path)?;
    let mut new_records = 0usize;
    let mut skips: Vec<TaskSkip> = Vec::new();

    for chunk in pending.chunks(CHUNK) {
        let outputs: Vec<(Task, Result<Vec<EvalRecord>>)> = chunk
            .par_iter()
            .map(|&t| {
                let model = &models[&t.seed];
                let result = eval_task(
                    cfg,
                    &ds.name,
                    &ds.graph,
                    ds.groundtruth.as_ref(),
                    model,
                    &predictions[&t.seed],
                    &sweep,
                    t,
                );
                (t, result)
            })
            .collect();
        for (t, result) in outputs {
            match result {
                Ok(rows) => {
                    for r in rows {
                        if existing.insert(r.key()) {
                            writeln!(out, "{}", r.csv_line())?;
                            new_records += 1;
                        }
                    }
                }
                Err(e) => {
                    let name = &cfg.explainers[t.explainer].name;
                    log::warn!(
                        "skipping {name} on node {} (seed {}): {e}",
                        t.node,
                        t.seed
                    );
                    skips.push(TaskSkip {
                        task: t,
                        error: e.to_string(),
                    });
                }
            }
        }
        out.flush()?;
    }

    let skipped_tasks = skips.len();
    if !skips.is_empty() {
        let fresh = !skips_path.exists();
        let mut sink = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&skips_path)?;
        if fresh {
            writeln!(sink, "{SKIPS_HEADER}")?;
        }
        for s in skips {
            let name = &cfg.explainers[s.task.explainer].name;
            if existing_skips.insert(skip_key(&ds.name, name, s.task)) {
                let reason = s.error.replace([',', '\n'], ";");
                writeln!(
                    sink,
                    "{},{name},{},{},{reason}",
                    ds.name, s.task.seed, s.task.node
                )?;
            }
        }
    }

    Ok(RunArtifacts {
        records_path,
        skips_path: skips_path.exists().then_some(skips_path),
        resumed_records,
        new_records,
        skipped_tasks,
    })
}
