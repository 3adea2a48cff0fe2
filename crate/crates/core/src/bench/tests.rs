//! Harness tests: config round-trips, node selection, run determinism,
//! resume convergence, aggregation arithmetic, and report rendering.

use std::path::Path;

use super::*;
use crate::error::Error;
use crate::explain::ExplainerSpec;
use crate::mask::TransformStrategy;
use crate::metrics::{Focus, MaskNature};
use crate::synthetic::{generate, named_spec};

#[test]
fn default_config_is_valid_and_round_trips_through_json() {
    let cfg = ExperimentConfig::default();
    cfg.validate().unwrap();
    assert_eq!(cfg.explainers.len(), 9);
    let text = serde_json::to_string_pretty(&cfg).unwrap();
    let again: ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("experiment.json");
    let cfg = ExperimentConfig::default();
    cfg.to_path(&path).unwrap();
    assert_eq!(ExperimentConfig::from_path(&path).unwrap(), cfg);
}

#[test]
fn config_rejects_inconsistent_values() {
    let ok = ExperimentConfig::default();

    let mut bad = ok.clone();
    bad.weights = (0.6, 0.5);
    assert!(bad.validate().is_err());

    let mut bad = ok.clone();
    bad.seeds = vec![1, 1];
    assert!(bad.validate().is_err());

    let mut bad = ok.clone();
    bad.explainers.clear();
    assert!(bad.validate().is_err());

    let mut bad = ok.clone();
    bad.k_sweep = vec![0, 5];
    assert!(bad.validate().is_err());

    let mut bad = ok.clone();
    bad.k_sweep = vec![5, 5];
    assert!(bad.validate().is_err());

    let mut bad = ok.clone();
    bad.explainers.push(ok.explainers[0].clone());
    assert!(bad.validate().is_err());
}

#[test]
fn sweep_collapses_for_sizeless_strategies() {
    let mut cfg = ExperimentConfig::default();
    cfg.strategy = TransformStrategy::Threshold { tau: 0.5 };
    cfg.k_sweep = vec![];
    cfg.validate().unwrap();
    assert_eq!(cfg.sweep(), vec![0]);

    cfg.strategy = TransformStrategy::Topk {
        k: 10,
        directed: false,
    };
    cfg.k_sweep = vec![3, 7];
    assert_eq!(cfg.sweep(), vec![3, 7]);
}

fn house_graph() -> (crate::graph::Graph, crate::synthetic::GroundTruth) {
    generate(&named_spec("ba_house").unwrap()).unwrap()
}

#[test]
fn motif_policy_restricts_to_motif_members() {
    let (g, gt) = house_graph();
    let predicted = g.labels().to_vec();
    let picked = select_nodes(&g, &predicted, Some(&gt), &NodePolicy::MotifOnly, 10, 0).unwrap();
    assert_eq!(picked.len(), 10);
    let test: std::collections::BTreeSet<usize> =
        g.split_nodes(crate::graph::Split::Test).into_iter().collect();
    for &v in &picked {
        assert!(gt.motif_of(v).is_some());
        assert!(test.contains(&v));
        assert_ne!(g.labels()[v], 0);
    }
}

#[test]
fn selection_is_deterministic_per_seed_and_sorted() {
    let (g, gt) = house_graph();
    let predicted = g.labels().to_vec();
    let a = select_nodes(&g, &predicted, Some(&gt), &NodePolicy::TestSplit, 20, 3).unwrap();
    let b = select_nodes(&g, &predicted, Some(&gt), &NodePolicy::TestSplit, 20, 3).unwrap();
    let c = select_nodes(&g, &predicted, Some(&gt), &NodePolicy::TestSplit, 20, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(a.len(), 20);
}

#[test]
fn undersized_pool_is_returned_whole() {
    let (g, gt) = house_graph();
    let predicted = g.labels().to_vec();
    let picked =
        select_nodes(&g, &predicted, Some(&gt), &NodePolicy::MotifOnly, 10_000, 0).unwrap();
    let pool: Vec<usize> = g
        .split_nodes(crate::graph::Split::Test)
        .into_iter()
        .filter(|&v| gt.motif_of(v).is_some())
        .collect();
    assert_eq!(picked, pool);
}

#[test]
fn correctness_policies_split_on_prediction_agreement() {
    let (g, gt) = house_graph();
    let labels = g.labels();
    let mut predicted = labels.to_vec();
    let test = g.split_nodes(crate::graph::Split::Test);
    // Miss half of the test split on purpose.
    let wrong: std::collections::BTreeSet<usize> = test.iter().step_by(2).copied().collect();
    for &v in &wrong {
        predicted[v] = (labels[v] + 1) % g.num_classes();
    }
    let correct =
        select_nodes(&g, &predicted, Some(&gt), &NodePolicy::CorrectOnly, 10_000, 0).unwrap();
    let missed =
        select_nodes(&g, &predicted, Some(&gt), &NodePolicy::WrongOnly, 10_000, 0).unwrap();
    assert!(correct.iter().all(|v| !wrong.contains(v)));
    assert!(missed.iter().all(|v| wrong.contains(v)));
    assert_eq!(correct.len() + missed.len(), test.len());
}

#[test]
fn label_filter_keeps_one_class() {
    let (g, gt) = house_graph();
    let predicted = g.labels().to_vec();
    let picked = select_nodes(
        &g,
        &predicted,
        Some(&gt),
        &NodePolicy::LabelFilter { class: 2 },
        10_000,
        0,
    )
    .unwrap();
    assert!(!picked.is_empty());
    assert!(picked.iter().all(|&v| g.labels()[v] == 2));
}

#[test]
fn empty_pool_is_an_error() {
    let (g, gt) = house_graph();
    let predicted = g.labels().to_vec();
    let err =
        select_nodes(&g, &predicted, Some(&gt), &NodePolicy::WrongOnly, 10, 0).unwrap_err();
    assert!(matches!(err, Error::EmptySelection(_)));
}

#[test]
fn motif_policy_needs_groundtruth() {
    let (g, _) = house_graph();
    let predicted = g.labels().to_vec();
    let err = select_nodes(&g, &predicted, None, &NodePolicy::MotifOnly, 10, 0).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

fn cheap_config() -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSource::Named {
            name: "ba_house".into(),
        },
        model: ModelSource::Train {
            recipe: TrainRecipe {
                epochs: 250,
                seed: Some(7),
                ..TrainRecipe::default()
            },
        },
        explainers: vec![
            ExplainerSpec::by_name("random").unwrap(),
            ExplainerSpec::by_name("distance").unwrap(),
            ExplainerSpec::by_name("pagerank").unwrap(),
        ],
        focus: vec![Focus::Phenomenon, Focus::Model],
        mask_nature: vec![MaskNature::Hard, MaskNature::Soft],
        strategy: TransformStrategy::Topk {
            k: 10,
            directed: false,
        },
        k_sweep: vec![2, 5],
        num_nodes: 4,
        node_policy: NodePolicy::MotifOnly,
        seeds: vec![0, 1],
        weights: (0.5, 0.5),
    }
}

/// Blanks the wall-clock column so runs can be compared byte-for-byte.
fn strip_time(text: &str) -> String {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            if i == 0 {
                line.to_string()
            } else {
                let mut f: Vec<&str> = line.split(',').collect();
                f[14] = "";
                f.join(",")
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn read_to_string(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn run_is_deterministic_and_resumable() {
    let cfg = cheap_config();
    let dir = tempfile::tempdir().unwrap();
    let dir1 = dir.path().join("one");
    let dir2 = dir.path().join("two");

    let a1 = run(&cfg, &dir1).unwrap();
    let a2 = run(&cfg, &dir2).unwrap();
    // 2 seeds x 3 explainers x 4 nodes x (2 focus x 2 k x 2 natures).
    assert_eq!(a1.new_records, 192);
    assert_eq!(a1.skipped_tasks, 0);
    assert!(a1.skips_path.is_none());

    let text1 = read_to_string(&a1.records_path);
    let text2 = read_to_string(&a2.records_path);
    assert_eq!(strip_time(&text1), strip_time(&text2));

    let records = read_records(&a1.records_path).unwrap();
    let keys: std::collections::BTreeSet<String> = records.iter().map(|r| r.key()).collect();
    assert_eq!(keys.len(), records.len());

    // A finished run resumes to a no-op.
    let again = run(&cfg, &dir1).unwrap();
    assert_eq!(again.new_records, 0);
    assert_eq!(again.resumed_records, 192);

    // An interrupted run converges to the same record set.
    let lines: Vec<&str> = text2.lines().collect();
    let truncated = lines[..1 + 57].join("\n") + "\n";
    std::fs::write(&a2.records_path, truncated).unwrap();
    let resumed = run(&cfg, &dir2).unwrap();
    assert_eq!(resumed.resumed_records, 57);
    assert!(resumed.new_records >= 192 - 57);
    let mut set1: Vec<String> = strip_time(&text1).lines().skip(1).map(String::from).collect();
    let mut set2: Vec<String> = strip_time(&read_to_string(&a2.records_path))
        .lines()
        .skip(1)
        .map(String::from)
        .collect();
    set1.sort();
    set2.sort();
    assert_eq!(set1, set2);
}

#[test]
fn failing_explainer_skips_its_tasks_without_aborting() {
    // Layer attribution needs a hidden layer; a single-layer model makes
    // that explainer fail on every task while the other keeps working.
    let cfg = ExperimentConfig {
        model: ModelSource::Train {
            recipe: TrainRecipe {
                num_layers: 1,
                epochs: 150,
                seed: Some(7),
                ..TrainRecipe::default()
            },
        },
        explainers: vec![
            ExplainerSpec::by_name("gradcam").unwrap(),
            ExplainerSpec::by_name("random").unwrap(),
        ],
        focus: vec![Focus::Model],
        mask_nature: vec![MaskNature::Hard],
        k_sweep: vec![2],
        num_nodes: 2,
        seeds: vec![0],
        ..cheap_config()
    };
    let dir = tempfile::tempdir().unwrap();
    let arts = run(&cfg, dir.path()).unwrap();
    assert_eq!(arts.skipped_tasks, 2);
    assert_eq!(arts.new_records, 2);
    let records = read_records(&arts.records_path).unwrap();
    assert!(records.iter().all(|r| r.explainer == "random"));
    let skips = read_to_string(arts.skips_path.as_ref().unwrap());
    assert_eq!(skips.lines().count(), 1 + 2);
    assert!(skips.lines().skip(1).all(|l| l.starts_with("ba_house,gradcam,")));

    // Failed tasks retry on resume and the skip log repeats nothing.
    let again = run(&cfg, dir.path()).unwrap();
    assert_eq!(again.new_records, 0);
    assert_eq!(again.skipped_tasks, 2);
    let skips = read_to_string(again.skips_path.as_ref().unwrap());
    assert_eq!(skips.lines().count(), 1 + 2);
}

fn toy_record(
    explainer: &str,
    seed: u64,
    node: usize,
    focus: Focus,
    nature: MaskNature,
    k: usize,
    fid_plus_acc: f64,
    fid_minus_acc: f64,
) -> EvalRecord {
    EvalRecord {
        dataset: "toy".into(),
        explainer: explainer.into(),
        seed,
        focus,
        mask_nature: nature,
        strategy: "topk_undirected".into(),
        k,
        node,
        fid_plus_acc,
        fid_minus_acc,
        fid_plus_prob: 0.1,
        fid_minus_prob: 0.2,
        charact: 0.0,
        gt_f1: Some(0.5),
        time_ms: 2.0,
        mask_size: 3,
        mask_entropy: 1.0,
        mask_max: 1.0,
        cc_ratio: 0.5,
    }
}

#[test]
fn aggregate_matches_hand_arithmetic() {
    let records = vec![
        toy_record("m", 0, 1, Focus::Phenomenon, MaskNature::Hard, 10, 1.0, 0.0),
        toy_record("m", 0, 2, Focus::Phenomenon, MaskNature::Hard, 10, 0.0, 0.0),
        toy_record("m", 1, 1, Focus::Phenomenon, MaskNature::Hard, 10, 1.0, 1.0),
        toy_record("m", 1, 2, Focus::Phenomenon, MaskNature::Hard, 10, 1.0, 1.0),
    ];
    let agg = aggregate(&records, &AggregateOptions::default()).unwrap();
    assert_eq!(agg.leaderboard.reference_k, 10);
    assert_eq!(agg.leaderboard.entries.len(), 1);
    let entry = &agg.leaderboard.entries[0];
    assert_eq!(entry.rank, 1);
    assert_eq!(entry.cells.len(), 1);
    let cell = &entry.cells[0];
    // Seed 0: fid+ 0.5, fid- 0 -> charact 2/3. Seed 1: fid- 1 -> 0.
    assert!((cell.charact_mean - 1.0 / 3.0).abs() < 1e-12);
    assert!((cell.charact_std - 1.0 / 3.0).abs() < 1e-12);
    assert!((cell.fid_plus_acc - 0.75).abs() < 1e-12);
    assert!((cell.fid_minus_acc - 0.5).abs() < 1e-12);
    assert_eq!(cell.gt_f1, Some(0.5));
    assert_eq!(cell.tags, vec!["necessary".to_string()]);
    assert!((entry.charact_mean - 1.0 / 3.0).abs() < 1e-12);
    assert!((entry.charact_std - 1.0 / 3.0).abs() < 1e-12);
    assert!((entry.mean_time_ms - 2.0).abs() < 1e-12);

    assert_eq!(agg.curves.len(), 1);
    let curve = &agg.curves[0];
    assert_eq!(curve.points.len(), 1);
    assert!(curve.fid_auc.is_none());
    assert!((curve.points[0].fid_plus_acc - 0.75).abs() < 1e-12);
    assert!((curve.points[0].one_minus_fid_minus - 0.5).abs() < 1e-12);
    assert!((curve.points[0].charact - 1.0 / 3.0).abs() < 1e-12);

    assert_eq!(agg.efficiency.len(), 1);
    assert!((agg.efficiency[0].mean_time_ms - 2.0).abs() < 1e-12);
}

#[test]
fn aggregate_is_invariant_under_record_duplication() {
    let mut records = vec![
        toy_record("m", 0, 1, Focus::Phenomenon, MaskNature::Hard, 10, 1.0, 0.0),
        toy_record("m", 0, 2, Focus::Phenomenon, MaskNature::Hard, 10, 0.0, 0.0),
        toy_record("n", 0, 1, Focus::Phenomenon, MaskNature::Hard, 10, 1.0, 0.5),
    ];
    let base = aggregate(&records, &AggregateOptions::default()).unwrap();
    let copy = records.clone();
    records.extend(copy);
    let doubled = aggregate(&records, &AggregateOptions::default()).unwrap();
    assert_eq!(base, doubled);
}

#[test]
fn aggregate_uses_nearest_evaluated_k() {
    let records = vec![
        toy_record("m", 0, 1, Focus::Phenomenon, MaskNature::Hard, 1, 1.0, 0.0),
        toy_record("m", 0, 1, Focus::Phenomenon, MaskNature::Hard, 5, 1.0, 0.5),
    ];
    let agg = aggregate(&records, &AggregateOptions::default()).unwrap();
    assert_eq!(agg.leaderboard.reference_k, 5);
    // The leaderboard cell reflects k = 5, not k = 1.
    assert!((agg.leaderboard.entries[0].cells[0].fid_minus_acc - 0.5).abs() < 1e-12);
    let curve = &agg.curves[0];
    assert_eq!(curve.points.len(), 2);
    assert!(curve.fid_auc.is_some());
}

fn recommend_fixture() -> Aggregates {
    let records = vec![
        toy_record("alpha", 0, 1, Focus::Phenomenon, MaskNature::Hard, 10, 0.9, 0.8),
        toy_record("beta", 0, 1, Focus::Phenomenon, MaskNature::Hard, 10, 0.5, 0.0),
    ];
    aggregate(&records, &AggregateOptions::default()).unwrap()
}

#[test]
fn recommend_ranks_by_the_requested_need() {
    let agg = recommend_fixture();

    let necessary = recommend(
        &agg,
        Focus::Phenomenon,
        MaskNature::Hard,
        ExplanationNeed::Necessary,
    )
    .unwrap();
    assert_eq!(necessary[0].explainer, "alpha");
    assert!((necessary[0].value - 0.9).abs() < 1e-12);

    let sufficient = recommend(
        &agg,
        Focus::Phenomenon,
        MaskNature::Hard,
        ExplanationNeed::Sufficient,
    )
    .unwrap();
    assert_eq!(sufficient[0].explainer, "beta");
    assert!((sufficient[0].value - 1.0).abs() < 1e-12);

    // charact(0.9, 0.8) ~ 0.327 < charact(0.5, 0.0) = 2/3.
    let overall = recommend(
        &agg,
        Focus::Phenomenon,
        MaskNature::Hard,
        ExplanationNeed::Characterization,
    )
    .unwrap();
    assert_eq!(overall[0].explainer, "beta");
    assert!((overall[0].value - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn recommend_rejects_an_absent_setting() {
    let agg = recommend_fixture();
    let err = recommend(
        &agg,
        Focus::Model,
        MaskNature::Soft,
        ExplanationNeed::Characterization,
    )
    .unwrap_err();
    assert!(matches!(err, Error::EmptySelection(_)));
}

#[test]
fn markdown_report_has_one_row_per_explainer() {
    let agg = recommend_fixture();
    let md = render_markdown(&agg);
    let data_rows = md
        .lines()
        .filter(|l| l.starts_with("| ") && !l.starts_with("| rank"))
        .count();
    assert_eq!(data_rows, 2);
    assert!(md.contains("beta"));
    assert!(md.contains("(k = 10)"));
}

#[test]
fn csv_report_is_order_invariant() {
    let records = vec![
        toy_record("m", 1, 2, Focus::Model, MaskNature::Soft, 5, 1.0, 0.0),
        toy_record("m", 0, 1, Focus::Phenomenon, MaskNature::Hard, 1, 0.0, 0.0),
        toy_record("a", 0, 1, Focus::Phenomenon, MaskNature::Hard, 1, 1.0, 1.0),
    ];
    let mut reversed = records.clone();
    reversed.reverse();
    let dir = tempfile::tempdir().unwrap();
    let opts = AggregateOptions::default();
    let p1 = write_report(&records, &opts, &dir.path().join("a"), ReportFormat::Csv).unwrap();
    let p2 = write_report(&reversed, &opts, &dir.path().join("b"), ReportFormat::Csv).unwrap();
    assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
}

#[test]
fn empty_records_produce_empty_reports() {
    let dir = tempfile::tempdir().unwrap();
    let opts = AggregateOptions::default();
    let csv = write_report(&[], &opts, dir.path(), ReportFormat::Csv).unwrap();
    assert_eq!(read_to_string(&csv), format!("{RECORDS_HEADER}\n"));
    let md = write_report(&[], &opts, dir.path(), ReportFormat::Md).unwrap();
    assert!(read_to_string(&md).contains("leaderboard"));
    let json = write_report(&[], &opts, dir.path(), ReportFormat::Json).unwrap();
    let agg: Aggregates = serde_json::from_str(&read_to_string(&json)).unwrap();
    assert!(agg.leaderboard.entries.is_empty());
}

#[test]
fn json_report_round_trips() {
    let agg = recommend_fixture();
    let dir = tempfile::tempdir().unwrap();
    let records = vec![
        toy_record("alpha", 0, 1, Focus::Phenomenon, MaskNature::Hard, 10, 0.9, 0.8),
        toy_record("beta", 0, 1, Focus::Phenomenon, MaskNature::Hard, 10, 0.5, 0.0),
    ];
    let path = write_report(&records, &AggregateOptions::default(), dir.path(), ReportFormat::Json)
        .unwrap();
    let parsed: Aggregates = serde_json::from_str(&read_to_string(&path)).unwrap();
    assert_eq!(parsed, agg);
}
