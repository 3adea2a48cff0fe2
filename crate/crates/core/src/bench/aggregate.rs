//! Record aggregation: per-setting summaries, the explainer leaderboard,
//! sweep curves, and setting-conditioned recommendations.
//!
//! Aggregation is two-level. Within one seed, metrics average over the
//! explained nodes and the characterization score is recomputed from the
//! averaged accuracy fidelities. Across seeds the per-seed values are
//! averaged and spread is reported as the population standard deviation,
//! so a single-seed run reports zero spread rather than NaN.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bench::records::EvalRecord;
use crate::error::{Error, Result};
use crate::metrics::{characterization, fid_auc, Focus, MaskNature};

/// Knobs of the aggregation step, all orthogonal to how records were
/// produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregateOptions {
    /// (w_plus, w_minus) for recomputing characterization from averaged
    /// fidelities.
    pub weights: (f64, f64),
    /// Sweep size the leaderboard is ranked at; the nearest evaluated k
    /// is used when this exact value is absent.
    pub reference_k: usize,
    /// A setting counts as sufficient when mean fid minus stays at or
    /// below this.
    pub sufficient_max_fid_minus: f64,
    /// A setting counts as necessary when mean fid plus reaches this.
    pub necessary_min_fid_plus: f64,
}

impl Default for AggregateOptions {
    fn default() -> AggregateOptions {
        AggregateOptions {
            weights: (0.5, 0.5),
            reference_k: 10,
            sufficient_max_fid_minus: 0.1,
            necessary_min_fid_plus: 0.6,
        }
    }
}

/// Seed-averaged metrics of one explainer in one evaluation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingCell {
    pub focus: Focus,
    pub mask_nature: MaskNature,
    pub fid_plus_acc: f64,
    pub fid_minus_acc: f64,
    pub fid_plus_prob: f64,
    pub fid_minus_prob: f64,
    pub charact_mean: f64,
    pub charact_std: f64,
    pub gt_f1: Option<f64>,
    /// "necessary" and/or "sufficient" per the aggregation thresholds.
    pub tags: Vec<String>,
}

/// One leaderboard row: an explainer summarized across settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerSummary {
    pub explainer: String,
    pub rank: usize,
    /// Characterization averaged over settings, then over seeds.
    pub charact_mean: f64,
    pub charact_std: f64,
    pub mean_time_ms: f64,
    pub cells: Vec<SettingCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    /// The sweep size the rows were computed at.
    pub reference_k: usize,
    pub entries: Vec<ExplainerSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub fid_plus_acc: f64,
    pub one_minus_fid_minus: f64,
    pub charact: f64,
}

/// Metrics of one explainer in one setting across the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub explainer: String,
    pub focus: Focus,
    pub mask_nature: MaskNature,
    pub points: Vec<CurvePoint>,
    /// Area under the (fid minus, fid plus) curve; needs two sweep sizes.
    pub fid_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub explainer: String,
    pub charact_mean: f64,
    pub mean_time_ms: f64,
}

/// Everything the reports are built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub leaderboard: Leaderboard,
    pub curves: Vec<CurveSeries>,
    pub efficiency: Vec<EfficiencyPoint>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Per-seed node averages of one (explainer, setting, k, seed) group.
struct SeedStat {
    fid_plus_acc: f64,
    fid_minus_acc: f64,
    fid_plus_prob: f64,
    fid_minus_prob: f64,
    charact: f64,
    gt_f1: Option<f64>,
}

fn seed_stat(records: &[&EvalRecord], weights: (f64, f64)) -> Result<SeedStat> {
    let n = records.len() as f64;
    let fid_plus_acc = records.iter().map(|r| r.fid_plus_acc).sum::<f64>() / n;
    let fid_minus_acc = records.iter().map(|r| r.fid_minus_acc).sum::<f64>() / n;
    let fid_plus_prob = records.iter().map(|r| r.fid_plus_prob).sum::<f64>() / n;
    let fid_minus_prob = records.iter().map(|r| r.fid_minus_prob).sum::<f64>() / n;
    let charact = characterization(fid_plus_acc, fid_minus_acc, weights.0, weights.1)?;
    let with_gt: Vec<f64> = records.iter().filter_map(|r| r.gt_f1).collect();
    Ok(SeedStat {
        fid_plus_acc,
        fid_minus_acc,
        fid_plus_prob,
        fid_minus_prob,
        charact,
        gt_f1: (!with_gt.is_empty()).then(|| mean(&with_gt)),
    })
}

type GroupKey = (String, Focus, MaskNature, usize, u64);

/// Groups records by (explainer, focus, nature, k, seed), deduplicating
/// identical cells so a duplicated record set aggregates unchanged.
fn group(records: &[EvalRecord]) -> BTreeMap<GroupKey, Vec<&EvalRecord>> {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut out: BTreeMap<GroupKey, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        if !seen.insert(r.key()) {
            continue;
        }
        out.entry((r.explainer.clone(), r.focus, r.mask_nature, r.k, r.seed))
            .or_default()
            .push(r);
    }
    out
}

fn nearest_k(ks: &BTreeSet<usize>, reference: usize) -> usize {
    *ks.iter()
        .min_by_key(|&&k| (k.abs_diff(reference), k))
        .expect("non-empty k set")
}

/// Builds the leaderboard, the sweep curves, and the efficiency pairs.
pub fn aggregate(records: &[EvalRecord], opts: &AggregateOptions) -> Result<Aggregates> {
    if records.is_empty() {
        return Ok(Aggregates {
            leaderboard: Leaderboard {
                reference_k: opts.reference_k,
                entries: Vec::new(),
            },
            curves: Vec::new(),
            efficiency: Vec::new(),
        });
    }
    let groups = group(records);
    let ks: BTreeSet<usize> = groups.keys().map(|k| k.3).collect();
    let ref_k = nearest_k(&ks, opts.reference_k);

    // (explainer, focus, nature) -> seed -> per-seed averages, at the
    // reference k for the leaderboard and per k for the curves.
    let mut cells: BTreeMap<(String, Focus, MaskNature), BTreeMap<u64, SeedStat>> = BTreeMap::new();
    let mut curve_points: BTreeMap<(String, Focus, MaskNature), BTreeMap<usize, Vec<SeedStat>>> =
        BTreeMap::new();
    for ((name, focus, nature, k, seed), rows) in &groups {
        curve_points
            .entry((name.clone(), *focus, *nature))
            .or_default()
            .entry(*k)
            .or_default()
            .push(seed_stat(rows, opts.weights)?);
        if *k == ref_k {
            cells
                .entry((name.clone(), *focus, *nature))
                .or_default()
                .insert(*seed, seed_stat(rows, opts.weights)?);
        }
    }

    // Mean time per explanation: one sample per (seed, node, focus), since
    // every k and nature row repeats its explanation's wall time.
    let mut times: BTreeMap<String, BTreeMap<(u64, usize, Focus), f64>> = BTreeMap::new();
    for r in records {
        times
            .entry(r.explainer.clone())
            .or_default()
            .insert((r.seed, r.node, r.focus), r.time_ms);
    }

    let explainers: BTreeSet<String> = groups.keys().map(|k| k.0.clone()).collect();
    let mut entries: Vec<ExplainerSummary> = Vec::new();
    for name in &explainers {
        let mut summary_cells: Vec<SettingCell> = Vec::new();
        // Per-seed overall characterization: average over the settings
        // that seed covered.
        let mut per_seed_overall: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for ((cell_name, focus, nature), by_seed) in &cells {
            if cell_name != name {
                continue;
            }
            let stats: Vec<&SeedStat> = by_seed.values().collect();
            let charact_per_seed: Vec<f64> = stats.iter().map(|s| s.charact).collect();
            for (&seed, stat) in by_seed {
                per_seed_overall.entry(seed).or_default().push(stat.charact);
            }
            let fid_plus_acc = mean(&stats.iter().map(|s| s.fid_plus_acc).collect::<Vec<_>>());
            let fid_minus_acc = mean(&stats.iter().map(|s| s.fid_minus_acc).collect::<Vec<_>>());
            let mut tags = Vec::new();
            if fid_plus_acc >= opts.necessary_min_fid_plus {
                tags.push("necessary".to_string());
            }
            if fid_minus_acc <= opts.sufficient_max_fid_minus {
                tags.push("sufficient".to_string());
            }
            let with_gt: Vec<f64> = stats.iter().filter_map(|s| s.gt_f1).collect();
            summary_cells.push(SettingCell {
                focus: *focus,
                mask_nature: *nature,
                fid_plus_acc,
                fid_minus_acc,
                fid_plus_prob: mean(&stats.iter().map(|s| s.fid_plus_prob).collect::<Vec<_>>()),
                fid_minus_prob: mean(&stats.iter().map(|s| s.fid_minus_prob).collect::<Vec<_>>()),
                charact_mean: mean(&charact_per_seed),
                charact_std: population_std(&charact_per_seed),
                gt_f1: (!with_gt.is_empty()).then(|| mean(&with_gt)),
                tags,
            });
        }
        let overall: Vec<f64> = per_seed_overall.values().map(|v| mean(v)).collect();
        let time_samples: Vec<f64> = times
            .get(name)
            .map(|m| m.values().copied().collect())
            .unwrap_or_default();
        entries.push(ExplainerSummary {
            explainer: name.clone(),
            rank: 0,
            charact_mean: mean(&overall),
            charact_std: population_std(&overall),
            mean_time_ms: if time_samples.is_empty() {
                0.0
            } else {
                mean(&time_samples)
            },
            cells: summary_cells,
        });
    }
    entries.sort_by(|a, b| {
        b.charact_mean
            .partial_cmp(&a.charact_mean)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.explainer.cmp(&b.explainer))
    });
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }

    let mut curves: Vec<CurveSeries> = Vec::new();
    for ((name, focus, nature), by_k) in &curve_points {
        let mut points: Vec<CurvePoint> = Vec::new();
        let mut auc_points: Vec<(f64, f64)> = Vec::new();
        for (&k, stats) in by_k {
            let fp = mean(&stats.iter().map(|s| s.fid_plus_acc).collect::<Vec<_>>());
            let fm = mean(&stats.iter().map(|s| s.fid_minus_acc).collect::<Vec<_>>());
            let ch = mean(&stats.iter().map(|s| s.charact).collect::<Vec<_>>());
            points.push(CurvePoint {
                k,
                fid_plus_acc: fp,
                one_minus_fid_minus: 1.0 - fm,
                charact: ch,
            });
            auc_points.push((fm, fp));
        }
        let auc = if auc_points.len() >= 2 {
            Some(fid_auc(&auc_points)?)
        } else {
            None
        };
        curves.push(CurveSeries {
            explainer: name.clone(),
            focus: *focus,
            mask_nature: *nature,
            points,
            fid_auc: auc,
        });
    }

    let efficiency: Vec<EfficiencyPoint> = entries
        .iter()
        .map(|e| EfficiencyPoint {
            explainer: e.explainer.clone(),
            charact_mean: e.charact_mean,
            mean_time_ms: e.mean_time_ms,
        })
        .collect();

    Ok(Aggregates {
        leaderboard: Leaderboard {
            reference_k: ref_k,
            entries,
        },
        curves,
        efficiency,
    })
}

/// What the caller wants an explanation to be good at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplanationNeed {
    Necessary,
    Sufficient,
    Characterization,
}

impl ExplanationNeed {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExplanationNeed::Necessary => "necessary",
            ExplanationNeed::Sufficient => "sufficient",
            ExplanationNeed::Characterization => "characterization",
        }
    }

    pub fn parse(s: &str) -> Result<ExplanationNeed> {
        match s {
            "necessary" => Ok(ExplanationNeed::Necessary),
            "sufficient" => Ok(ExplanationNeed::Sufficient),
            "characterization" => Ok(ExplanationNeed::Characterization),
            other => Err(Error::InvalidParameter(format!(
                "unknown explanation need {other:?}; expected necessary, sufficient or characterization"
            ))),
        }
    }
}

/// One ranked suggestion for a setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub explainer: String,
    /// The criterion value the ranking used.
    pub value: f64,
    pub fid_plus_acc: f64,
    pub fid_minus_acc: f64,
    pub charact: f64,
}

/// Ranks explainers for one evaluation setting by the requested need:
/// fid plus for necessary, one minus fid minus for sufficient, the
/// characterization score otherwise.
pub fn recommend(
    agg: &Aggregates,
    focus: Focus,
    nature: MaskNature,
    need: ExplanationNeed,
) -> Result<Vec<Recommendation>> {
    let mut out: Vec<Recommendation> = Vec::new();
    for entry in &agg.leaderboard.entries {
        if let Some(cell) = entry
            .cells
            .iter()
            .find(|c| c.focus == focus && c.mask_nature == nature)
        {
            let value = match need {
                ExplanationNeed::Necessary => cell.fid_plus_acc,
                ExplanationNeed::Sufficient => 1.0 - cell.fid_minus_acc,
                ExplanationNeed::Characterization => cell.charact_mean,
            };
            out.push(Recommendation {
                explainer: entry.explainer.clone(),
                value,
                fid_plus_acc: cell.fid_plus_acc,
                fid_minus_acc: cell.fid_minus_acc,
                charact: cell.charact_mean,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no records for focus {} with {} masks",
            focus.as_str(),
            nature.as_str()
        )));
    }
    out.sort_by(|a, b| {
        b.value
            .partial_cmp(&a.value)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.explainer.cmp(&b.explainer))
    });
    Ok(out)
}
