//! Evaluation metrics: fidelity in all four forms and both focuses,
//! the characterization score, fidelity AUC, ground-truth accuracy, and
//! mask-property analytics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::connected_components;

/// Whether fidelity is measured against true labels (phenomenon) or the
/// model's own full-graph predictions (model).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Focus {
    Phenomenon,
    Model,
}

impl Focus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Focus::Phenomenon => "phenomenon",
            Focus::Model => "model",
        }
    }

    pub fn parse(s: &str) -> Result<Focus> {
        match s {
            "phenomenon" => Ok(Focus::Phenomenon),
            "model" => Ok(Focus::Model),
            other => Err(Error::InvalidParameter(format!("unknown focus {other:?}"))),
        }
    }
}

/// Binary vs real-valued masks applied to the adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskNature {
    Hard,
    Soft,
}

impl MaskNature {
    pub fn as_str(&self) -> &'static str {
        match self {
            MaskNature::Hard => "hard",
            MaskNature::Soft => "soft",
        }
    }

    pub fn parse(s: &str) -> Result<MaskNature> {
        match s {
            "hard" => Ok(MaskNature::Hard),
            "soft" => Ok(MaskNature::Soft),
            other => Err(Error::InvalidParameter(format!(
                "unknown mask nature {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FidKind {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FidForm {
    Acc,
    Prob,
}

/// Per-node evaluation record: predictions and class probabilities on
/// the full computation graph, the masked graph, and the complement.
#[derive(Debug, Clone)]
pub struct NodeOutcome {
    pub node: usize,
    pub true_label: usize,
    pub pred_full: usize,
    pub prob_full: Vec<f64>,
    pub pred_masked: usize,
    pub prob_masked: Vec<f64>,
    pub pred_complement: usize,
    pub prob_complement: Vec<f64>,
}

impl NodeOutcome {
    fn check(&self) -> Result<()> {
        let all = self
            .prob_full
            .iter()
            .chain(&self.prob_masked)
            .chain(&self.prob_complement);
        for &p in all {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "probability {p} outside [0, 1] for node {}",
                    self.node
                )));
            }
        }
        let c = self.prob_full.len();
        if self.prob_masked.len() != c || self.prob_complement.len() != c {
            return Err(Error::DimensionMismatch(format!(
                "probability vectors of unequal length for node {}",
                self.node
            )));
        }
        for &l in [self.true_label, self.pred_full, self.pred_masked, self.pred_complement].iter() {
            if l >= c {
                return Err(Error::InvalidParameter(format!(
                    "class {l} out of range for {c} probabilities (node {})",
                    self.node
                )));
            }
        }
        Ok(())
    }
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Mean fidelity over per-node records.
///
/// Acc forms compare label agreement; prob forms compare class
/// probabilities. Phenomenon focus scores against the true label (prob
/// drops signed); model focus scores against the full-graph prediction
/// (prob drops absolute).
pub fn fidelity(
    records: &[NodeOutcome],
    kind: FidKind,
    form: FidForm,
    focus: Focus,
) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidParameter(
            "fidelity requires at least one record".into(),
        ));
    }
    let mut sum = 0.0;
    for r in records {
        r.check()?;
        // fid+ removes the explanation (complement graph); fid- keeps
        // only the explanation (masked graph).
        let (pred_sub, prob_sub) = match kind {
            FidKind::Plus => (r.pred_complement, &r.prob_complement),
            FidKind::Minus => (r.pred_masked, &r.prob_masked),
        };
        sum += match (form, focus) {
            (FidForm::Acc, Focus::Phenomenon) => {
                (ind(r.pred_full == r.true_label) - ind(pred_sub == r.true_label)).abs()
            }
            (FidForm::Acc, Focus::Model) => 1.0 - ind(pred_sub == r.pred_full),
            (FidForm::Prob, Focus::Phenomenon) => {
                r.prob_full[r.true_label] - prob_sub[r.true_label]
            }
            (FidForm::Prob, Focus::Model) => {
                (r.prob_full[r.pred_full] - prob_sub[r.pred_full]).abs()
            }
        };
    }
    Ok(sum / records.len() as f64)
}

/// Weighted harmonic mean of fid+ and 1-fid-. High only when the
/// explanation is both necessary and sufficient.
pub fn characterization(fid_plus: f64, fid_minus: f64, w_plus: f64, w_minus: f64) -> Result<f64> {
    for (name, v) in [("fid_plus", fid_plus), ("fid_minus", fid_minus)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("{name} {v} outside [0, 1]")));
        }
    }
    for (name, w) in [("w_plus", w_plus), ("w_minus", w_minus)] {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidParameter(format!("{name} {w} outside [0, 1]")));
        }
    }
    if (w_plus + w_minus - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "weights must sum to 1, got {w_plus} + {w_minus}"
        )));
    }
    // Harmonic-mean limit as either factor approaches 0.
    if fid_plus == 0.0 || fid_minus == 1.0 {
        return Ok(0.0);
    }
    Ok((w_plus + w_minus) / (w_plus / fid_plus + w_minus / (1.0 - fid_minus)))
}

/// Trapezoidal area under the (fid+, 1-fid-) curve across a k sweep.
/// Points are clipped to the unit square and sorted by fid+.
pub fn fid_auc(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "fidelity AUC requires at least 2 points, got {}",
            points.len()
        )));
    }
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|&(x, y)| (x.clamp(0.0, 1.0), y.clamp(0.0, 1.0)))
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut area = 0.0;
    for w in pts.windows(2) {
        area += (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1);
    }
    Ok(area)
}

fn undirected_set(edges: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
    edges
        .iter()
        .map(|&(u, v)| (u.min(v), u.max(v)))
        .collect()
}

/// Precision, recall, and F1 between explanation edges and ground-truth
/// edges, both reduced to undirected pair sets.
pub fn groundtruth_accuracy(
    explanation: &[(usize, usize)],
    groundtruth: &[(usize, usize)],
) -> Result<(f64, f64, f64)> {
    let gt = undirected_set(groundtruth);
    if gt.is_empty() {
        return Err(Error::InvalidParameter(
            "ground truth has no edges".into(),
        ));
    }
    let pred = undirected_set(explanation);
    let overlap = pred.intersection(&gt).count() as f64;
    let precision = if pred.is_empty() {
        0.0
    } else {
        overlap / pred.len() as f64
    };
    let recall = overlap / gt.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((precision, recall, f1))
}

/// Structural and distributional statistics of a normalized mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskProperties {
    /// Nonzero entry count.
    pub size: usize,
    /// Shannon entropy (natural log) of values renormalized to sum 1.
    pub entropy: f64,
    pub max_value: f64,
    /// Connected components over the support divided by its undirected
    /// pair count; 0 for an empty mask.
    pub cc_ratio: f64,
}

pub fn mask_properties(values: &[f64], edges: &[(usize, usize)]) -> MaskProperties {
    let size = values.iter().filter(|&&v| v != 0.0).count();
    let total: f64 = values.iter().sum();
    let entropy = if total > 0.0 {
        values
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| {
                let p = v / total;
                -p * p.ln()
            })
            .sum()
    } else {
        0.0
    };
    let max_value = values.iter().cloned().fold(0.0, f64::max);
    let support: Vec<(usize, usize)> = edges
        .iter()
        .zip(values)
        .filter(|&(_, &v)| v != 0.0)
        .map(|(&e, _)| e)
        .collect();
    let pairs = undirected_set(&support);
    let cc_ratio = if pairs.is_empty() {
        0.0
    } else {
        connected_components(&support) as f64 / pairs.len() as f64
    };
    MaskProperties {
        size,
        entropy,
        max_value,
        cc_ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn outcome(
        true_label: usize,
        pred_full: usize,
        pred_masked: usize,
        pred_complement: usize,
    ) -> NodeOutcome {
        let prob = |c: usize| {
            let mut p = vec![0.1, 0.1];
            p[c] = 0.9;
            p
        };
        NodeOutcome {
            node: 0,
            true_label,
            pred_full,
            prob_full: prob(pred_full),
            pred_masked,
            prob_masked: prob(pred_masked),
            pred_complement,
            prob_complement: prob(pred_complement),
        }
    }

    #[test]
    fn model_focus_identity_mask_is_zero() {
        // G_S = G_C: masked prediction equals the full prediction.
        let recs = vec![outcome(0, 1, 1, 0), outcome(1, 0, 0, 1)];
        let f = fidelity(&recs, FidKind::Minus, FidForm::Acc, Focus::Model).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn model_focus_full_complement_is_zero() {
        let recs = vec![outcome(0, 1, 0, 1), outcome(1, 0, 1, 0)];
        let f = fidelity(&recs, FidKind::Plus, FidForm::Acc, Focus::Model).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn phenomenon_acc_hand_case() {
        // Node 1: pred correct, masked keeps it. Node 2: pred correct,
        // masked loses it. fid- = (|1-1| + |1-0|)/2 = 0.5.
        let recs = vec![outcome(0, 0, 0, 1), outcome(0, 0, 1, 1)];
        let f = fidelity(&recs, FidKind::Minus, FidForm::Acc, Focus::Phenomenon).unwrap();
        assert_eq!(f, 0.5);
    }

    #[test]
    fn phenomenon_prob_is_signed() {
        let mut r = outcome(0, 0, 0, 0);
        r.prob_full = vec![0.6, 0.4];
        r.prob_masked = vec![0.9, 0.1];
        let f = fidelity(&[r], FidKind::Minus, FidForm::Prob, Focus::Phenomenon).unwrap();
        assert!((f - (0.6 - 0.9)).abs() < 1e-15);
        assert!(f < 0.0);
    }

    #[test]
    fn model_prob_is_absolute() {
        let mut r = outcome(1, 1, 1, 1);
        r.prob_full = vec![0.4, 0.6];
        r.prob_complement = vec![0.1, 0.9];
        let f = fidelity(&[r], FidKind::Plus, FidForm::Prob, Focus::Model).unwrap();
        assert!((f - 0.3).abs() < 1e-15);
    }

    #[test]
    fn fidelity_rejects_empty_and_bad_probs() {
        assert!(fidelity(&[], FidKind::Plus, FidForm::Acc, Focus::Model).is_err());
        let mut r = outcome(0, 0, 0, 0);
        r.prob_full = vec![1.2, -0.2];
        assert!(fidelity(&[r], FidKind::Plus, FidForm::Acc, Focus::Model).is_err());
    }

    #[test]
    fn characterization_examples() {
        assert_eq!(characterization(1.0, 0.0, 0.3, 0.7).unwrap(), 1.0);
        let c = characterization(0.8, 0.6, 0.5, 0.5).unwrap();
        assert!((c - 2.0 * 0.8 * 0.4 / (0.8 + 0.4)).abs() < 1e-12);
        assert!((c - 0.5333333333333333).abs() < 1e-9);
        assert_eq!(characterization(0.0, 0.5, 0.5, 0.5).unwrap(), 0.0);
        assert_eq!(characterization(0.5, 1.0, 0.5, 0.5).unwrap(), 0.0);
        assert!(characterization(0.5, 0.5, 0.6, 0.6).is_err());
        assert!(characterization(1.5, 0.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn fid_auc_examples() {
        assert_eq!(fid_auc(&[(0.0, 0.0), (1.0, 1.0)]).unwrap(), 0.5);
        assert_eq!(fid_auc(&[(0.0, 1.0), (1.0, 1.0)]).unwrap(), 1.0);
        // Staircase (0,0) -> (0.5,0.4) -> (1,1):
        // 0.5*0.5*(0+0.4) + 0.5*0.5*(0.4+1) = 0.1 + 0.35.
        let a = fid_auc(&[(1.0, 1.0), (0.0, 0.0), (0.5, 0.4)]).unwrap();
        assert!((a - 0.45).abs() < 1e-12);
        assert!(fid_auc(&[(0.5, 0.5)]).is_err());
    }

    #[test]
    fn groundtruth_accuracy_examples() {
        let gt = vec![(0, 1), (1, 0), (1, 2), (2, 1)];
        let (p, r, f1) = groundtruth_accuracy(&gt, &gt).unwrap();
        assert_eq!((p, r, f1), (1.0, 1.0, 1.0));
        let (_, _, f1) = groundtruth_accuracy(&[(5, 6)], &gt).unwrap();
        assert_eq!(f1, 0.0);
        assert!(groundtruth_accuracy(&gt, &[]).is_err());
    }

    #[test]
    fn groundtruth_accuracy_hand_counts() {
        // 4 predicted pairs, 6 true pairs, 3 shared.
        let pred = vec![(0, 1), (1, 2), (2, 3), (9, 10)];
        let gt = vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6)];
        let (p, r, f1) = groundtruth_accuracy(&pred, &gt).unwrap();
        assert!((p - 0.75).abs() < 1e-15);
        assert!((r - 0.5).abs() < 1e-15);
        assert!((f1 - 0.6).abs() < 1e-15);
    }

    #[test]
    fn groundtruth_accuracy_direction_insensitive() {
        let gt = vec![(0, 1), (1, 0)];
        let (p, r, f1) = groundtruth_accuracy(&[(1, 0)], &gt).unwrap();
        assert_eq!((p, r, f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn mask_properties_uniform_entropy() {
        let edges: Vec<(usize, usize)> = (0..10).map(|i| (i, i + 1)).collect();
        let props = mask_properties(&[0.5; 10], &edges);
        assert_eq!(props.size, 10);
        assert!((props.entropy - 10f64.ln()).abs() < 1e-9);
        assert_eq!(props.max_value, 0.5);
        // Path support: one component over 10 pairs.
        assert!((props.cc_ratio - 0.1).abs() < 1e-15);
    }

    #[test]
    fn mask_properties_single_edge_and_empty() {
        let edges = vec![(0, 1), (2, 3)];
        let props = mask_properties(&[0.8, 0.0], &edges);
        assert_eq!(props.size, 1);
        assert_eq!(props.entropy, 0.0);
        assert_eq!(props.cc_ratio, 1.0);
        let empty = mask_properties(&[0.0, 0.0], &edges);
        assert_eq!(empty.size, 0);
        assert_eq!(empty.entropy, 0.0);
        assert_eq!(empty.max_value, 0.0);
        assert_eq!(empty.cc_ratio, 0.0);
    }

    #[test]
    fn mask_properties_two_components() {
        let edges = vec![(0, 1), (1, 0), (4, 5)];
        let props = mask_properties(&[0.5, 0.5, 0.5], &edges);
        assert_eq!(props.size, 3);
        // Support pairs {0,1} and {4,5}: 2 components over 2 pairs.
        assert_eq!(props.cc_ratio, 1.0);
    }

    #[test]
    fn focus_and_nature_parse() {
        assert_eq!(Focus::parse("phenomenon").unwrap(), Focus::Phenomenon);
        assert_eq!(Focus::parse("model").unwrap(), Focus::Model);
        assert!(Focus::parse("both").is_err());
        assert_eq!(MaskNature::parse("hard").unwrap(), MaskNature::Hard);
        assert_eq!(MaskNature::parse("soft").unwrap(), MaskNature::Soft);
        assert!(MaskNature::parse("fuzzy").is_err());
    }

    proptest! {
        #[test]
        fn acc_fidelity_in_unit_interval(
            labels in proptest::collection::vec((0usize..2, 0usize..2, 0usize..2, 0usize..2), 1..20)
        ) {
            let recs: Vec<NodeOutcome> = labels
                .iter()
                .map(|&(y, f, m, c)| outcome(y, f, m, c))
                .collect();
            for kind in [FidKind::Plus, FidKind::Minus] {
                for focus in [Focus::Phenomenon, Focus::Model] {
                    let v = fidelity(&recs, kind, FidForm::Acc, focus).unwrap();
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }

        #[test]
        fn characterization_symmetry_and_monotonicity(
            fp in 0.01f64..1.0,
            fm in 0.0f64..0.99,
            w in 0.01f64..0.99,
            bump in 0.0f64..0.2,
        ) {
            let c = characterization(fp, fm, w, 1.0 - w).unwrap();
            // Swapping (fid+, w+) with (1-fid-, w-) leaves the harmonic
            // mean unchanged.
            let swapped = characterization(1.0 - fm, 1.0 - fp, 1.0 - w, w).unwrap();
            prop_assert!((c - swapped).abs() < 1e-12);
            let up = characterization((fp + bump).min(1.0), fm, w, 1.0 - w).unwrap();
            prop_assert!(up >= c - 1e-12);
            let down = characterization(fp, (fm + bump).min(1.0), w, 1.0 - w).unwrap();
            prop_assert!(down <= c + 1e-12);
            // Unweighted case equals the plain harmonic mean.
            let hm = characterization(fp, fm, 0.5, 0.5).unwrap();
            if fp > 0.0 && fm < 1.0 {
                let direct = 2.0 * fp * (1.0 - fm) / (fp + (1.0 - fm));
                prop_assert!((hm - direct).abs() < 1e-12);
            }
        }

        #[test]
        fn groundtruth_matches_bruteforce(
            pred in proptest::collection::vec((0usize..8, 0usize..8), 0..15),
            gt in proptest::collection::vec((0usize..8, 0usize..8), 1..15),
        ) {
            let pred: Vec<(usize, usize)> =
                pred.into_iter().filter(|&(u, v)| u != v).collect();
            let gt: Vec<(usize, usize)> = gt.into_iter().filter(|&(u, v)| u != v).collect();
            prop_assume!(!gt.is_empty());
            let (p, r, f1) = groundtruth_accuracy(&pred, &gt).unwrap();
            // Brute force over every unordered pair of node ids.
            let in_set = |edges: &[(usize, usize)], a: usize, b: usize| {
                edges.iter().any(|&(u, v)| (u, v) == (a, b) || (v, u) == (a, b))
            };
            let mut tp = 0.0;
            let mut np = 0.0;
            let mut ng = 0.0;
            for a in 0..8 {
                for b in (a + 1)..8 {
                    let inp = in_set(&pred, a, b);
                    let ing = in_set(&gt, a, b);
                    if inp { np += 1.0; }
                    if ing { ng += 1.0; }
                    if inp && ing { tp += 1.0; }
                }
            }
            let bp = if np == 0.0 { 0.0 } else { tp / np };
            let br = tp / ng;
            let bf1 = if bp + br == 0.0 { 0.0 } else { 2.0 * bp * br / (bp + br) };
            prop_assert!((p - bp).abs() < 1e-12);
            prop_assert!((r - br).abs() < 1e-12);
            prop_assert!((f1 - bf1).abs() < 1e-12);
        }

        #[test]
        fn entropy_bounded_by_ln_size(values in proptest::collection::vec(0.0f64..1.0, 1..40)) {
            let edges: Vec<(usize, usize)> = (0..values.len()).map(|i| (i, i + 1)).collect();
            let props = mask_properties(&values, &edges);
            if props.size > 0 {
                prop_assert!(props.entropy <= (props.size as f64).ln() + 1e-9);
            }
            prop_assert!(props.entropy >= -1e-12);
        }
    }
}
