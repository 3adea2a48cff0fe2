//! Mask post-processing: normalization, node-to-edge conversion, the
//! three transformation strategies, hardening, and masked-graph inputs.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{pair_reciprocals, ComputationGraph};

/// Per-edge importance in [0,1], aligned to a computation graph's edge
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMask {
    pub values: Vec<f64>,
    /// Name of the producing explainer.
    pub origin: String,
    /// Global id of the explained node.
    pub target: usize,
}

impl EdgeMask {
    pub fn new(values: Vec<f64>, origin: impl Into<String>, target: usize) -> Result<EdgeMask> {
        if let Some(&bad) = values.iter().find(|v| !v.is_finite() || !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "mask value {bad} outside [0, 1]"
            )));
        }
        Ok(EdgeMask {
            values,
            origin: origin.into(),
            target,
        })
    }

    pub fn support_size(&self) -> usize {
        support_size(&self.values)
    }
}

/// Per-feature-dimension importance in [0,1], broadcast over nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMask {
    pub values: Vec<f64>,
}

impl FeatureMask {
    pub fn new(values: Vec<f64>) -> Result<FeatureMask> {
        if let Some(&bad) = values.iter().find(|v| !v.is_finite() || !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "feature mask value {bad} outside [0, 1]"
            )));
        }
        Ok(FeatureMask { values })
    }
}

pub fn support_size(values: &[f64]) -> usize {
    values.iter().filter(|&&v| v != 0.0).count()
}

/// Min-max rescale to [0,1]. All-equal input (uniform importance) maps to
/// all-ones rather than all-zeros.
pub fn normalize(raw: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = raw.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "non-finite mask value {bad}"
        )));
    }
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(vec![1.0; raw.len()]);
    }
    let span = max - min;
    Ok(raw.iter().map(|&v| ((v - min) / span).clamp(0.0, 1.0)).collect())
}

/// Edge value = mean of its endpoint scores, then min-max normalized.
pub fn node_to_edge(node_scores: &[f64], cg: &ComputationGraph) -> Result<Vec<f64>> {
    let g = &cg.subgraph;
    if node_scores.len() != g.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} node scores for {} computation-graph nodes",
            node_scores.len(),
            g.num_nodes()
        )));
    }
    let raw: Vec<f64> = g
        .edges()
        .iter()
        .map(|&(u, v)| 0.5 * (node_scores[u] + node_scores[v]))
        .collect();
    normalize(&raw)
}

/// Mask transformation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformStrategy {
    /// Keep the k highest entries (directed) or the k highest reciprocal
    /// pairs scored by the max of the pair (undirected).
    Topk { k: usize, directed: bool },
    /// Keep entries strictly greater than tau.
    Threshold { tau: f64 },
    /// Remove at least fraction x of the nonzero entries, keeping the
    /// ceil((1-x)·nonzero) largest.
    Sparsity { x: f64 },
}

impl TransformStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TransformStrategy::Topk { k, .. } => {
                if k < 1 {
                    return Err(Error::InvalidParameter("topk requires k >= 1".into()));
                }
            }
            TransformStrategy::Threshold { tau } => {
                if !(0.0..=1.0).contains(&tau) {
                    return Err(Error::InvalidParameter(format!(
                        "threshold {tau} outside [0, 1]"
                    )));
                }
            }
            TransformStrategy::Sparsity { x } => {
                if !(0.0..=1.0).contains(&x) {
                    return Err(Error::InvalidParameter(format!(
                        "sparsity {x} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Stable label for records and file names.
    pub fn label(&self) -> String {
        match *self {
            TransformStrategy::Topk { directed: true, .. } => "topk_directed".into(),
            TransformStrategy::Topk { directed: false, .. } => "topk_undirected".into(),
            TransformStrategy::Threshold { tau } => format!("threshold_{tau}"),
            TransformStrategy::Sparsity { x } => format!("sparsity_{x}"),
        }
    }

    /// Same strategy with the budget replaced, for k sweeps.
    pub fn with_k(&self, k: usize) -> TransformStrategy {
        match *self {
            TransformStrategy::Topk { directed, .. } => TransformStrategy::Topk { k, directed },
            other => other,
        }
    }

    /// Whether [`TransformStrategy::with_k`] has any effect, i.e. whether a
    /// size sweep over this strategy is meaningful.
    pub fn takes_k(&self) -> bool {
        matches!(self, TransformStrategy::Topk { .. })
    }
}

/// Ceiling with a tolerance for values a hair above an integer, so
/// fraction arithmetic like (1-0.7)*10 lands on 3, not 4.
fn ceil_stable(t: f64) -> usize {
    let r = t.round();
    let v = if (t - r).abs() < 1e-9 { r } else { t.ceil() };
    v.max(0.0) as usize
}

/// Applies a transformation strategy. Non-selected entries drop to zero;
/// selected entries keep their values. Ties break toward the lower edge
/// index.
pub fn transform(
    values: &[f64],
    edges: &[(usize, usize)],
    strategy: &TransformStrategy,
) -> Result<Vec<f64>> {
    strategy.validate()?;
    if values.len() != edges.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} mask values for {} edges",
            values.len(),
            edges.len()
        )));
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "non-finite mask value {bad}"
        )));
    }
    match *strategy {
        TransformStrategy::Topk { k, directed: true } => Ok(keep_top(values, k)),
        TransformStrategy::Topk { k, directed: false } => {
            let pairs = pair_reciprocals(edges);
            let mut scored: Vec<(f64, usize)> = Vec::new();
            for (i, p) in pairs.iter().enumerate() {
                let mut s = values[p.first];
                if let Some(j) = p.second {
                    s = s.max(values[j]);
                }
                if s > 0.0 {
                    scored.push((s, i));
                }
            }
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let mut out = vec![0.0; values.len()];
            for &(_, i) in scored.iter().take(k) {
                let p = &pairs[i];
                out[p.first] = values[p.first];
                if let Some(j) = p.second {
                    out[j] = values[j];
                }
            }
            Ok(out)
        }
        TransformStrategy::Threshold { tau } => Ok(values
            .iter()
            .map(|&v| if v > tau { v } else { 0.0 })
            .collect()),
        TransformStrategy::Sparsity { x } => {
            let nonzero = support_size(values);
            let keep = ceil_stable((1.0 - x) * nonzero as f64);
            Ok(keep_top(values, keep))
        }
    }
}

/// Keeps the `k` largest positive entries, ties toward lower index.
fn keep_top(values: &[f64], k: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 0.0).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    let mut out = vec![0.0; values.len()];
    for &i in idx.iter().take(k) {
        out[i] = values[i];
    }
    out
}

/// Positive entries become exactly 1; support is unchanged.
pub fn harden(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect()
}

/// 1 - m per entry. For hard masks this removes exactly the explanation.
pub fn complement(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| 1.0 - v).collect()
}

/// Inputs for prediction on the masked computation graph: edge weights
/// scaled by the mask and features scaled per dimension by the optional
/// feature mask.
pub fn apply_mask(
    cg: &ComputationGraph,
    mask_values: &[f64],
    fmask: Option<&FeatureMask>,
) -> Result<(Vec<f64>, Array2<f64>)> {
    let g = &cg.subgraph;
    if mask_values.len() != g.num_edges() {
        return Err(Error::DimensionMismatch(format!(
            "{} mask values for {} computation-graph edges",
            mask_values.len(),
            g.num_edges()
        )));
    }
    let base = g.effective_weights();
    let weights: Vec<f64> = base
        .iter()
        .zip(mask_values)
        .map(|(&a, &m)| a * m)
        .collect();
    let mut features = g.features().clone();
    if let Some(fm) = fmask {
        if fm.values.len() != features.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature-mask values for {} feature dims",
                fm.values.len(),
                features.ncols()
            )));
        }
        for (j, &m) in fm.values.iter().enumerate() {
            features.column_mut(j).mapv_inplace(|x| x * m);
        }
    }
    Ok((weights, features))
}
