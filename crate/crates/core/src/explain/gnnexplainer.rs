//! Learned soft masks: optimize per-pair edge logits (and per-dimension
//! feature logits in the full variant) so the masked computation graph
//! keeps predicting the explained label, under size and entropy
//! regularization.

use ndarray::Array2;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::gcn::{loss_and_grads, normalize_adjacency_cg, Adam, ForwardMode, GcnModel};
use crate::graph::ComputationGraph;
use crate::mask::{normalize, FeatureMask};
use crate::rng;

use super::{check_request, Explanation};

const TAG: u64 = 0xE6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnnExplainerVariant {
    /// Edge pairs and feature dimensions.
    Full,
    /// Edge pairs only.
    Basic,
}

#[derive(Debug, Clone, Copy)]
pub struct GnnExplainerConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lambda_size: f64,
    pub lambda_entropy: f64,
}

impl Default for GnnExplainerConfig {
    fn default() -> GnnExplainerConfig {
        GnnExplainerConfig {
            epochs: 100,
            lr: 0.01,
            lambda_size: 0.005,
            lambda_entropy: 1.0,
        }
    }
}

pub fn explain_gnnexplainer(
    model: &GcnModel,
    cg: &ComputationGraph,
    target: usize,
    target_label: usize,
    seed: u64,
) -> Result<Explanation> {
    explain_with_config(
        model,
        cg,
        target,
        target_label,
        seed,
        GnnExplainerVariant::Full,
        &GnnExplainerConfig::default(),
    )
}

pub fn explain_gnnexplainer_basic(
    model: &GcnModel,
    cg: &ComputationGraph,
    target: usize,
    target_label: usize,
    seed: u64,
) -> Result<Explanation> {
    explain_with_config(
        model,
        cg,
        target,
        target_label,
        seed,
        GnnExplainerVariant::Basic,
        &GnnExplainerConfig::default(),
    )
}

pub(super) fn explain_with_config(
    model: &GcnModel,
    cg: &ComputationGraph,
    target: usize,
    target_label: usize,
    seed: u64,
    variant: GnnExplainerVariant,
    cfg: &GnnExplainerConfig,
) -> Result<Explanation> {
    check_request(cg, target, target_label, model.num_classes())?;
    let run = optimize(model, cg, target_label, seed, variant, cfg)?;
    let g = &cg.subgraph;

    // Final masks: sigmoid then min-max, pairs expanded back onto both
    // directed entries.
    let mut values = vec![0.0; g.num_edges()];
    for (p, &(fwd, rev)) in run.pairs.iter().enumerate() {
        let s = sigmoid(run.edge_logits[[p, 0]]);
        values[fwd] = s;
        if let Some(r) = rev {
            values[r] = s;
        }
    }
    let values = normalize(&values)?;
    let feature_mask = if run.feature_dims > 0 {
        let probs: Vec<f64> = (0..run.feature_dims)
            .map(|j| sigmoid(run.feat_logits[[j, 0]]))
            .collect();
        Some(FeatureMask {
            values: normalize(&probs)?,
        })
    } else {
        None
    };
    let name = match variant {
        GnnExplainerVariant::Full => "gnnexplainer",
        GnnExplainerVariant::Basic => "gnnexplainer_basic",
    };
    Explanation::from_values(values, feature_mask, cg, target_label, name, 0.0)
}

/// Regularized loss before the first update and after the last one, for
/// descent checks against the exact run a given seed produces.
pub fn optimization_endpoints(
    model: &GcnModel,
    cg: &ComputationGraph,
    target: usize,
    target_label: usize,
    seed: u64,
    variant: GnnExplainerVariant,
    cfg: &GnnExplainerConfig,
) -> Result<(f64, f64)> {
    check_request(cg, target, target_label, model.num_classes())?;
    let run = optimize(model, cg, target_label, seed, variant, cfg)?;
    Ok((run.first_loss, run.last_loss))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Binary entropy of p, with the 0 ln 0 = 0 convention.
fn bin_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
    }
}

/// d/dm of bin_entropy(sigmoid(m)); vanishes at the saturated ends.
fn bin_entropy_grad(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        p * (1.0 - p) * ((1.0 - p).ln() - p.ln())
    }
}

/// Undirected pairs of the computation graph as (forward, reverse) edge
/// indices, forward listed once with src <= dst.
fn undirected_pairs(cg: &ComputationGraph) -> Vec<(usize, Option<usize>)> {
    let g = &cg.subgraph;
    let mut pairs = Vec::new();
    for e in 0..g.num_edges() {
        let (u, v) = g.edges()[e];
        if u > v {
            continue;
        }
        let rev = g.edge_index(v, u).filter(|&r| r != e);
        pairs.push((e, rev));
    }
    pairs
}

struct OptimizedMask {
    pairs: Vec<(usize, Option<usize>)>,
    edge_logits: Array2<f64>,
    feat_logits: Array2<f64>,
    feature_dims: usize,
    first_loss: f64,
    last_loss: f64,
}

fn optimize(
    model: &GcnModel,
    cg: &ComputationGraph,
    target_label: usize,
    seed: u64,
    variant: GnnExplainerVariant,
    cfg: &GnnExplainerConfig,
) -> Result<OptimizedMask> {
    if cfg.epochs < 1 {
        return Err(Error::InvalidParameter("gnnexplainer needs epochs >= 1".into()));
    }
    let g = &cg.subgraph;
    let pairs = undirected_pairs(cg);
    let base = g.effective_weights();
    let feature_dims = match variant {
        GnnExplainerVariant::Full => g.feature_dim(),
        GnnExplainerVariant::Basic => 0,
    };

    // Logits as column vectors so the shared Adam can drive them.
    let mut rs = rng::stream(rng::mix(&[seed, cg.target as u64]), TAG);
    let init = Normal::new(1.0, 0.1).expect("valid normal");
    let mut edge_logits = Array2::from_shape_fn((pairs.len(), 1), |_| init.sample(&mut rs));
    let mut feat_logits = Array2::from_shape_fn((feature_dims, 1), |_| init.sample(&mut rs));

    let mut targets = vec![0usize; g.num_nodes()];
    targets[cg.target_local] = target_label;
    let node_set = [cg.target_local];
    let mask_len = (pairs.len() + feature_dims).max(1) as f64;

    let mut opt = Adam::new(&[(pairs.len(), 1), (feature_dims, 1)]);
    let mut first_loss = f64::NAN;
    let mut last_loss = f64::NAN;
    // One extra pass evaluates the loss after the final update without
    // stepping again.
    for epoch in 0..=cfg.epochs {
        let mut weights = base.clone();
        for (p, &(fwd, rev)) in pairs.iter().enumerate() {
            let s = sigmoid(edge_logits[[p, 0]]);
            weights[fwd] = base[fwd] * s;
            if let Some(r) = rev {
                weights[r] = base[r] * s;
            }
        }
        let features = {
            let mut x = g.features().clone();
            for j in 0..feature_dims {
                let s = sigmoid(feat_logits[[j, 0]]);
                x.column_mut(j).mapv_inplace(|v| v * s);
            }
            x
        };

        let adj = normalize_adjacency_cg(cg, &weights)?;
        let (ce, grads) = loss_and_grads(
            model,
            &adj,
            &features,
            &targets,
            &node_set,
            0.0,
            ForwardMode::Eval,
        )?;

        // Regularized objective over the concatenated mask vector.
        let probs_e: Vec<f64> = (0..pairs.len())
            .map(|p| sigmoid(edge_logits[[p, 0]]))
            .collect();
        let probs_f: Vec<f64> = (0..feature_dims)
            .map(|j| sigmoid(feat_logits[[j, 0]]))
            .collect();
        let size_term: f64 = probs_e.iter().chain(&probs_f).sum();
        let ent_term: f64 =
            probs_e.iter().chain(&probs_f).map(|&p| bin_entropy(p)).sum::<f64>() / mask_len;
        let loss = ce + cfg.lambda_size * size_term + cfg.lambda_entropy * ent_term;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!(
                "gnnexplainer loss {loss} at epoch {epoch} for target {} (cross-entropy {ce})",
                cg.target
            )));
        }
        if epoch == 0 {
            first_loss = loss;
        }
        last_loss = loss;
        if epoch == cfg.epochs {
            break;
        }

        let ge = grads.edge_weights.as_ref().expect("edge gradients requested");
        let gx = grads.features.as_ref().expect("feature gradients requested");
        let mut d_edge = Array2::zeros((pairs.len(), 1));
        for (p, &(fwd, rev)) in pairs.iter().enumerate() {
            let s = probs_e[p];
            let mut upstream = ge[fwd] * base[fwd];
            if let Some(r) = rev {
                upstream += ge[r] * base[r];
            }
            d_edge[[p, 0]] = upstream * s * (1.0 - s)
                + cfg.lambda_size * s * (1.0 - s)
                + cfg.lambda_entropy * bin_entropy_grad(s) / mask_len;
        }
        let mut d_feat = Array2::zeros((feature_dims, 1));
        for j in 0..feature_dims {
            let s = probs_f[j];
            let upstream: f64 = (0..g.num_nodes())
                .map(|v| gx[[v, j]] * g.features()[[v, j]])
                .sum();
            d_feat[[j, 0]] = upstream * s * (1.0 - s)
                + cfg.lambda_size * s * (1.0 - s)
                + cfg.lambda_entropy * bin_entropy_grad(s) / mask_len;
        }

        let mut params = [edge_logits, feat_logits];
        opt.step(&mut params, &[d_edge, d_feat], cfg.lr, (0.9, 0.999), 1e-8);
        [edge_logits, feat_logits] = params;
    }

    Ok(OptimizedMask {
        pairs,
        edge_logits,
        feat_logits,
        feature_dims,
        first_loss,
        last_loss,
    })
}
