//! Explainer suite: maps (model, computation graph, target, label) to a
//! normalized edge mask, optionally with a per-dimension feature mask.
//!
//! All explainers share one contract: the mask is aligned to the
//! target's computation graph, values land in [0, 1] after min-max
//! normalization, and a fixed seed reproduces the mask bit for bit.
//! Which label gets explained is the caller's choice; explaining the
//! true label versus the predicted one is the only place the
//! phenomenon/model distinction enters.

mod distance;
mod gnnexplainer;
mod gradient;
mod occlusion;
mod pagerank;
mod random;

pub use distance::explain_distance;
pub use gnnexplainer::{
    explain_gnnexplainer, explain_gnnexplainer_basic, optimization_endpoints, GnnExplainerConfig,
    GnnExplainerVariant,
};
pub use gradient::{
    explain_gradcam, explain_integrated_gradients, explain_saliency, ig_attributions,
    target_logit_at_scale,
};
pub use occlusion::explain_occlusion;
pub use pagerank::{explain_pagerank, pagerank_scores};
pub use random::explain_random;

use std::collections::BTreeMap;
use std::time::Instant;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::gcn::GcnModel;
use crate::graph::ComputationGraph;
use crate::mask::{EdgeMask, FeatureMask};
use crate::metrics::Focus;

/// A single explanation: the raw (pre-transformation) normalized masks
/// plus provenance.
#[derive(Debug, Clone)]
pub struct Explanation {
    pub edge_mask: EdgeMask,
    pub feature_mask: Option<FeatureMask>,
    /// Edge endpoints as global node ids, aligned with `edge_mask`.
    pub edges: Vec<(usize, usize)>,
    pub target: usize,
    pub target_label: usize,
    pub explainer: String,
    pub focus: Focus,
    pub time_ms: f64,
}

impl Explanation {
    /// Assembles an explanation from per-edge values aligned to the
    /// computation graph.
    pub fn from_values(
        values: Vec<f64>,
        feature_mask: Option<FeatureMask>,
        cg: &ComputationGraph,
        target_label: usize,
        explainer: &str,
        time_ms: f64,
    ) -> Result<Explanation> {
        if values.len() != cg.subgraph.num_edges() {
            return Err(Error::DimensionMismatch(format!(
                "{} mask values for {} computation-graph edges",
                values.len(),
                cg.subgraph.num_edges()
            )));
        }
        let edges: Vec<(usize, usize)> = (0..values.len()).map(|e| cg.global_edge(e)).collect();
        Ok(Explanation {
            edge_mask: EdgeMask::new(values, explainer, cg.target)?,
            feature_mask,
            edges,
            target: cg.target,
            target_label,
            explainer: explainer.to_string(),
            focus: Focus::Model,
            time_ms,
        })
    }

    pub fn with_focus(mut self, focus: Focus) -> Explanation {
        self.focus = focus;
        self
    }

    pub fn with_time_ms(mut self, time_ms: f64) -> Explanation {
        self.time_ms = time_ms;
        self
    }

    /// Serializes to the interchange schema: {target, explainer, focus,
    /// edges: [[src, dst, weight], ...], feature_mask?, time_ms}.
    pub fn to_json(&self) -> Value {
        let edges: Vec<Value> = self
            .edges
            .iter()
            .zip(&self.edge_mask.values)
            .map(|(&(s, d), &w)| json!([s, d, w]))
            .collect();
        let mut obj = json!({
            "target": self.target,
            "explainer": self.explainer,
            "focus": self.focus.as_str(),
            "edges": edges,
            "time_ms": self.time_ms,
        });
        if let Some(fm) = &self.feature_mask {
            obj["feature_mask"] = json!(fm.values);
        }
        obj
    }
}

/// Validates the shared preconditions of every explainer call.
fn check_request(cg: &ComputationGraph, target: usize, target_label: usize, classes: usize) -> Result<()> {
    if target != cg.target {
        return Err(Error::InvalidParameter(format!(
            "target {target} is not the computation graph's target {}",
            cg.target
        )));
    }
    if target_label >= classes {
        return Err(Error::InvalidParameter(format!(
            "target label {target_label} outside 0..{classes}"
        )));
    }
    Ok(())
}

/// Explainer selection plus its parameter overrides.
///
/// Known names: random, distance, pagerank, saliency,
/// integrated_gradients, gradcam, occlusion, gnnexplainer,
/// gnnexplainer_basic. Unknown names and unknown parameter keys are
/// rejected at construction.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExplainerSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

impl ExplainerSpec {
    pub fn by_name(name: &str) -> Result<ExplainerSpec> {
        let spec = ExplainerSpec {
            name: name.to_string(),
            params: BTreeMap::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn all_names() -> &'static [&'static str] {
        &[
            "random",
            "distance",
            "pagerank",
            "saliency",
            "integrated_gradients",
            "gradcam",
            "occlusion",
            "gnnexplainer",
            "gnnexplainer_basic",
        ]
    }

    fn allowed_params(name: &str) -> &'static [&'static str] {
        match name {
            "pagerank" => &["damping"],
            "integrated_gradients" => &["steps"],
            "gnnexplainer" | "gnnexplainer_basic" => {
                &["epochs", "lr", "lambda_size", "lambda_entropy"]
            }
            _ => &[],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !Self::all_names().contains(&self.name.as_str()) {
            return Err(Error::Config(format!(
                "unknown explainer {:?}; known: {}",
                self.name,
                Self::all_names().join(", ")
            )));
        }
        let allowed = Self::allowed_params(&self.name);
        for key in self.params.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown parameter {key:?} for explainer {:?}",
                    self.name
                )));
            }
        }
        if let Some(&d) = self.params.get("damping") {
            if !(0.0..1.0).contains(&d) || d <= 0.0 {
                return Err(Error::Config(format!("damping {d} outside (0, 1)")));
            }
        }
        if let Some(&s) = self.params.get("steps") {
            if s < 1.0 || s.fract() != 0.0 {
                return Err(Error::Config(format!("steps {s} must be a positive integer")));
            }
        }
        if let Some(&e) = self.params.get("epochs") {
            if e < 1.0 || e.fract() != 0.0 {
                return Err(Error::Config(format!("epochs {e} must be a positive integer")));
            }
        }
        if let Some(&lr) = self.params.get("lr") {
            if !(lr > 0.0) {
                return Err(Error::Config(format!("lr {lr} must be positive")));
            }
        }
        for key in ["lambda_size", "lambda_entropy"] {
            if let Some(&v) = self.params.get(key) {
                if v < 0.0 {
                    return Err(Error::Config(format!("{key} {v} must be non-negative")));
                }
            }
        }
        Ok(())
    }

    /// Runs the named explainer, stamping wall time and focus. The
    /// timer wraps only the explainer computation.
    pub fn explain(
        &self,
        model: &GcnModel,
        cg: &ComputationGraph,
        target: usize,
        target_label: usize,
        focus: Focus,
        seed: u64,
    ) -> Result<Explanation> {
        self.validate()?;
        let t0 = Instant::now();
        let explanation = match self.name.as_str() {
            "random" => explain_random(model, cg, target, target_label, seed),
            "distance" => explain_distance(model, cg, target, target_label, seed),
            "pagerank" => {
                let damping = self.params.get("damping").copied().unwrap_or(0.85);
                pagerank::explain_with_damping(model, cg, target, target_label, seed, damping)
            }
            "saliency" => explain_saliency(model, cg, target, target_label, seed),
            "integrated_gradients" => {
                let steps = self.params.get("steps").copied().unwrap_or(50.0) as usize;
                gradient::explain_ig_with_steps(model, cg, target, target_label, seed, steps)
            }
            "gradcam" => explain_gradcam(model, cg, target, target_label, seed),
            "occlusion" => explain_occlusion(model, cg, target, target_label, seed),
            "gnnexplainer" | "gnnexplainer_basic" => {
                let variant = if self.name == "gnnexplainer" {
                    GnnExplainerVariant::Full
                } else {
                    GnnExplainerVariant::Basic
                };
                let mut cfg = GnnExplainerConfig::default();
                if let Some(&e) = self.params.get("epochs") {
                    cfg.epochs = e as usize;
                }
                if let Some(&lr) = self.params.get("lr") {
                    cfg.lr = lr;
                }
                if let Some(&l1) = self.params.get("lambda_size") {
                    cfg.lambda_size = l1;
                }
                if let Some(&l2) = self.params.get("lambda_entropy") {
                    cfg.lambda_entropy = l2;
                }
                gnnexplainer::explain_with_config(
                    model,
                    cg,
                    target,
                    target_label,
                    seed,
                    variant,
                    &cfg,
                )
            }
            _ => unreachable!("validated above"),
        }?;
        let time_ms = t0.elapsed().as_secs_f64() * 1000.0;
        Ok(explanation.with_focus(focus).with_time_ms(time_ms))
    }
}

#[cfg(test)]
pub(crate) mod tests_support {
    use crate::gcn::{GcnModel, ModelShape};
    use crate::graph::Graph;

    /// Small random plain model sized to the graph, for explainer tests
    /// that need a working network but not a trained one.
    pub fn toy_model_for(g: &Graph) -> GcnModel {
        let shape = ModelShape {
            num_layers: 3,
            feature_dim: g.feature_dim(),
            hidden_dim: 8,
            num_classes: g.num_classes().max(2),
            dropout: 0.0,
            batch_norm: false,
        };
        GcnModel::init(&shape, 42).expect("valid toy shape")
    }
}
