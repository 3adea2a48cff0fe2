//! Occlusion explainer: score each undirected pair by how much removing
//! it drops the target's probability at the explained class.

use crate::error::Result;
use crate::gcn::{predict_target, GcnModel};
use crate::graph::ComputationGraph;
use crate::mask::normalize;

use super::{check_request, Explanation};

pub fn explain_occlusion(
    model: &GcnModel,
    cg: &ComputationGraph,
    target: usize,
    target_label: usize,
    _seed: u64,
) -> Result<Explanation> {
    check_request(cg, target, target_label, model.num_classes())?;
    let g = &cg.subgraph;
    let base = g.effective_weights();
    let p0 = predict_target(model, cg, &base)?[target_label];
    let mut values = vec![0.0; g.num_edges()];
    for e in 0..g.num_edges() {
        let (u, v) = g.edges()[e];
        if u > v {
            // Scored together with its reciprocal.
            continue;
        }
        let mut w = base.clone();
        w[e] = 0.0;
        let rev = g.edge_index(v, u);
        if let Some(r) = rev {
            w[r] = 0.0;
        }
        let p = predict_target(model, cg, &w)?[target_label];
        let drop = (p0 - p).max(0.0);
        values[e] = drop;
        if let Some(r) = rev {
            values[r] = drop;
        }
    }
    let values = normalize(&values)?;
    Explanation::from_values(values, None, cg, target_label, "occlusion", 0.0)
}
