//! Distance baseline: edges closer to the target score higher.

use crate::error::Result;
use crate::gcn::GcnModel;
use crate::graph::{bfs_distances, ComputationGraph};
use crate::mask::node_to_edge;

use super::{check_request, Explanation};

/// Node score 1/(1+d(v, target)), 0 for unreachable nodes, averaged
/// onto edges.
pub fn explain_distance(
    model: &GcnModel,
    cg: &ComputationGraph,
    target: usize,
    target_label: usize,
    _seed: u64,
) -> Result<Explanation> {
    check_request(cg, target, target_label, model.num_classes())?;
    let dist = bfs_distances(&cg.subgraph, cg.target_local)?;
    let scores: Vec<f64> = dist
        .iter()
        .map(|d| match d {
            Some(d) => 1.0 / (1.0 + *d as f64),
            None => 0.0,
        })
        .collect();
    let values = node_to_edge(&scores, cg)?;
    Explanation::from_values(values, None, cg, target_label, "distance", 0.0)
}
