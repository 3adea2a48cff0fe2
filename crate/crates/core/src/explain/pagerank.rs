//! Personalized PageRank centered on the target node.

use crate::error::Result;
use crate::gcn::GcnModel;
use crate::graph::{ComputationGraph, Graph};
use crate::mask::node_to_edge;

use super::{check_request, Explanation};

const L1_TOL: f64 = 1e-10;
const MAX_ITERS: usize = 200;

/// Power iteration for personalized PageRank with the restart
/// distribution concentrated on `source`. Dangling mass restarts on the
/// source as well. Stops when the L1 change drops below 1e-10 or after
/// 200 iterations.
pub fn pagerank_scores(g: &Graph, source: usize, damping: f64) -> Result<Vec<f64>> {
    g.check_node(source)?;
    let n = g.num_nodes();
    let out_deg: Vec<usize> = (0..n).map(|u| g.degree(u)).collect();
    let mut pr = vec![0.0; n];
    pr[source] = 1.0;
    for _ in 0..MAX_ITERS {
        let mut next = vec![0.0; n];
        let mut dangling = 0.0;
        for u in 0..n {
            if out_deg[u] == 0 {
                dangling += pr[u];
                continue;
            }
            let share = damping * pr[u] / out_deg[u] as f64;
            for e in g.out_range(u) {
                let (_, v) = g.edges()[e];
                next[v] += share;
            }
        }
        next[source] += 1.0 - damping + damping * dangling;
        let delta: f64 = next.iter().zip(&pr).map(|(a, b)| (a - b).abs()).sum();
        pr = next;
        if delta < L1_TOL {
            break;
        }
    }
    Ok(pr)
}

pub fn explain_pagerank(
    model: &GcnModel,
    cg: &ComputationGraph,
    target: usize,
    target_label: usize,
    seed: u64,
) -> Result<Explanation> {
    explain_with_damping(model, cg, target, target_label, seed, 0.85)
}

pub(super) fn explain_with_damping(
    model: &GcnModel,
    cg: &ComputationGraph,
    target: usize,
    target_label: usize,
    _seed: u64,
    damping: f64,
) -> Result<Explanation> {
    check_request(cg, target, target_label, model.num_classes())?;
    let scores = pagerank_scores(&cg.subgraph, cg.target_local, damping)?;
    let values = node_to_edge(&scores, cg)?;
    Explanation::from_values(values, None, cg, target_label, "pagerank", 0.0)
}
