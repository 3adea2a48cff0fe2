//! Random baseline: uniform values for every edge and feature dimension.

use rand::Rng;

use crate::error::Result;
use crate::gcn::GcnModel;
use crate::graph::ComputationGraph;
use crate::mask::{normalize, FeatureMask};
use crate::rng;

use super::{check_request, Explanation};

/// Stream tag for explanation draws.
const TAG: u64 = 0xE1;

pub fn explain_random(
    model: &GcnModel,
    cg: &ComputationGraph,
    target: usize,
    target_label: usize,
    seed: u64,
) -> Result<Explanation> {
    check_request(cg, target, target_label, model.num_classes())?;
    let mut r = rng::stream(rng::mix(&[seed, target as u64]), TAG);
    let raw: Vec<f64> = (0..cg.subgraph.num_edges()).map(|_| r.random::<f64>()).collect();
    let feat: Vec<f64> = (0..cg.subgraph.feature_dim()).map(|_| r.random::<f64>()).collect();
    let values = normalize(&raw)?;
    let feature_mask = Some(FeatureMask::new(normalize(&feat)?)?);
    Explanation::from_values(values, feature_mask, cg, target_label, "random", 0.0)
}

#[cfg(test)]
mod tests {
    use crate::graph::k_hop_subgraph;
    use crate::synthetic::{generate, named_spec};

    use super::super::explain_random;
    use super::super::tests_support::toy_model_for;

    #[test]
    fn deterministic_and_bounded() {
        let (g, gt) = generate(&named_spec("ba_house").unwrap()).unwrap();
        let model = toy_model_for(&g);
        let target = gt.motif_nodes()[0];
        let cg = k_hop_subgraph(&g, target, model.num_layers()).unwrap();
        let a = explain_random(&model, &cg, target, g.labels()[target], 7).unwrap();
        let b = explain_random(&model, &cg, target, g.labels()[target], 7).unwrap();
        assert_eq!(a.edge_mask.values, b.edge_mask.values);
        assert_eq!(a.feature_mask, b.feature_mask);
        assert!(a.edge_mask.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    /// Two seeds agreeing on 10+ continuous draws has probability ~0.
    #[test]
    fn different_seeds_differ() {
        let (g, gt) = generate(&named_spec("ba_house").unwrap()).unwrap();
        let model = toy_model_for(&g);
        let target = gt.motif_nodes()[1];
        let cg = k_hop_subgraph(&g, target, model.num_layers()).unwrap();
        assert!(cg.subgraph.num_edges() >= 10);
        let a = explain_random(&model, &cg, target, g.labels()[target], 1).unwrap();
        let b = explain_random(&model, &cg, target, g.labels()[target], 2).unwrap();
        assert_ne!(a.edge_mask.values, b.edge_mask.values);
    }
}
