//! Scratch probe: per-seed test accuracy for the synthetic recipe.

use gnnx::gcn::{train, ModelShape, TrainConfig};
use gnnx::synthetic::{generate, named_spec};

fn main() {
    for name in ["ba_house", "tree_grid"] {
        let (g, _) = generate(&named_spec(name).unwrap()).unwrap();
        let shape = ModelShape::synthetic(g.feature_dim(), g.num_classes());
        let mut accs = Vec::new();
        let t0 = std::time::Instant::now();
        for seed in 0..5u64 {
            let cfg = TrainConfig { seed, ..TrainConfig::default() };
            let out = train(&g, &shape, &cfg).unwrap();
            accs.push(out.report.accuracy);
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        println!(
            "{name:10} mean={mean:.4} per-seed={:?} ({:.1}s total)",
            accs.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            t0.elapsed().as_secs_f64()
        );
    }
}
