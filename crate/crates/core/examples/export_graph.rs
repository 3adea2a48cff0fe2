//! Scratch export of a synthetic instance for cross-checking training
//! against an external implementation. Not part of the test suite.

use std::io::Write;

use gnnx::graph::Split;
use gnnx::synthetic::{generate, named_spec};

fn main() {
    for name in ["ba_house", "tree_grid"] {
        let (g, _) = generate(&named_spec(name).unwrap()).unwrap();
        let edges: Vec<Vec<usize>> = g.edges().iter().map(|&(u, v)| vec![u, v]).collect();
        let labels: Vec<usize> = g.labels().to_vec();
        let splits: Vec<&str> = (0..g.num_nodes())
            .map(|v| match g.splits()[v] {
                Split::Train => "train",
                Split::Val => "val",
                Split::Test => "test",
            })
            .collect();
        let payload = serde_json::json!({
            "num_nodes": g.num_nodes(),
            "num_classes": g.num_classes(),
            "edges": edges,
            "labels": labels,
            "splits": splits,
        });
        let mut f = std::fs::File::create(format!("/tmp/{name}.json")).unwrap();
        writeln!(f, "{payload}").unwrap();
        println!("wrote /tmp/{name}.json");
    }
}
