//! Benchmark engine for input-level explainability of graph neural
//! networks on node classification.
//!
//! The crate covers the full loop: synthetic datasets with planted
//! ground-truth motifs ([`synthetic`]), a from-scratch GCN with exact
//! reverse-mode gradients ([`gcn`]), a suite of explanation methods
//! ([`explain`]), mask post-processing ([`mask`]), fidelity and
//! characterization metrics ([`metrics`]), and a declarative benchmark
//! harness ([`bench`]) behind the `gnnx` command-line tool.

pub mod bench;
pub mod bundle;
pub mod error;
pub mod explain;
pub mod gcn;
pub mod graph;
pub mod mask;
pub mod metrics;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
