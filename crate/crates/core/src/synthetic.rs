//! Synthetic node-classification datasets with planted ground-truth motifs.
//!
//! A dataset is a base graph (Barabasi-Albert or balanced binary tree) plus
//! `motif_count` copies of a fixed motif shape, each tethered to a uniformly
//! random base node by a single undirected edge. Node labels encode motif
//! membership (and role, for house and bottle), so the motif's internal
//! edges are the ground-truth explanation for its nodes. Features are
//! constant vectors: the task is solvable from structure alone.

use std::collections::{BTreeMap, HashSet};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::rng;

const STREAM_BASE: u64 = 0;
const STREAM_ATTACH: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_SPLITS: u64 = 3;

const TRAIN_FRACTION: f64 = 0.8;
const VAL_FRACTION: f64 = 0.1;

/// Fixed motif shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotifKind {
    House,
    Grid,
    Cycle,
    Bottle,
}

impl MotifKind {
    pub fn size(self) -> usize {
        match self {
            MotifKind::House | MotifKind::Bottle => 5,
            MotifKind::Cycle => 6,
            MotifKind::Grid => 9,
        }
    }

    /// Internal undirected edges, one orientation each, over local ids.
    pub fn pairs(self) -> Vec<(usize, usize)> {
        match self {
            // 4-cycle body with an apex joined to nodes 0 and 1.
            MotifKind::House => vec![(0, 1), (1, 2), (2, 3), (3, 0), (4, 0), (4, 1)],
            // 4-cycle body with a neck node joined to node 0 only.
            MotifKind::Bottle => vec![(0, 1), (1, 2), (2, 3), (3, 0), (4, 0)],
            MotifKind::Cycle => (0..6).map(|i| (i, (i + 1) % 6)).collect(),
            MotifKind::Grid => {
                let mut pairs = Vec::new();
                for r in 0..3 {
                    for c in 0..3 {
                        let v = r * 3 + c;
                        if c < 2 {
                            pairs.push((v, v + 1));
                        }
                        if r < 2 {
                            pairs.push((v, v + 3));
                        }
                    }
                }
                pairs
            }
        }
    }

    /// Class id per local node position. Base nodes take class 0; grid and
    /// cycle nodes share one class; house and bottle distinguish roles.
    pub fn roles(self) -> Vec<usize> {
        match self {
            MotifKind::House | MotifKind::Bottle => vec![1, 1, 2, 2, 3],
            MotifKind::Cycle => vec![1; 6],
            MotifKind::Grid => vec![1; 9],
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            MotifKind::House | MotifKind::Bottle => 4,
            MotifKind::Cycle | MotifKind::Grid => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MotifKind::House => "house",
            MotifKind::Grid => "grid",
            MotifKind::Cycle => "cycle",
            MotifKind::Bottle => "bottle",
        }
    }
}

/// Base graph family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseSpec {
    /// Preferential-attachment graph: `nodes` total, `attach` edges per
    /// arriving node.
    BarabasiAlbert { nodes: usize, attach: usize },
    /// Complete binary tree with `height` levels below the root
    /// (`2^(height+1) - 1` nodes).
    BalancedBinaryTree { height: usize },
}

impl BaseSpec {
    pub fn num_nodes(self) -> usize {
        match self {
            BaseSpec::BarabasiAlbert { nodes, .. } => nodes,
            BaseSpec::BalancedBinaryTree { height } => (1usize << (height + 1)) - 1,
        }
    }
}

/// Recipe for one synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub name: String,
    pub base: BaseSpec,
    pub motif: MotifKind,
    pub motif_count: usize,
    #[serde(default)]
    pub noise_edge_fraction: f64,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_feature_dim() -> usize {
    10
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.motif_count < 1 {
            return Err(Error::InvalidParameter(
                "motif_count must be at least 1".into(),
            ));
        }
        if self.feature_dim < 1 {
            return Err(Error::InvalidParameter(
                "feature_dim must be at least 1".into(),
            ));
        }
        if !(self.noise_edge_fraction >= 0.0 && self.noise_edge_fraction.is_finite()) {
            return Err(Error::InvalidParameter(
                "noise_edge_fraction must be a finite value >= 0".into(),
            ));
        }
        match self.base {
            BaseSpec::BarabasiAlbert { nodes, attach } => {
                if attach < 1 || attach >= nodes {
                    return Err(Error::InvalidParameter(format!(
                        "barabasi_albert requires 1 <= attach < nodes, got attach={attach}, nodes={nodes}"
                    )));
                }
            }
            BaseSpec::BalancedBinaryTree { height } => {
                if height < 1 || height > 30 {
                    return Err(Error::InvalidParameter(format!(
                        "balanced_binary_tree height {height} outside 1..=30"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn total_nodes(&self) -> usize {
        self.base.num_nodes() + self.motif_count * self.motif.size()
    }

    /// Overrides the generation seed, keeping everything else.
    pub fn with_seed(mut self, seed: u64) -> SyntheticSpec {
        self.seed = seed;
        self
    }
}

/// The five named dataset recipes. Names are matched case-insensitively
/// with `-` and `_` interchangeable.
pub fn named_spec(name: &str) -> Result<SyntheticSpec> {
    let key = name.to_ascii_lowercase().replace('-', "_");
    let (canonical, base, motif, motif_count) = match key.as_str() {
        "ba_house" => (
            "ba_house",
            BaseSpec::BarabasiAlbert { nodes: 300, attach: 5 },
            MotifKind::House,
            80,
        ),
        "ba_grid" => (
            "ba_grid",
            BaseSpec::BarabasiAlbert { nodes: 300, attach: 5 },
            MotifKind::Grid,
            80,
        ),
        "tree_cycle" => (
            "tree_cycle",
            BaseSpec::BalancedBinaryTree { height: 8 },
            MotifKind::Cycle,
            60,
        ),
        "tree_grid" => (
            "tree_grid",
            BaseSpec::BalancedBinaryTree { height: 8 },
            MotifKind::Grid,
            80,
        ),
        "ba_bottle" => (
            "ba_bottle",
            BaseSpec::BarabasiAlbert { nodes: 300, attach: 5 },
            MotifKind::Bottle,
            80,
        ),
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown dataset name {other:?} (known: ba_house, ba_grid, tree_cycle, tree_grid, ba_bottle)"
            )))
        }
    };
    Ok(SyntheticSpec {
        name: canonical.to_string(),
        base,
        motif,
        motif_count,
        noise_edge_fraction: 0.0,
        feature_dim: default_feature_dim(),
        seed: 0,
    })
}

pub fn known_dataset_names() -> &'static [&'static str] {
    &["ba_house", "ba_grid", "tree_cycle", "tree_grid", "ba_bottle"]
}

/// Motif membership of every node, and the member set of every motif.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    motif_of: Vec<Option<usize>>,
    members: Vec<Vec<usize>>,
}

impl GroundTruth {
    pub fn new(motif_of: Vec<Option<usize>>, members: Vec<Vec<usize>>) -> Result<GroundTruth> {
        for (node, &m) in motif_of.iter().enumerate() {
            if let Some(m) = m {
                if m >= members.len() {
                    return Err(Error::InvalidParameter(format!(
                        "node {node} assigned to motif {m} but only {} motifs exist",
                        members.len()
                    )));
                }
                if !members[m].contains(&node) {
                    return Err(Error::InvalidParameter(format!(
                        "node {node} assigned to motif {m} but missing from its member set"
                    )));
                }
            }
        }
        for (m, nodes) in members.iter().enumerate() {
            for &v in nodes {
                if motif_of.get(v).copied().flatten() != Some(m) {
                    return Err(Error::InvalidParameter(format!(
                        "motif {m} lists node {v} which does not map back to it"
                    )));
                }
            }
        }
        Ok(GroundTruth { motif_of, members })
    }

    pub fn motif_of(&self, node: usize) -> Option<usize> {
        self.motif_of.get(node).copied().flatten()
    }

    pub fn members(&self, motif: usize) -> &[usize] {
        &self.members[motif]
    }

    pub fn num_motifs(&self) -> usize {
        self.members.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.motif_of.len()
    }

    /// Nodes that belong to some motif, ascending.
    pub fn motif_nodes(&self) -> Vec<usize> {
        (0..self.motif_of.len())
            .filter(|&v| self.motif_of[v].is_some())
            .collect()
    }

    pub(crate) fn to_file_repr(&self) -> (BTreeMap<String, usize>, BTreeMap<String, Vec<usize>>) {
        let mut motif_of = BTreeMap::new();
        for (node, &m) in self.motif_of.iter().enumerate() {
            if let Some(m) = m {
                motif_of.insert(node.to_string(), m);
            }
        }
        let mut members = BTreeMap::new();
        for (m, nodes) in self.members.iter().enumerate() {
            members.insert(m.to_string(), nodes.clone());
        }
        (motif_of, members)
    }

    pub(crate) fn from_file_repr(
        num_nodes: usize,
        motif_of: &BTreeMap<String, usize>,
        members: &BTreeMap<String, Vec<usize>>,
    ) -> Result<GroundTruth> {
        let num_motifs = members.len();
        let mut member_lists = vec![Vec::new(); num_motifs];
        for (key, nodes) in members {
            let m: usize = key
                .parse()
                .map_err(|_| Error::Bundle(format!("bad motif id {key:?}")))?;
            if m >= num_motifs {
                return Err(Error::Bundle(format!(
                    "motif id {m} outside 0..{num_motifs} (ids must be dense)"
                )));
            }
            let mut nodes = nodes.clone();
            nodes.sort_unstable();
            member_lists[m] = nodes;
        }
        let mut map = vec![None; num_nodes];
        for (key, &m) in motif_of {
            let node: usize = key
                .parse()
                .map_err(|_| Error::Bundle(format!("bad node id {key:?}")))?;
            if node >= num_nodes {
                return Err(Error::Bundle(format!(
                    "ground-truth node {node} outside 0..{num_nodes}"
                )));
            }
            map[node] = Some(m);
        }
        GroundTruth::new(map, member_lists)
    }
}

/// Class for a node at `position` inside a motif of the given kind.
pub fn label_rule(motif: MotifKind, position: usize) -> Result<usize> {
    let roles = motif.roles();
    roles.get(position).copied().ok_or_else(|| {
        Error::InvalidParameter(format!(
            "position {position} outside motif {} of size {}",
            motif.as_str(),
            roles.len()
        ))
    })
}

/// Indices of all edges whose both endpoints lie in the target's motif.
pub fn groundtruth_edges(gt: &GroundTruth, g: &Graph, target: usize) -> Result<Vec<usize>> {
    let motif = gt.motif_of(target).ok_or(Error::NoGroundTruth(target))?;
    let members: HashSet<usize> = gt.members(motif).iter().copied().collect();
    let mut edges = Vec::new();
    for &u in gt.members(motif) {
        for e in g.out_range(u) {
            let (_, v) = g.edges()[e];
            if members.contains(&v) {
                edges.push(e);
            }
        }
    }
    edges.sort_unstable();
    Ok(edges)
}

/// Generates the dataset described by `spec`. Deterministic for a fixed
/// spec, including the seed.
pub fn generate(spec: &SyntheticSpec) -> Result<(Graph, GroundTruth)> {
    spec.validate()?;
    let base_n = spec.base.num_nodes();
    let mut pairs = match spec.base {
        BaseSpec::BarabasiAlbert { nodes, attach } => {
            barabasi_albert(nodes, attach, &mut rng::stream(spec.seed, STREAM_BASE))
        }
        BaseSpec::BalancedBinaryTree { height } => binary_tree(height),
    };

    let motif_size = spec.motif.size();
    let motif_pairs = spec.motif.pairs();
    let roles = spec.motif.roles();
    let total_nodes = spec.total_nodes();

    let mut labels = vec![0usize; total_nodes];
    let mut motif_of = vec![None; total_nodes];
    let mut members = Vec::with_capacity(spec.motif_count);

    let mut attach_rng = rng::stream(spec.seed, STREAM_ATTACH);
    for m in 0..spec.motif_count {
        let offset = base_n + m * motif_size;
        for &(a, b) in &motif_pairs {
            pairs.push((offset + a, offset + b));
        }
        let anchor = attach_rng.random_range(0..base_n);
        pairs.push((anchor, offset));
        let nodes: Vec<usize> = (0..motif_size).map(|i| offset + i).collect();
        for (i, &v) in nodes.iter().enumerate() {
            labels[v] = roles[i];
            motif_of[v] = Some(m);
        }
        members.push(nodes);
    }

    let noise_count = (spec.noise_edge_fraction * total_nodes as f64).floor() as usize;
    if noise_count > 0 {
        let mut existing: HashSet<(usize, usize)> = HashSet::new();
        for &(a, b) in &pairs {
            existing.insert((a.min(b), a.max(b)));
        }
        let mut noise_rng = rng::stream(spec.seed, STREAM_NOISE);
        let mut added = 0;
        let mut attempts = 0;
        while added < noise_count && attempts < noise_count * 200 {
            attempts += 1;
            let u = noise_rng.random_range(0..total_nodes);
            let v = noise_rng.random_range(0..total_nodes);
            if u == v {
                continue;
            }
            let key = (u.min(v), u.max(v));
            if existing.insert(key) {
                pairs.push(key);
                added += 1;
            }
        }
        if added < noise_count {
            log::warn!(
                "noise edge budget not met: placed {added} of {noise_count} edges"
            );
        }
    }

    let features = Array2::from_elem((total_nodes, spec.feature_dim), 1.0);
    let splits = random_splits(total_nodes, &mut rng::stream(spec.seed, STREAM_SPLITS));
    let graph = Graph::build_with_classes(
        pairs,
        features,
        labels,
        splits,
        true,
        spec.motif.num_classes(),
    )?;
    let gt = GroundTruth::new(motif_of, members)?;
    Ok((graph, gt))
}

/// Preferential attachment: the first `m` nodes seed the target pool, each
/// arriving node links to `m` distinct existing nodes drawn proportionally
/// to degree.
fn barabasi_albert(n: usize, m: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(m * (n - m));
    let mut repeated: Vec<usize> = Vec::new();
    let mut targets: Vec<usize> = (0..m).collect();
    for source in m..n {
        for &t in &targets {
            pairs.push((t, source));
        }
        repeated.extend(targets.iter().copied());
        repeated.extend(std::iter::repeat(source).take(m));
        if source + 1 < n {
            targets = distinct_sample(&repeated, m, rng);
        }
    }
    pairs
}

/// Draws `m` distinct values from the pool by rejection, returned sorted.
fn distinct_sample(pool: &[usize], m: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut chosen = std::collections::BTreeSet::new();
    while chosen.len() < m {
        let idx = rng.random_range(0..pool.len());
        chosen.insert(pool[idx]);
    }
    chosen.into_iter().collect()
}

/// Complete binary tree with nodes 0..2^(height+1)-1; node v has children
/// 2v+1 and 2v+2.
fn binary_tree(height: usize) -> Vec<(usize, usize)> {
    let n = (1usize << (height + 1)) - 1;
    let mut pairs = Vec::with_capacity(n - 1);
    for v in 0..n {
        for child in [2 * v + 1, 2 * v + 2] {
            if child < n {
                pairs.push((v, child));
            }
        }
    }
    pairs
}

/// Shuffles nodes and cuts 80/10/10 into train/val/test.
fn random_splits(n: usize, rng: &mut impl Rng) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    // Fisher-Yates, explicit so the draw sequence is frozen.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let train_end = (TRAIN_FRACTION * n as f64).floor() as usize;
    let val_end = train_end + (VAL_FRACTION * n as f64).floor() as usize;
    let mut splits = vec![Split::Train; n];
    for (rank, &v) in order.iter().enumerate() {
        splits[v] = if rank < train_end {
            Split::Train
        } else if rank < val_end {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}
