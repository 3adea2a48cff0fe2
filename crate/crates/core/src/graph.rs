//! In-memory graph representation and structural queries.
//!
//! Edges are stored as a directed list sorted by `(src, dst)` with no
//! duplicates and no self-loops. Undirected graphs store both orientations
//! of every edge; [`Graph::build`] completes missing reciprocals. Edge
//! indices refer to positions in the sorted list and stay stable for the
//! lifetime of the graph, so masks and gradients can be kept as flat
//! vectors aligned with [`Graph::edges`].

use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Data split tag for a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidParameter(format!(
                "unknown split tag {other:?} (expected train, val or test)"
            ))),
        }
    }
}

/// Attributed graph with labels, split tags and optional edge weights.
#[derive(Debug, Clone)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    row_ptr: Vec<usize>,
    rev_perm: Vec<usize>,
    rev_row_ptr: Vec<usize>,
    features: Array2<f64>,
    labels: Vec<usize>,
    splits: Vec<Split>,
    edge_weights: Option<Vec<f64>>,
    num_classes: usize,
    undirected: bool,
}

impl Graph {
    /// Builds a graph from an edge list. Self-loops and duplicate input
    /// edges are rejected; when `undirected` is set, missing reciprocal
    /// orientations are added so both directions are always stored.
    /// The class count defaults to `max(label) + 1`.
    pub fn build(
        edges: Vec<(usize, usize)>,
        features: Array2<f64>,
        labels: Vec<usize>,
        splits: Vec<Split>,
        undirected: bool,
    ) -> Result<Graph> {
        let num_classes = labels.iter().max().map_or(1, |&m| m + 1);
        Graph::build_with_classes(edges, features, labels, splits, undirected, num_classes)
    }

    /// Same as [`Graph::build`] with an explicit class count, which must
    /// cover every label.
    pub fn build_with_classes(
        mut edges: Vec<(usize, usize)>,
        features: Array2<f64>,
        labels: Vec<usize>,
        splits: Vec<Split>,
        undirected: bool,
        num_classes: usize,
    ) -> Result<Graph> {
        let num_nodes = features.nrows();
        if labels.len() != num_nodes {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} nodes",
                labels.len(),
                num_nodes
            )));
        }
        if splits.len() != num_nodes {
            return Err(Error::DimensionMismatch(format!(
                "{} split tags for {} nodes",
                splits.len(),
                num_nodes
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidGraph(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        for &(s, d) in &edges {
            if s >= num_nodes {
                return Err(Error::NodeOutOfRange { node: s, num_nodes });
            }
            if d >= num_nodes {
                return Err(Error::NodeOutOfRange { node: d, num_nodes });
            }
            if s == d {
                return Err(Error::InvalidGraph(format!("self-loop at node {s}")));
            }
        }
        edges.sort_unstable();
        if let Some(w) = edges.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        if undirected {
            let present: std::collections::HashSet<(usize, usize)> =
                edges.iter().copied().collect();
            let missing: Vec<(usize, usize)> = edges
                .iter()
                .filter(|&&(s, d)| !present.contains(&(d, s)))
                .map(|&(s, d)| (d, s))
                .collect();
            edges.extend(missing);
            edges.sort_unstable();
        }

        let row_ptr = build_row_ptr(num_nodes, edges.iter().map(|&(s, _)| s));
        let mut rev_perm: Vec<usize> = (0..edges.len()).collect();
        rev_perm.sort_unstable_by_key(|&i| (edges[i].1, edges[i].0));
        let rev_row_ptr = build_row_ptr(num_nodes, rev_perm.iter().map(|&i| edges[i].1));

        Ok(Graph {
            num_nodes,
            edges,
            row_ptr,
            rev_perm,
            rev_row_ptr,
            features,
            labels,
            splits,
            edge_weights: None,
            num_classes,
            undirected,
        })
    }

    /// Attaches per-edge weights aligned with [`Graph::edges`]. Values must
    /// lie in `[0, 1]`.
    pub fn with_edge_weights(mut self, weights: Vec<f64>) -> Result<Graph> {
        if weights.len() != self.edges.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} edges",
                weights.len(),
                self.edges.len()
            )));
        }
        if let Some(&bad) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::InvalidParameter(format!(
                "edge weight {bad} outside [0, 1]"
            )));
        }
        self.edge_weights = Some(weights);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Directed edge list sorted by `(src, dst)`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn split_nodes(&self, split: Split) -> Vec<usize> {
        (0..self.num_nodes)
            .filter(|&v| self.splits[v] == split)
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn undirected(&self) -> bool {
        self.undirected
    }

    pub fn edge_weights(&self) -> Option<&[f64]> {
        self.edge_weights.as_deref()
    }

    /// Edge weights with 1.0 substituted when none are attached.
    pub fn effective_weights(&self) -> Vec<f64> {
        match &self.edge_weights {
            Some(w) => w.clone(),
            None => vec![1.0; self.edges.len()],
        }
    }

    /// Range of edge indices whose source is `u`; destinations are ascending
    /// within the range.
    pub fn out_range(&self, u: usize) -> std::ops::Range<usize> {
        self.row_ptr[u]..self.row_ptr[u + 1]
    }

    /// Edge indices whose destination is `u`, ordered by source.
    pub fn in_edges(&self, u: usize) -> &[usize] {
        &self.rev_perm[self.rev_row_ptr[u]..self.rev_row_ptr[u + 1]]
    }

    /// Out-degree: number of stored edges leaving `u`. For undirected graphs
    /// this equals the structural degree.
    pub fn degree(&self, u: usize) -> usize {
        self.row_ptr[u + 1] - self.row_ptr[u]
    }

    /// Index of edge `(u, v)` in the sorted list, if present.
    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        let range = self.out_range(u);
        let slice = &self.edges[range.clone()];
        slice
            .binary_search_by_key(&v, |&(_, d)| d)
            .ok()
            .map(|i| range.start + i)
    }

    /// Neighbors of `u` ignoring edge direction, ascending and deduplicated.
    pub fn undirected_neighbors(&self, u: usize) -> Vec<usize> {
        let out = self.edges[self.out_range(u)].iter().map(|&(_, d)| d);
        let inn = self.in_edges(u).iter().map(|&e| self.edges[e].0);
        let mut all: Vec<usize> = out.chain(inn).collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    pub(crate) fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.num_nodes {
            return Err(Error::NodeOutOfRange {
                node: v,
                num_nodes: self.num_nodes,
            });
        }
        Ok(())
    }
}

fn build_row_ptr(num_nodes: usize, srcs: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut counts = vec![0usize; num_nodes + 1];
    for s in srcs {
        counts[s + 1] += 1;
    }
    for i in 0..num_nodes {
        counts[i + 1] += counts[i];
    }
    counts
}

/// Subgraph induced by the receptive field of a target node, with the
/// bookkeeping needed to reproduce full-graph predictions locally.
///
/// `base_degrees` holds the full-graph structural degree plus one (the
/// self-loop) for every local node. Normalizing the local adjacency with
/// these degrees makes a forward pass over the subgraph agree exactly with
/// the full-graph forward pass at the target row, including at the boundary
/// where local degrees undercount.
#[derive(Debug, Clone)]
pub struct ComputationGraph {
    /// Local index -> global node id, strictly ascending.
    pub node_map: Vec<usize>,
    /// Local edge index -> global edge index, strictly ascending.
    pub edge_map: Vec<usize>,
    /// Induced subgraph over the local ids.
    pub subgraph: Graph,
    /// Full-graph degree + 1 per local node, used for normalization.
    pub base_degrees: Vec<f64>,
    /// Local index of the target node.
    pub target_local: usize,
    /// Global id of the target node.
    pub target: usize,
}

impl ComputationGraph {
    pub fn local_of(&self, global: usize) -> Option<usize> {
        self.node_map.binary_search(&global).ok()
    }

    /// Local edge endpoints as global ids.
    pub fn global_edge(&self, local_edge: usize) -> (usize, usize) {
        let (s, d) = self.subgraph.edges()[local_edge];
        (self.node_map[s], self.node_map[d])
    }
}

/// Extracts the `hops`-hop neighborhood of `target`, following edges in
/// both directions. `hops = 0` yields the single-node subgraph.
pub fn k_hop_subgraph(g: &Graph, target: usize, hops: usize) -> Result<ComputationGraph> {
    g.check_node(target)?;
    let mut dist: HashMap<usize, usize> = HashMap::new();
    dist.insert(target, 0);
    let mut frontier = vec![target];
    for h in 1..=hops {
        let mut next = Vec::new();
        for &u in &frontier {
            for v in g.undirected_neighbors(u) {
                if !dist.contains_key(&v) {
                    dist.insert(v, h);
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }

    let mut node_map: Vec<usize> = dist.keys().copied().collect();
    node_map.sort_unstable();
    let mut local: HashMap<usize, usize> = HashMap::with_capacity(node_map.len());
    for (i, &v) in node_map.iter().enumerate() {
        local.insert(v, i);
    }

    let mut local_edges = Vec::new();
    let mut edge_map = Vec::new();
    for (lsrc, &gsrc) in node_map.iter().enumerate() {
        for e in g.out_range(gsrc) {
            let (_, gdst) = g.edges()[e];
            if let Some(&ldst) = local.get(&gdst) {
                local_edges.push((lsrc, ldst));
                edge_map.push(e);
            }
        }
    }

    let features = g.features().select(ndarray::Axis(0), &node_map);
    let labels: Vec<usize> = node_map.iter().map(|&v| g.labels()[v]).collect();
    let splits: Vec<Split> = node_map.iter().map(|&v| g.splits()[v]).collect();
    let sub = Graph::build_with_classes(
        local_edges,
        features,
        labels,
        splits,
        g.undirected(),
        g.num_classes(),
    )?;
    debug_assert_eq!(sub.num_edges(), edge_map.len());

    let weights = g.edge_weights().map(|w| {
        edge_map.iter().map(|&e| w[e]).collect::<Vec<f64>>()
    });
    let sub = match weights {
        Some(w) => sub.with_edge_weights(w)?,
        None => sub,
    };

    let base_degrees: Vec<f64> = node_map
        .iter()
        .map(|&v| g.undirected_neighbors(v).len() as f64 + 1.0)
        .collect();
    let target_local = local[&target];

    Ok(ComputationGraph {
        node_map,
        edge_map,
        subgraph: sub,
        base_degrees,
        target_local,
        target,
    })
}

/// Breadth-first distances from `source` following edge direction.
/// Unreachable nodes map to `None`.
pub fn bfs_distances(g: &Graph, source: usize) -> Result<Vec<Option<usize>>> {
    g.check_node(source)?;
    let mut dist = vec![None; g.num_nodes()];
    dist[source] = Some(0);
    let mut queue = std::collections::VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for e in g.out_range(u) {
            let (_, v) = g.edges()[e];
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    Ok(dist)
}

/// Number of connected components of the node set touched by `edges`,
/// treating edges as undirected. The empty set has zero components.
pub fn connected_components(edges: &[(usize, usize)]) -> usize {
    let mut parent: HashMap<usize, usize> = HashMap::new();
    fn find(parent: &mut HashMap<usize, usize>, x: usize) -> usize {
        let p = *parent.entry(x).or_insert(x);
        if p == x {
            return x;
        }
        let root = find(parent, p);
        parent.insert(x, root);
        root
    }
    let mut count = 0usize;
    for &(u, v) in edges {
        for x in [u, v] {
            if !parent.contains_key(&x) {
                parent.insert(x, x);
                count += 1;
            }
        }
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru != rv {
            parent.insert(ru, rv);
            count -= 1;
        }
    }
    count
}

/// One undirected pair of reciprocal edge indices. `first` is the lower
/// edge index; `second` is the reciprocal orientation when stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgePair {
    pub first: usize,
    pub second: Option<usize>,
    /// Endpoints with the smaller node id first.
    pub nodes: (usize, usize),
}

/// Groups a directed edge list into undirected pairs, ordered by the lower
/// edge index of each pair. Works on any edge list whose indices are
/// positions in `edges`.
pub fn pair_reciprocals(edges: &[(usize, usize)]) -> Vec<EdgePair> {
    let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(edges.len());
    for (i, &(s, d)) in edges.iter().enumerate() {
        index.insert((s, d), i);
    }
    let mut pairs = Vec::new();
    let mut seen = vec![false; edges.len()];
    for (i, &(s, d)) in edges.iter().enumerate() {
        if seen[i] {
            continue;
        }
        seen[i] = true;
        let second = index.get(&(d, s)).copied().filter(|&j| j != i);
        if let Some(j) = second {
            seen[j] = true;
        }
        pairs.push(EdgePair {
            first: i,
            second,
            nodes: (s.min(d), s.max(d)),
        });
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn grid_features(n: usize) -> Array2<f64> {
        Array2::from_elem((n, 2), 1.0)
    }

    fn simple(edges: Vec<(usize, usize)>, n: usize, undirected: bool) -> Result<Graph> {
        Graph::build(
            edges,
            grid_features(n),
            vec![0; n],
            vec![Split::Train; n],
            undirected,
        )
    }

    #[test]
    fn reciprocal_completion() {
        let g = simple(vec![(0, 1)], 2, true).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 0)]);
    }

    #[test]
    fn rejects_self_loop() {
        assert!(matches!(
            simple(vec![(1, 1)], 2, false),
            Err(Error::InvalidGraph(_))
        ));
    }

    #[test]
    fn rejects_duplicate_edge() {
        assert!(matches!(
            simple(vec![(0, 1), (0, 1)], 2, false),
            Err(Error::InvalidGraph(_))
        ));
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(
            simple(vec![(0, 5)], 2, false),
            Err(Error::NodeOutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_label_row_mismatch() {
        let r = Graph::build(
            vec![(0, 1)],
            grid_features(3),
            vec![0, 0],
            vec![Split::Train; 3],
            false,
        );
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn edge_index_lookup() {
        let g = simple(vec![(0, 1), (0, 2), (2, 1)], 3, true).unwrap();
        for (i, &(s, d)) in g.edges().iter().enumerate() {
            assert_eq!(g.edge_index(s, d), Some(i));
        }
        assert_eq!(g.edge_index(1, 1), None);
    }

    #[test]
    fn khop_on_path() {
        // Path 0-1-2-3-4, target 2, 1 hop.
        let g = simple(vec![(0, 1), (1, 2), (2, 3), (3, 4)], 5, true).unwrap();
        let cg = k_hop_subgraph(&g, 2, 1).unwrap();
        assert_eq!(cg.node_map, vec![1, 2, 3]);
        assert_eq!(cg.subgraph.edges(), &[(0, 1), (1, 0), (1, 2), (2, 1)]);
        assert_eq!(cg.target_local, 1);
        // Interior node keeps a full-degree count, boundary nodes keep theirs.
        assert_eq!(cg.base_degrees, vec![3.0, 3.0, 3.0]);
    }

    #[test]
    fn khop_isolated_target() {
        let g = simple(vec![(0, 1)], 3, true).unwrap();
        let cg = k_hop_subgraph(&g, 2, 3).unwrap();
        assert_eq!(cg.node_map, vec![2]);
        assert!(cg.subgraph.edges().is_empty());
        assert_eq!(cg.target_local, 0);
    }

    #[test]
    fn khop_zero_hops() {
        let g = simple(vec![(0, 1)], 2, true).unwrap();
        let cg = k_hop_subgraph(&g, 0, 0).unwrap();
        assert_eq!(cg.node_map, vec![0]);
        assert!(cg.subgraph.edges().is_empty());
    }

    #[test]
    fn bfs_on_path_and_unreachable() {
        let g = simple(vec![(0, 1), (1, 2)], 4, true).unwrap();
        let d = bfs_distances(&g, 0).unwrap();
        assert_eq!(d, vec![Some(0), Some(1), Some(2), None]);
    }

    #[test]
    fn bfs_follows_direction() {
        let g = simple(vec![(0, 1)], 2, false).unwrap();
        assert_eq!(bfs_distances(&g, 1).unwrap(), vec![None, Some(0)]);
    }

    #[test]
    fn components_examples() {
        assert_eq!(connected_components(&[]), 0);
        assert_eq!(connected_components(&[(0, 1), (1, 2)]), 1);
        assert_eq!(connected_components(&[(0, 1), (2, 3)]), 2);
        assert_eq!(connected_components(&[(0, 1), (1, 0)]), 1);
    }

    #[test]
    fn pairing_groups_reciprocals() {
        let g = simple(vec![(0, 1), (1, 2)], 3, true).unwrap();
        let pairs = pair_reciprocals(g.edges());
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].nodes, (0, 1));
        assert_eq!(pairs[1].nodes, (1, 2));
        for p in pairs {
            assert!(p.second.is_some());
        }
    }

    #[test]
    fn pairing_keeps_one_sided_edges() {
        let pairs = pair_reciprocals(&[(0, 1), (2, 0)]);
        assert_eq!(pairs.len(), 2);
        assert!(pairs.iter().all(|p| p.second.is_none()));
    }

    /// Reference component count by depth-first search over an adjacency map.
    fn components_dfs(edges: &[(usize, usize)]) -> usize {
        use std::collections::{BTreeMap, BTreeSet};
        let mut adj: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for &(u, v) in edges {
            adj.entry(u).or_default().insert(v);
            adj.entry(v).or_default().insert(u);
        }
        let mut seen = BTreeSet::new();
        let mut count = 0;
        let nodes: Vec<usize> = adj.keys().copied().collect();
        for start in nodes {
            if seen.contains(&start) {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                if !seen.insert(u) {
                    continue;
                }
                for &v in &adj[&u] {
                    if !seen.contains(&v) {
                        stack.push(v);
                    }
                }
            }
        }
        count
    }

    proptest! {
        #[test]
        fn components_match_dfs(edges in proptest::collection::vec((0usize..30, 0usize..30), 0..50)) {
            let edges: Vec<(usize, usize)> = edges.into_iter().filter(|&(u, v)| u != v).collect();
            prop_assert_eq!(connected_components(&edges), components_dfs(&edges));
        }

        #[test]
        fn khop_nodes_grow_with_hops(
            raw in proptest::collection::vec((0usize..15, 0usize..15), 1..40),
            target in 0usize..15,
            hops in 0usize..4,
        ) {
            let mut edges: Vec<(usize, usize)> = raw.into_iter().filter(|&(u, v)| u != v).collect();
            edges.sort_unstable();
            edges.dedup();
            let g = simple(edges, 15, true).unwrap();
            let a = k_hop_subgraph(&g, target, hops).unwrap();
            let b = k_hop_subgraph(&g, target, hops + 1).unwrap();
            prop_assert!(a.node_map.iter().all(|v| b.node_map.contains(v)));
            prop_assert!(a.node_map.contains(&target));
            // Node and edge maps are strictly ascending (bijections onto images).
            prop_assert!(a.node_map.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(a.edge_map.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn khop_matches_bfs_ball(
            raw in proptest::collection::vec((0usize..12, 0usize..12), 1..30),
            target in 0usize..12,
            hops in 0usize..4,
        ) {
            let mut edges: Vec<(usize, usize)> = raw.into_iter().filter(|&(u, v)| u != v).collect();
            edges.sort_unstable();
            edges.dedup();
            let g = simple(edges, 12, true).unwrap();
            let cg = k_hop_subgraph(&g, target, hops).unwrap();
            let dist = bfs_distances(&g, target).unwrap();
            let expected: Vec<usize> = (0..12)
                .filter(|&v| dist[v].is_some_and(|d| d <= hops))
                .collect();
            prop_assert_eq!(cg.node_map, expected);
        }
    }
}
