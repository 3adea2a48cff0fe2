//! Graph-bundle directory format.
//!
//! A bundle is a directory holding `meta.json`, `edges.csv` (header
//! `src,dst`), `features.csv` (one row per node, no header), `labels.csv`
//! (header `node,label`), `splits.csv` (header `node,split`) and, when
//! ground truth exists, `groundtruth.json`. All CSVs are UTF-8 with LF
//! line endings. Writing is deterministic: regenerating the same dataset
//! yields byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::synthetic::GroundTruth;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleMeta {
    pub num_nodes: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub undirected: bool,
    /// Free-form provenance (e.g. the generating recipe); ignored by loads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthFile {
    motif_of: BTreeMap<String, usize>,
    members: BTreeMap<String, Vec<usize>>,
}

/// Writes `g` (and optional ground truth) as a bundle under `dir`,
/// creating the directory if needed.
pub fn write_bundle(
    dir: &Path,
    g: &Graph,
    gt: Option<&GroundTruth>,
    generator: Option<serde_json::Value>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = BundleMeta {
        num_nodes: g.num_nodes(),
        feature_dim: g.feature_dim(),
        num_classes: g.num_classes(),
        undirected: g.undirected(),
        generator,
    };
    write_json(&dir.join("meta.json"), &meta)?;

    let mut w = csv::Writer::from_path(dir.join("edges.csv"))?;
    w.write_record(["src", "dst"])?;
    for &(s, d) in g.edges() {
        w.write_record([s.to_string(), d.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(dir.join("features.csv"))?;
    for row in g.features().rows() {
        let fields: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        w.write_record(&fields)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("labels.csv"))?;
    w.write_record(["node", "label"])?;
    for (v, &l) in g.labels().iter().enumerate() {
        w.write_record([v.to_string(), l.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("splits.csv"))?;
    w.write_record(["node", "split"])?;
    for (v, s) in g.splits().iter().enumerate() {
        w.write_record([v.to_string(), s.as_str().to_string()])?;
    }
    w.flush()?;

    if let Some(gt) = gt {
        let (motif_of, members) = gt.to_file_repr();
        write_json(&dir.join("groundtruth.json"), &GroundTruthFile { motif_of, members })?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Loads a bundle directory, validating shape consistency against
/// `meta.json`.
pub fn load_bundle(dir: &Path) -> Result<(Graph, Option<GroundTruth>)> {
    let meta_path = dir.join("meta.json");
    let meta: BundleMeta = serde_json::from_str(
        &fs::read_to_string(&meta_path)
            .map_err(|e| Error::Bundle(format!("cannot read {}: {e}", meta_path.display())))?,
    )?;

    let edges = read_edges(&dir.join("edges.csv"))?;
    let features = read_features(&dir.join("features.csv"), meta.num_nodes, meta.feature_dim)?;
    let labels = read_keyed_column(&dir.join("labels.csv"), "label", meta.num_nodes, |s| {
        s.parse::<usize>()
            .map_err(|_| Error::Bundle(format!("bad label {s:?}")))
    })?;
    let splits = read_keyed_column(&dir.join("splits.csv"), "split", meta.num_nodes, |s| {
        Split::parse(s).map_err(|_| Error::Bundle(format!("bad split tag {s:?}")))
    })?;

    let g = Graph::build_with_classes(
        edges,
        features,
        labels,
        splits,
        meta.undirected,
        meta.num_classes,
    )?;

    let gt_path = dir.join("groundtruth.json");
    let gt = if gt_path.exists() {
        let file: GroundTruthFile = serde_json::from_str(&fs::read_to_string(&gt_path)?)?;
        Some(GroundTruth::from_file_repr(
            meta.num_nodes,
            &file.motif_of,
            &file.members,
        )?)
    } else {
        None
    };
    Ok((g, gt))
}

fn reader(path: &Path, headers: bool) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(headers)
        .from_path(path)
        .map_err(|e| Error::Bundle(format!("cannot open {}: {e}", path.display())))
}

fn expect_header(r: &mut csv::Reader<fs::File>, path: &Path, want: &[&str]) -> Result<()> {
    let got = r
        .headers()
        .map_err(|e| Error::Bundle(format!("{}: {e}", path.display())))?;
    if got.iter().collect::<Vec<_>>() != want {
        return Err(Error::Bundle(format!(
            "{}: expected header {:?}, found {:?}",
            path.display(),
            want.join(","),
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut r = reader(path, true)?;
    expect_header(&mut r, path, &["src", "dst"])?;
    let mut edges = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Bundle(format!(
                "{}: expected 2 fields, found {}",
                path.display(),
                rec.len()
            )));
        }
        let s = parse_node(&rec[0], path)?;
        let d = parse_node(&rec[1], path)?;
        edges.push((s, d));
    }
    Ok(edges)
}

fn parse_node(s: &str, path: &Path) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|_| Error::Bundle(format!("{}: bad node id {s:?}", path.display())))
}

fn read_features(path: &Path, num_nodes: usize, feature_dim: usize) -> Result<Array2<f64>> {
    let mut r = reader(path, false)?;
    let mut out = Array2::zeros((num_nodes, feature_dim));
    let mut row = 0usize;
    for rec in r.records() {
        let rec = rec?;
        if row >= num_nodes {
            return Err(Error::Bundle(format!(
                "{}: more than {num_nodes} feature rows",
                path.display()
            )));
        }
        if rec.len() != feature_dim {
            return Err(Error::Bundle(format!(
                "{}: row {row} has {} values, expected {feature_dim}",
                path.display(),
                rec.len()
            )));
        }
        for (c, field) in rec.iter().enumerate() {
            out[[row, c]] = field
                .parse::<f64>()
                .map_err(|_| Error::Bundle(format!("{}: bad value {field:?}", path.display())))?;
        }
        row += 1;
    }
    if row != num_nodes {
        return Err(Error::Bundle(format!(
            "{}: {row} feature rows for {num_nodes} nodes",
            path.display()
        )));
    }
    Ok(out)
}

/// Reads a `node,<value>` CSV covering every node exactly once.
fn read_keyed_column<T: Clone>(
    path: &Path,
    value_name: &str,
    num_nodes: usize,
    parse: impl Fn(&str) -> Result<T>,
) -> Result<Vec<T>> {
    let mut r = reader(path, true)?;
    expect_header(&mut r, path, &["node", value_name])?;
    let mut out: Vec<Option<T>> = vec![None; num_nodes];
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Bundle(format!(
                "{}: expected 2 fields, found {}",
                path.display(),
                rec.len()
            )));
        }
        let node = parse_node(&rec[0], path)?;
        if node >= num_nodes {
            return Err(Error::Bundle(format!(
                "{}: node {node} outside 0..{num_nodes}",
                path.display()
            )));
        }
        if out[node].is_some() {
            return Err(Error::Bundle(format!(
                "{}: duplicate row for node {node}",
                path.display()
            )));
        }
        out[node] = Some(parse(&rec[1])?);
    }
    out.into_iter()
        .enumerate()
        .map(|(v, x)| {
            x.ok_or_else(|| Error::Bundle(format!("{}: missing row for node {v}", path.display())))
        })
        .collect()
}
