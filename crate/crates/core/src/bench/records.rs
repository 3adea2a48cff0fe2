//! The per-node evaluation record and its on-disk CSV form.
//!
//! One record captures a single (dataset, explainer, seed, focus, mask
//! nature, strategy, k, node) cell. The CSV encoding is byte-stable:
//! re-running a finished experiment reproduces the file exactly except
//! for the wall-clock `time_ms` column.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Focus, MaskNature};

pub const RECORDS_FILE: &str = "records.csv";
pub const SKIPS_FILE: &str = "skips.csv";

pub const RECORDS_HEADER: &str = "dataset,explainer,seed,focus,mask_nature,strategy,k,node,\
fid_plus_acc,fid_minus_acc,fid_plus_prob,fid_minus_prob,charact,gt_f1,time_ms,\
mask_size,mask_entropy,mask_max,cc_ratio";

/// One evaluated cell of the benchmark cross product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub dataset: String,
    pub explainer: String,
    pub seed: u64,
    pub focus: Focus,
    pub mask_nature: MaskNature,
    pub strategy: String,
    pub k: usize,
    pub node: usize,
    pub fid_plus_acc: f64,
    pub fid_minus_acc: f64,
    pub fid_plus_prob: f64,
    pub fid_minus_prob: f64,
    pub charact: f64,
    /// Ground-truth F1 of the mask support; absent off-motif or without
    /// ground truth.
    pub gt_f1: Option<f64>,
    pub time_ms: f64,
    pub mask_size: usize,
    pub mask_entropy: f64,
    pub mask_max: f64,
    pub cc_ratio: f64,
}

/// Fixed-precision metric field; normalizes negative zero so equal values
/// always print identically.
pub(crate) fn fmt_metric(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

fn fmt_time(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

fn parse_field<T: std::str::FromStr>(name: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Records(format!("bad {name} field {s:?}")))
}

impl EvalRecord {
    /// Identity of the record within a run; two records with equal keys
    /// describe the same cell.
    pub fn key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}|{}|{}",
            self.dataset,
            self.explainer,
            self.seed,
            self.focus.as_str(),
            self.mask_nature.as_str(),
            self.strategy,
            self.k,
            self.node
        )
    }

    pub fn csv_line(&self) -> String {
        let gt = self.gt_f1.map(fmt_metric).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.dataset,
            self.explainer,
            self.seed,
            self.focus.as_str(),
            self.mask_nature.as_str(),
            self.strategy,
            self.k,
            self.node,
            fmt_metric(self.fid_plus_acc),
            fmt_metric(self.fid_minus_acc),
            fmt_metric(self.fid_plus_prob),
            fmt_metric(self.fid_minus_prob),
            fmt_metric(self.charact),
            gt,
            fmt_time(self.time_ms),
            self.mask_size,
            fmt_metric(self.mask_entropy),
            fmt_metric(self.mask_max),
            fmt_metric(self.cc_ratio),
        )
    }

    pub fn from_csv_line(line: &str) -> Result<EvalRecord> {
        let f: Vec<&str> = line.split(',').collect();
        let want = RECORDS_HEADER.split(',').count();
        if f.len() != want {
            return Err(Error::Records(format!(
                "record line has {} fields, expected {want}",
                f.len()
            )));
        }
        Ok(EvalRecord {
            dataset: f[0].to_string(),
            explainer: f[1].to_string(),
            seed: parse_field("seed", f[2])?,
            focus: Focus::parse(f[3])?,
            mask_nature: MaskNature::parse(f[4])?,
            strategy: f[5].to_string(),
            k: parse_field("k", f[6])?,
            node: parse_field("node", f[7])?,
            fid_plus_acc: parse_field("fid_plus_acc", f[8])?,
            fid_minus_acc: parse_field("fid_minus_acc", f[9])?,
            fid_plus_prob: parse_field("fid_plus_prob", f[10])?,
            fid_minus_prob: parse_field("fid_minus_prob", f[11])?,
            charact: parse_field("charact", f[12])?,
            gt_f1: if f[13].is_empty() {
                None
            } else {
                Some(parse_field("gt_f1", f[13])?)
            },
            time_ms: parse_field("time_ms", f[14])?,
            mask_size: parse_field("mask_size", f[15])?,
            mask_entropy: parse_field("mask_entropy", f[16])?,
            mask_max: parse_field("mask_max", f[17])?,
            cc_ratio: parse_field("cc_ratio", f[18])?,
        })
    }
}

/// Reads a records CSV, validating the header.
pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RECORDS_HEADER => {}
        Some(h) => {
            return Err(Error::Records(format!(
                "unexpected records header in {}: {h:?}",
                path.display()
            )))
        }
        None => return Err(Error::Records(format!("empty records file {}", path.display()))),
    }
    lines.map(EvalRecord::from_csv_line).collect()
}

/// Writes a complete records CSV (header plus one line per record).
pub fn write_records(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let mut text = String::from(RECORDS_HEADER);
    text.push('\n');
    for r in records {
        text.push_str(&r.csv_line());
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}
