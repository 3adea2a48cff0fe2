//! Report rendering: canonical records CSV, JSON aggregates, and a
//! markdown leaderboard.

use std::path::{Path, PathBuf};

use crate::bench::aggregate::{aggregate, AggregateOptions, Aggregates};
use crate::bench::records::{write_records, EvalRecord};
use crate::error::{Error, Result};
use crate::metrics::{Focus, MaskNature};

/// Output flavor of `report`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Md,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<ReportFormat> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "md" => Ok(ReportFormat::Md),
            other => Err(Error::InvalidParameter(format!(
                "unknown report format {other:?}; expected csv, json or md"
            ))),
        }
    }
}

fn focus_idx(f: Focus) -> usize {
    match f {
        Focus::Phenomenon => 0,
        Focus::Model => 1,
    }
}

fn nature_idx(n: MaskNature) -> usize {
    match n {
        MaskNature::Hard => 0,
        MaskNature::Soft => 1,
    }
}

/// Sorts records into a canonical order so any permutation of the same
/// record set serializes to the same bytes.
pub fn canonical_sort(records: &mut [EvalRecord]) {
    records.sort_by(|a, b| {
        (
            &a.dataset,
            a.seed,
            &a.explainer,
            a.node,
            focus_idx(a.focus),
            a.k,
            nature_idx(a.mask_nature),
        )
            .cmp(&(
                &b.dataset,
                b.seed,
                &b.explainer,
                b.node,
                focus_idx(b.focus),
                b.k,
                nature_idx(b.mask_nature),
            ))
    });
}

fn setting_heading(focus: Focus, nature: MaskNature) -> String {
    format!("{} {}", focus.as_str(), nature.as_str())
}

/// Renders the leaderboard as a markdown table, one row per explainer.
pub fn render_markdown(agg: &Aggregates) -> String {
    let settings: [(Focus, MaskNature); 4] = [
        (Focus::Phenomenon, MaskNature::Hard),
        (Focus::Phenomenon, MaskNature::Soft),
        (Focus::Model, MaskNature::Hard),
        (Focus::Model, MaskNature::Soft),
    ];
    let mut out = format!(
        "# Explainer leaderboard (k = {})\n\n",
        agg.leaderboard.reference_k
    );
    out.push_str("| rank | explainer | characterization |");
    for (f, n) in settings {
        out.push_str(&format!(" {} |", setting_heading(f, n)));
    }
    out.push_str(" mean time (ms) | tags |\n");
    out.push_str("|---:|---|---|");
    out.push_str(&"---|".repeat(settings.len()));
    out.push_str("---:|---|\n");
    for e in &agg.leaderboard.entries {
        let mut row = format!(
            "| {} | {} | {:.3} ± {:.3} |",
            e.rank, e.explainer, e.charact_mean, e.charact_std
        );
        let mut tags: Vec<String> = Vec::new();
        for (f, n) in settings {
            match e.cells.iter().find(|c| c.focus == f && c.mask_nature == n) {
                Some(c) => {
                    row.push_str(&format!(" {:.3} |", c.charact_mean));
                    for t in &c.tags {
                        let tagged = format!("{t} ({})", setting_heading(f, n));
                        if !tags.contains(&tagged) {
                            tags.push(tagged);
                        }
                    }
                }
                None => row.push_str(" - |"),
            }
        }
        row.push_str(&format!(" {:.1} |", e.mean_time_ms));
        if tags.is_empty() {
            row.push_str(" - |\n");
        } else {
            row.push_str(&format!(" {} |\n", tags.join(", ")));
        }
        out.push_str(&row);
    }
    out
}

/// Writes one report file into `out_dir` and returns its path: the
/// canonical records CSV, the JSON aggregates, or the markdown
/// leaderboard.
pub fn write_report(
    records: &[EvalRecord],
    opts: &AggregateOptions,
    out_dir: &Path,
    format: ReportFormat,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    match format {
        ReportFormat::Csv => {
            let path = out_dir.join("report.csv");
            let mut sorted = records.to_vec();
            canonical_sort(&mut sorted);
            write_records(&path, &sorted)?;
            Ok(path)
        }
        ReportFormat::Json => {
            let path = out_dir.join("report.json");
            let agg = aggregate(records, opts)?;
            let text = serde_json::to_string_pretty(&agg)?;
            std::fs::write(&path, text + "\n")?;
            Ok(path)
        }
        ReportFormat::Md => {
            let path = out_dir.join("report.md");
            let agg = aggregate(records, opts)?;
            std::fs::write(&path, render_markdown(&agg))?;
            Ok(path)
        }
    }
}
