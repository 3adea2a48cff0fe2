//! Declarative benchmark harness.
//!
//! Turns an [`ExperimentConfig`] into a resumable sweep over seeds,
//! explainers, and nodes ([`run`]), aggregates the resulting records
//! into leaderboards and curves ([`aggregate`]), renders reports
//! ([`write_report`]), and answers "which explainer should I use here"
//! ([`recommend`]).

mod aggregate;
mod config;
mod records;
mod report;
mod runner;

pub use aggregate::{
    aggregate, recommend, AggregateOptions, Aggregates, CurvePoint, CurveSeries, EfficiencyPoint,
    ExplainerSummary, ExplanationNeed, Leaderboard, Recommendation, SettingCell,
};
pub use config::{DatasetSource, ExperimentConfig, ModelSource, NodePolicy, TrainRecipe};
pub use records::{
    read_records, write_records, EvalRecord, RECORDS_FILE, RECORDS_HEADER, SKIPS_FILE,
};
pub use report::{canonical_sort, render_markdown, write_report, ReportFormat};
pub use runner::{
    build_models, load_dataset, run, select_nodes, LoadedDataset, RunArtifacts, SKIPS_HEADER,
};

#[cfg(test)]
mod tests;
