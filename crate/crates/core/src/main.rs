//! Command-line front end: dataset generation, model training, the
//! benchmark sweep, report rendering, and explainer recommendation.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use gnnx::bench::{
    aggregate, read_records, recommend, run, AggregateOptions, DatasetSource, ExperimentConfig,
    ExplanationNeed, ModelSource, ReportFormat, TrainRecipe, RECORDS_FILE,
};
use gnnx::bundle::{load_bundle, write_bundle};
use gnnx::gcn::{save_checkpoint, train};
use gnnx::metrics::{Focus, MaskNature};
use gnnx::synthetic::{generate, known_dataset_names, named_spec, SyntheticSpec};
use gnnx::{Error, Result};

#[derive(Parser)]
#[command(
    name = "gnnx",
    about = "Benchmarking engine for input-level GNN explainability",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset bundle.
    Generate {
        /// Built-in dataset name or path to a generator spec JSON file.
        #[arg(long)]
        spec: String,
        /// Output bundle directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset bundle and save a checkpoint.
    Train {
        /// Dataset bundle directory.
        #[arg(long)]
        data: PathBuf,
        /// Path to a training recipe JSON file; defaults apply if omitted.
        #[arg(long)]
        recipe: Option<PathBuf>,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark sweep described by an experiment config.
    Explain {
        /// Dataset bundle directory; overrides the config's dataset.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Model checkpoint; overrides the config's model source.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Experiment config JSON file; defaults apply if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for records.csv and skips.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a report from a records directory.
    Report {
        /// Directory holding records.csv.
        #[arg(long)]
        records: PathBuf,
        /// Output flavor: csv, json, or md.
        #[arg(long, default_value = "md")]
        format: String,
    },
    /// Rank explainers for one evaluation setting.
    Recommend {
        /// Directory holding records.csv.
        #[arg(long)]
        records: PathBuf,
        /// Evaluation focus: phenomenon or model.
        #[arg(long)]
        focus: String,
        /// Mask nature: hard or soft.
        #[arg(long)]
        mask: String,
        /// What to optimize for: necessary, sufficient, or characterization.
        #[arg(long = "type")]
        need: String,
    },
}

fn resolve_spec(spec: &str) -> Result<SyntheticSpec> {
    if let Ok(s) = named_spec(spec) {
        return Ok(s);
    }
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad generator spec {}: {e}", path.display())));
    }
    Err(Error::Config(format!(
        "{spec:?} is neither a known dataset ({}) nor a spec file",
        known_dataset_names().join(", ")
    )))
}

fn cmd_generate(spec: &str, out: &Path) -> Result<()> {
    let spec = resolve_spec(spec)?;
    let (g, gt) = generate(&spec)?;
    write_bundle(out, &g, Some(&gt), Some(serde_json::to_value(&spec)?))?;
    println!(
        "wrote {} bundle to {} ({} nodes, {} edges, {} classes)",
        spec.name,
        out.display(),
        g.num_nodes(),
        g.edges().len(),
        g.num_classes()
    );
    Ok(())
}

fn cmd_train(data: &Path, recipe: Option<&Path>, out: &Path) -> Result<()> {
    let (g, _) = load_bundle(data)?;
    let recipe: TrainRecipe = match recipe {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("bad recipe {}: {e}", path.display())))?
        }
        None => TrainRecipe::default(),
    };
    recipe.validate()?;
    let shape = recipe.shape(g.feature_dim(), g.num_classes());
    let cfg = recipe.train_config(recipe.seed.unwrap_or(0));
    let outcome = train(&g, &shape, &cfg)?;
    save_checkpoint(&outcome.model, out)?;
    println!(
        "test accuracy {:.4}, macro F1 {:.4} (best epoch {}); checkpoint at {}",
        outcome.report.accuracy,
        outcome.report.f1_macro,
        outcome.best_epoch,
        out.display()
    );
    Ok(())
}

fn cmd_explain(
    data: Option<&Path>,
    model: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let mut cfg = match config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(data) = data {
        cfg.dataset = DatasetSource::Bundle {
            path: data.to_path_buf(),
        };
    }
    if let Some(model) = model {
        cfg.model = ModelSource::Checkpoint {
            path: model.to_path_buf(),
        };
    }
    let arts = run(&cfg, out)?;
    println!(
        "{} new records ({} resumed, {} tasks skipped) in {}",
        arts.new_records,
        arts.resumed_records,
        arts.skipped_tasks,
        arts.records_path.display()
    );
    Ok(())
}

fn cmd_report(records_dir: &Path, format: &str) -> Result<()> {
    let format = ReportFormat::parse(format)?;
    let records = read_records(&records_dir.join(RECORDS_FILE))?;
    let path = gnnx::bench::write_report(
        &records,
        &AggregateOptions::default(),
        records_dir,
        format,
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_recommend(records_dir: &Path, focus: &str, mask: &str, need: &str) -> Result<()> {
    let focus = Focus::parse(focus)?;
    let mask = MaskNature::parse(mask)?;
    let need = ExplanationNeed::parse(need)?;
    let records = read_records(&records_dir.join(RECORDS_FILE))?;
    let agg = aggregate(&records, &AggregateOptions::default())?;
    let ranked = recommend(&agg, focus, mask, need)?;
    println!(
        "explainers for {} focus, {} masks, ranked by {}:",
        focus.as_str(),
        mask.as_str(),
        need.as_str()
    );
    for (i, r) in ranked.iter().enumerate() {
        println!(
            "{:2}. {:<22} {:.4}  (fid+ {:.4}, fid- {:.4}, charact {:.4})",
            i + 1,
            r.explainer,
            r.value,
            r.fid_plus_acc,
            r.fid_minus_acc,
            r.charact
        );
    }
    Ok(())
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Generate { spec, out } => cmd_generate(spec, out),
        Command::Train { data, recipe, out } => cmd_train(data, recipe.as_deref(), out),
        Command::Explain {
            data,
            model,
            config,
            out,
        } => cmd_explain(data.as_deref(), model.as_deref(), config.as_deref(), out),
        Command::Report { records, format } => cmd_report(records, format),
        Command::Recommend {
            records,
            focus,
            mask,
            need,
        } => cmd_recommend(records, focus, mask, need),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = real_main() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
