//! Declarative experiment configuration: what to explain, with which
//! explainers, under which evaluation settings.
//!
//! A config is a plain JSON document mirroring [`ExperimentConfig`]. The
//! default value reproduces the reference benchmark: 100 motif nodes per
//! synthetic dataset, five seeds, a top-k sweep with undirected pair
//! selection, and equal weighting of the two fidelity directions in the
//! characterization score.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::ExplainerSpec;
use crate::gcn::{ModelShape, TrainConfig};
use crate::mask::TransformStrategy;
use crate::metrics::{Focus, MaskNature};

/// Where the graph under study comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// A built-in synthetic generator, referenced by name.
    Named { name: String },
    /// A directory bundle previously written by `generate`.
    Bundle { path: PathBuf },
}

impl DatasetSource {
    pub fn label(&self) -> String {
        match self {
            DatasetSource::Named { name } => name.clone(),
            DatasetSource::Bundle { path } => path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        }
    }
}

/// Architecture and optimizer settings used when the harness trains the
/// model itself rather than loading a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRecipe {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub batch_norm: bool,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Fixed training seed. When absent each evaluation seed trains its
    /// own model, so seed-to-seed variance covers the model as well.
    pub seed: Option<u64>,
}

impl Default for TrainRecipe {
    fn default() -> TrainRecipe {
        let cfg = TrainConfig::default();
        TrainRecipe {
            num_layers: 3,
            hidden_dim: 20,
            dropout: 0.0,
            batch_norm: true,
            epochs: cfg.epochs,
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            seed: None,
        }
    }
}

impl TrainRecipe {
    pub fn shape(&self, feature_dim: usize, num_classes: usize) -> ModelShape {
        ModelShape {
            num_layers: self.num_layers,
            feature_dim,
            hidden_dim: self.hidden_dim,
            num_classes,
            dropout: self.dropout,
            batch_norm: self.batch_norm,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            seed: self.seed.unwrap_or(seed),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::Config("train recipe needs at least one layer".into()));
        }
        if self.hidden_dim == 0 && self.num_layers > 1 {
            return Err(Error::Config("hidden_dim must be positive".into()));
        }
        self.train_config(0).validate()
    }
}

/// Where the trained model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSource {
    /// Load a checkpoint written by `train`.
    Checkpoint { path: PathBuf },
    /// Train in-process from the given recipe.
    Train {
        #[serde(default)]
        recipe: TrainRecipe,
    },
}

/// Which nodes of the test split get explained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodePolicy {
    /// Any test node.
    TestSplit,
    /// Test nodes that belong to a planted motif; requires ground truth.
    MotifOnly,
    /// Test nodes with the given true label.
    LabelFilter { class: usize },
    /// Test nodes the model classifies correctly on the full graph.
    CorrectOnly,
    /// Test nodes the model misclassifies on the full graph.
    WrongOnly,
}

impl NodePolicy {
    pub fn label(&self) -> String {
        match self {
            NodePolicy::TestSplit => "test_split".into(),
            NodePolicy::MotifOnly => "motif_only".into(),
            NodePolicy::LabelFilter { class } => format!("label_{class}"),
            NodePolicy::CorrectOnly => "correct_only".into(),
            NodePolicy::WrongOnly => "wrong_only".into(),
        }
    }
}

/// Full description of one benchmark run.
///
/// Records are produced for the cross product of seeds, explainers,
/// selected nodes, focuses, sweep sizes, and mask natures. For transform
/// strategies that take no size parameter (threshold, sparsity) the sweep
/// collapses to a single entry recorded as k = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub model: ModelSource,
    pub explainers: Vec<ExplainerSpec>,
    pub focus: Vec<Focus>,
    pub mask_nature: Vec<MaskNature>,
    pub strategy: TransformStrategy,
    pub k_sweep: Vec<usize>,
    pub num_nodes: usize,
    pub node_policy: NodePolicy,
    pub seeds: Vec<u64>,
    /// (w_plus, w_minus) for the characterization score; must sum to 1.
    pub weights: (f64, f64),
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetSource::Named {
                name: "ba_house".into(),
            },
            model: ModelSource::Train {
                recipe: TrainRecipe::default(),
            },
            explainers: ExplainerSpec::all_names()
                .iter()
                .map(|n| ExplainerSpec::by_name(n).expect("built-in name"))
                .collect(),
            focus: vec![Focus::Phenomenon, Focus::Model],
            mask_nature: vec![MaskNature::Hard, MaskNature::Soft],
            strategy: TransformStrategy::Topk {
                k: 10,
                directed: false,
            },
            k_sweep: vec![1, 5, 10, 15, 20, 25, 50, 100],
            num_nodes: 100,
            node_policy: NodePolicy::MotifOnly,
            seeds: vec![0, 1, 2, 3, 4],
            weights: (0.5, 0.5),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.explainers.is_empty() {
            return Err(Error::Config("config lists no explainers".into()));
        }
        for spec in &self.explainers {
            spec.validate()?;
        }
        let names: BTreeSet<&str> = self.explainers.iter().map(|s| s.name.as_str()).collect();
        if names.len() != self.explainers.len() {
            return Err(Error::Config("duplicate explainer in config".into()));
        }
        if self.focus.is_empty() {
            return Err(Error::Config("config lists no focus".into()));
        }
        if self.mask_nature.is_empty() {
            return Err(Error::Config("config lists no mask nature".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("config lists no seeds".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::Config("duplicate seed in config".into()));
        }
        if self.num_nodes == 0 {
            return Err(Error::Config("num_nodes must be positive".into()));
        }
        self.strategy.validate()?;
        if self.strategy.takes_k() {
            if self.k_sweep.is_empty() {
                return Err(Error::Config("k_sweep is empty".into()));
            }
            if self.k_sweep.iter().any(|&k| k == 0) {
                return Err(Error::Config("k_sweep entries must be positive".into()));
            }
            if self.k_sweep.iter().collect::<BTreeSet<_>>().len() != self.k_sweep.len() {
                return Err(Error::Config("duplicate k in k_sweep".into()));
            }
        }
        let (wp, wm) = self.weights;
        if !wp.is_finite() || !wm.is_finite() || wp < 0.0 || wm < 0.0 {
            return Err(Error::Config(
                "characterization weights must be finite and non-negative".into(),
            ));
        }
        if ((wp + wm) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "characterization weights must sum to 1, got {}",
                wp + wm
            )));
        }
        if let ModelSource::Train { recipe } = &self.model {
            recipe.validate()?;
        }
        Ok(())
    }

    /// Sweep entries actually evaluated: the configured k values for top-k
    /// strategies, a single placeholder otherwise.
    pub fn sweep(&self) -> Vec<usize> {
        if self.strategy.takes_k() {
            self.k_sweep.clone()
        } else {
            vec![0]
        }
    }

    pub fn from_path(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad experiment config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_path(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}
