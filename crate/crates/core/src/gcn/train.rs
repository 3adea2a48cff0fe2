//! Adam training with validation-best checkpoint selection.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::rng;

use super::{
    loss_and_grads_scoped, normalize_adjacency, predict, ForwardMode, GcnModel, GradScope,
    ModelShape,
};

/// Optimization hyperparameters. The default is the recipe used for the
/// synthetic datasets: 1000 epochs, lr 0.001, weight decay 5e-3.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 1000,
            learning_rate: 1e-3,
            weight_decay: 5e-3,
            seed: 0,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "weight_decay {} must be non-negative",
                self.weight_decay
            )));
        }
        for b in [self.adam_betas.0, self.adam_betas.1] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidParameter(format!(
                    "adam beta {b} outside [0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Test-split classification metrics.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelReport {
    pub accuracy: f64,
    pub f1_macro: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GcnModel,
    pub report: ModelReport,
    pub best_epoch: usize,
    pub best_val_accuracy: Option<f64>,
    pub final_loss: f64,
}

/// First-moment/second-moment optimizer state over a list of matrices.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: usize,
}

impl Adam {
    pub fn new(shapes: &[(usize, usize)]) -> Adam {
        Adam {
            m: shapes.iter().map(|&d| Array2::zeros(d)).collect(),
            v: shapes.iter().map(|&d| Array2::zeros(d)).collect(),
            t: 0,
        }
    }

    pub fn for_model(model: &GcnModel) -> Adam {
        Adam::new(
            &model
                .params()
                .iter()
                .map(|p| p.dim())
                .collect::<Vec<_>>(),
        )
    }

    /// One update step; `params` and `grads` align with the constructor
    /// shapes.
    pub fn step(
        &mut self,
        params: &mut [Array2<f64>],
        grads: &[Array2<f64>],
        lr: f64,
        betas: (f64, f64),
        eps: f64,
    ) {
        self.t += 1;
        let (b1, b2) = betas;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            m.zip_mut_with(g, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
            v.zip_mut_with(g, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
            ndarray::Zip::from(p).and(&*m).and(&*v).for_each(|p, &m, &v| {
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
    }
}

/// Trains a fresh model of the given shape on the graph's train split,
/// returning the epoch with the best validation accuracy. Deterministic
/// for a fixed config.
pub fn train(g: &Graph, shape: &ModelShape, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if shape.feature_dim != g.feature_dim() {
        return Err(Error::DimensionMismatch(format!(
            "shape expects feature dim {}, graph has {}",
            shape.feature_dim,
            g.feature_dim()
        )));
    }
    if shape.num_classes != g.num_classes() {
        return Err(Error::DimensionMismatch(format!(
            "shape expects {} classes, graph has {}",
            shape.num_classes,
            g.num_classes()
        )));
    }
    let train_nodes = g.split_nodes(Split::Train);
    if train_nodes.is_empty() {
        return Err(Error::EmptySelection("train split is empty".into()));
    }
    let val_nodes = g.split_nodes(Split::Val);
    let test_nodes = g.split_nodes(Split::Test);

    let adj = normalize_adjacency(g, &g.effective_weights())?;
    let mut model = GcnModel::init(shape, cfg.seed)?;
    let mut opt = Adam::for_model(&model);
    let has_val = !val_nodes.is_empty();
    let mut best_params = model.params().to_vec();
    let mut best_stats = clone_stats(model.running_stats());
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut last_loss = f64::NAN;

    for epoch in 0..cfg.epochs {
        let mode = ForwardMode::Train {
            seed: rng::mix(&[cfg.seed, epoch as u64]),
        };
        let (loss, grads, cache) = loss_and_grads_scoped(
            &model,
            &adj,
            g.features(),
            g.labels(),
            &train_nodes,
            cfg.weight_decay,
            mode,
            GradScope::default(),
        )?;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite loss {loss} at epoch {epoch}"
            )));
        }
        last_loss = loss;
        model.update_running_stats(&cache)?;
        opt.step(
            model.params_mut(),
            &grads.params,
            cfg.learning_rate,
            cfg.adam_betas,
            cfg.adam_eps,
        );

        if has_val {
            let pred = predict(&model, &adj, g.features())?;
            let val_acc = accuracy_on(&pred.labels, g.labels(), &val_nodes);
            if val_acc > best_val {
                best_val = val_acc;
                best_epoch = epoch;
                best_params = model.params().to_vec();
                best_stats = clone_stats(model.running_stats());
            }
        } else {
            // Without a validation split the final epoch wins.
            best_epoch = epoch;
            best_params = model.params().to_vec();
            best_stats = clone_stats(model.running_stats());
        }
    }

    let mut model = GcnModel::new(best_params, shape.dropout, shape.num_classes, shape.batch_norm)?;
    model.set_running_stats(best_stats.0, best_stats.1)?;
    let pred = predict(&model, &adj, g.features())?;
    let eval_nodes = if test_nodes.is_empty() {
        (0..g.num_nodes()).collect()
    } else {
        test_nodes
    };
    let report = classification_report(&pred.labels, g.labels(), &eval_nodes, g.num_classes());
    Ok(TrainOutcome {
        model,
        report,
        best_epoch,
        best_val_accuracy: if has_val { Some(best_val) } else { None },
        final_loss: last_loss,
    })
}

fn clone_stats((m, v): (&[Array2<f64>], &[Array2<f64>])) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
    (m.to_vec(), v.to_vec())
}

fn accuracy_on(pred: &[usize], truth: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let hits = nodes.iter().filter(|&&v| pred[v] == truth[v]).count();
    hits as f64 / nodes.len() as f64
}

/// Accuracy plus macro-averaged precision, recall and F1 over all classes.
pub fn classification_report(
    pred: &[usize],
    truth: &[usize],
    nodes: &[usize],
    num_classes: usize,
) -> ModelReport {
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    let mut hits = 0usize;
    for &v in nodes {
        let (p, t) = (pred[v], truth[v]);
        if p == t {
            hits += 1;
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut f1 = 0.0;
    for c in 0..num_classes {
        let p = if tp[c] + fp[c] > 0 {
            tp[c] as f64 / (tp[c] + fp[c]) as f64
        } else {
            0.0
        };
        let r = if tp[c] + fn_[c] > 0 {
            tp[c] as f64 / (tp[c] + fn_[c]) as f64
        } else {
            0.0
        };
        precision += p;
        recall += r;
        f1 += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    let c = num_classes as f64;
    ModelReport {
        accuracy: if nodes.is_empty() {
            0.0
        } else {
            hits as f64 / nodes.len() as f64
        },
        f1_macro: f1 / c,
        precision_macro: precision / c,
        recall_macro: recall / c,
    }
}
