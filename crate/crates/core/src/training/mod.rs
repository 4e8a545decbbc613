//! Optimizers, the epoch loop with best-validation-F1 selection, and the
//! optimizer × learning-rate search.

mod hpo;
mod optim;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use hpo::{hpo_search, search_with, HpoConfig, HpoReport, SearchSpace, TrialResult};
pub use optim::{
    sgd_step, AdamState, Optimizer, OptimizerKind, SgdState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
};

use crate::data::{Dataset, LabelTaxonomy};
use crate::decoder::{batch_loss, save_checkpoint, DecoderParams, DecoderShape, DEFAULT_DROPOUT, HIDDEN};
use crate::error::{Error, Result};
use crate::metrics::weighted_f1;
use crate::numerics::RngStream;
use crate::tagging::binarize_matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub eval_threshold: f64,
    /// Heavy-ball momentum for SGD; 0 means plain SGD.
    pub sgd_momentum: f64,
    pub hidden: [usize; 2],
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.001,
            batch_size: 12,
            epochs: 50,
            seed: 0,
            eval_threshold: 0.5,
            sgd_momentum: 0.0,
            hidden: HIDDEN,
            dropout: DEFAULT_DROPOUT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size < 2 {
            return fail(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if self.epochs < 1 {
            return fail("epochs must be at least 1".into());
        }
        if !(self.eval_threshold > 0.0 && self.eval_threshold < 1.0) {
            return fail(format!("eval_threshold must be in (0, 1), got {}", self.eval_threshold));
        }
        if !(0.0..1.0).contains(&self.sgd_momentum) {
            return fail(format!("sgd_momentum must be in [0, 1), got {}", self.sgd_momentum));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.hidden.contains(&0) {
            return fail("hidden layer widths must be positive".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: TrainConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// One line of the training history file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_weighted_f1: f64,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_weighted_f1: Vec<f64>,
    /// 1-based; the earliest epoch attaining the best validation score.
    pub best_epoch: usize,
    pub best_val_weighted_f1: f64,
    pub steps: u64,
    pub best_checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    /// Best-epoch parameters at checkpoint precision.
    pub best: DecoderParams,
    pub last: DecoderParams,
    pub optimizer: Optimizer,
}

/// Where [`train_to`] writes its artifacts. Both are optional.
#[derive(Clone, Debug, Default)]
pub struct TrainOutputs {
    pub checkpoint: Option<PathBuf>,
    pub history: Option<PathBuf>,
}

/// Weighted F1 of `params` on `data` at `threshold`.
pub fn evaluate(params: &DecoderParams, data: &Dataset, threshold: f64) -> Result<f64> {
    let probs = params.predict(&data.features)?;
    weighted_f1(&binarize_matrix(&probs, threshold), &data.targets)
}

pub fn train(
    config: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    taxonomy: &LabelTaxonomy,
) -> Result<TrainOutcome> {
    train_to(config, train_set, val_set, taxonomy, &TrainOutputs::default())
}

/// Runs the epoch loop. Validation is scored on the parameters rounded to
/// checkpoint precision, so reloading the best checkpoint reproduces the
/// recorded score exactly.
pub fn train_to(
    config: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    taxonomy: &LabelTaxonomy,
    outputs: &TrainOutputs,
) -> Result<TrainOutcome> {
    train_observed(config, train_set, val_set, taxonomy, outputs, |_, _| Ok(()))
}

/// [`train_to`] with a callback after every epoch, given the epoch record and
/// the current (full-precision) parameters.
pub fn train_observed(
    config: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    taxonomy: &LabelTaxonomy,
    outputs: &TrainOutputs,
    mut on_epoch: impl FnMut(&EpochRecord, &DecoderParams) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.len() < 2 {
        return Err(Error::Validation(format!(
            "training set needs at least 2 samples, got {}",
            train_set.len()
        )));
    }
    if val_set.is_empty() {
        return Err(Error::Validation("validation set is empty".into()));
    }
    for (name, ds) in [("training", train_set), ("validation", val_set)] {
        if ds.n_labels() != taxonomy.len() {
            return Err(Error::Shape(format!(
                "{name} set has {} label columns, taxonomy has {}",
                ds.n_labels(),
                taxonomy.len()
            )));
        }
    }
    if val_set.dim() != train_set.dim() {
        return Err(Error::Shape(format!(
            "validation dimension {} differs from training dimension {}",
            val_set.dim(),
            train_set.dim()
        )));
    }

    let shape = DecoderShape {
        input_dim: train_set.dim(),
        hidden: config.hidden,
        n_labels: taxonomy.len(),
    };
    let mut params = DecoderParams::init(shape, config.seed)?;
    params.dropout_p = config.dropout;
    let mut optimizer = Optimizer::new(config.optimizer, &params, config.sgd_momentum);
    let root = RngStream::new(config.seed);

    let mut history = match &outputs.history {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => None,
    };

    let mut report = TrainReport {
        train_loss: Vec::with_capacity(config.epochs),
        val_weighted_f1: Vec::with_capacity(config.epochs),
        best_epoch: 0,
        best_val_weighted_f1: f64::NEG_INFINITY,
        steps: 0,
        best_checkpoint: None,
    };
    let mut best = params.to_checkpoint_precision();
    let n = train_set.len();

    for epoch in 1..=config.epochs {
        let mut rng = root.child(epoch as u64);
        let order = rng.permutation(n);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let x = train_set.features.select_rows(idx);
            let y = train_set.targets.select_rows(idx);
            let (probs, cache) = params.forward_train(&x, &mut rng)?;
            // The clamped BCE can hide NaN probabilities, so check both.
            let loss = if probs.is_finite() { batch_loss(&probs, &y)? } else { f64::NAN };
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b + 1, loss });
            }
            let grads = params.backward(&cache, &probs, &y)?;
            optimizer.step(&mut params, &grads, config.learning_rate)?;
            loss_sum += loss * idx.len() as f64;
            seen += idx.len();
        }
        if !params.is_finite() {
            return Err(Error::Diverged { epoch, batch: order.len().div_ceil(config.batch_size), loss: f64::NAN });
        }

        let snapshot = params.to_checkpoint_precision();
        let score = evaluate(&snapshot, val_set, config.eval_threshold)?;
        let train_loss = loss_sum / seen as f64;
        report.train_loss.push(train_loss);
        report.val_weighted_f1.push(score);
        report.steps = optimizer.steps();

        if score > report.best_val_weighted_f1 {
            report.best_val_weighted_f1 = score;
            report.best_epoch = epoch;
            if let Some(path) = &outputs.checkpoint {
                save_checkpoint(path, &snapshot, Some(&optimizer.to_section()))?;
                report.best_checkpoint = Some(path.clone());
            }
            best = snapshot;
        }

        let rec = EpochRecord {
            epoch,
            train_loss,
            val_weighted_f1: score,
            steps: report.steps,
        };
        if let Some(w) = history.as_mut() {
            let path = outputs.history.as_ref().expect("history path");
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n")
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(path, e))?;
        }
        on_epoch(&rec, &params)?;
    }

    Ok(TrainOutcome {
        report,
        best,
        last: params,
        optimizer,
    })
}
