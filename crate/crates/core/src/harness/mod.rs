//! Model-agnostic training and evaluation: the shared training loop with
//! early stopping, k-fold cross-validation with out-of-distribution
//! scoring, and the BloomNet ablation grid.

mod ablation;
mod cv;
mod train;

pub use ablation::{run_ablation, AblationRow, AblationTable, BloomNetFactory};
pub use cv::{
    cross_validate, evaluate, evaluate_ood, validation_split, Aggregates, CvOptions, EvalMetrics, FoldResult,
    ProtocolNotes, RunResult,
};
pub use train::{predict_batched, train_model};

use std::path::Path;

use candle_core::{Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::model::ClassDistribution;
use crate::nn::Mode;
use crate::{Error, Result};

/// Metric that drives early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStopMetric {
    #[default]
    ValMacroF1,
}

/// How out-of-distribution scores are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodProtocol {
    /// Score every fold model and average.
    #[default]
    PerFold,
    /// Additionally retrain once on the whole training dataset and score that model.
    RetrainFull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub early_stop_metric: EarlyStopMetric,
    pub patience: usize,
    pub seed: u64,
    /// Share of each fold's training portion held out for early stopping.
    pub val_fraction: f64,
    pub eval_batch_size: usize,
    pub ood_protocol: OodProtocol,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-5,
            epochs: 50,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            early_stop_metric: EarlyStopMetric::ValMacroF1,
            patience: 5,
            seed: 0,
            val_fraction: 0.1,
            eval_batch_size: 64,
            ood_protocol: OodProtocol::PerFold,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.eval_batch_size == 0 {
            return bad("epochs and batch sizes must be positive".into());
        }
        if self.patience == 0 || self.patience >= self.epochs {
            return bad(format!(
                "patience must be in [1, epochs); got {} with {} epochs",
                self.patience, self.epochs
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("Adam parameters need beta in [0, 1) and eps > 0".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!("val_fraction must be in (0, 1), got {}", self.val_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept; 0 for models fitted in one shot.
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    pub stopped_early: bool,
}

impl History {
    pub fn epochs_ran(&self) -> usize {
        self.epochs.len().max(1)
    }
}

/// The contract every model offers the harness.
pub trait Classifier: Send {
    fn name(&self) -> String;

    /// Train on `train`, using `val` only for model selection. `run` keys
    /// the shuffle and dropout streams (the fold index in cross-validation).
    fn fit(&mut self, train: &Dataset, val: &Dataset, config: &TrainConfig, run: u64) -> Result<History>;

    fn predict(&self, texts: &[&str]) -> Result<Vec<ClassDistribution>>;

    fn forward(&self, text: &str) -> Result<ClassDistribution> {
        Ok(self.predict(&[text])?.remove(0))
    }

    /// Digest of the current parameters.
    fn checksum(&self) -> String;

    fn save(&self, dir: &Path) -> Result<()> {
        let _ = dir;
        Err(Error::Unimplemented(format!("saving {}", self.name())))
    }
}

/// A differentiable model trained by [`train_model`].
pub trait NeuralModel: Send {
    fn name(&self) -> String;

    /// `(batch, 6)` logits.
    fn logits(&self, texts: &[&str], mode: Mode<'_>) -> Result<Tensor>;

    fn trainable_vars(&self) -> Vec<Var>;

    fn checksum(&self) -> String;

    fn save(&self, dir: &Path) -> Result<()> {
        let _ = dir;
        Err(Error::Unimplemented(format!("saving {}", self.name())))
    }
}

impl<M: NeuralModel> Classifier for M {
    fn name(&self) -> String {
        NeuralModel::name(self)
    }

    fn fit(&mut self, train: &Dataset, val: &Dataset, config: &TrainConfig, run: u64) -> Result<History> {
        train_model(self, train, val, config, run)
    }

    fn predict(&self, texts: &[&str]) -> Result<Vec<ClassDistribution>> {
        predict_batched(self, texts, 64)
    }

    fn checksum(&self) -> String {
        NeuralModel::checksum(self)
    }

    fn save(&self, dir: &Path) -> Result<()> {
        NeuralModel::save(self, dir)
    }
}

/// Builds fresh, identically initialised models.
pub trait ModelFactory: Sync {
    fn name(&self) -> String;

    fn build(&self) -> Result<Box<dyn Classifier>>;

    /// Training settings for this model given the experiment-wide ones.
    fn train_config(&self, base: &TrainConfig) -> TrainConfig {
        base.clone()
    }
}

impl NeuralModel for crate::model::BloomNet {
    fn name(&self) -> String {
        match self.variant() {
            crate::model::Variant::Full => "bloomnet".into(),
            v => format!("bloomnet {v}"),
        }
    }

    fn logits(&self, texts: &[&str], mode: Mode<'_>) -> Result<Tensor> {
        crate::model::BloomNet::logits(self, texts, mode)
    }

    fn trainable_vars(&self) -> Vec<Var> {
        crate::model::BloomNet::trainable_vars(self)
    }

    fn checksum(&self) -> String {
        crate::model::BloomNet::checksum(self)
    }

    fn save(&self, dir: &Path) -> Result<()> {
        crate::model::BloomNet::save(self, dir)
    }
}
