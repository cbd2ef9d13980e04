use candle_core::Device;
use serde::{Deserialize, Serialize};

use super::{cross_validate, Classifier, CvOptions, ModelFactory, NeuralModel, RunResult, TrainConfig};
use crate::corpus::{Dataset, FoldPlan};
use crate::hwa::WordVocab;
use crate::model::{BloomNet, BloomNetConfig, Variant};
use crate::Result;

/// Builds BloomNet models of one configuration.
pub struct BloomNetFactory {
    pub config: BloomNetConfig,
    pub vocab: WordVocab,
    pub device: Device,
}

impl BloomNetFactory {
    pub fn new(config: BloomNetConfig, vocab: WordVocab) -> Self {
        Self {
            config,
            vocab,
            device: Device::Cpu,
        }
    }
}

impl ModelFactory for BloomNetFactory {
    fn name(&self) -> String {
        match self.config.variant {
            Variant::Full => "bloomnet".into(),
            v => format!("bloomnet {v}"),
        }
    }

    fn build(&self) -> Result<Box<dyn Classifier>> {
        let model = BloomNet::new(&self.config, self.vocab.clone(), &self.device)?;
        debug_assert_eq!(NeuralModel::name(&model), self.name());
        Ok(Box::new(model))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub fusion_width: usize,
    pub result: RunResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub fold_plan_digest: String,
    pub rows: Vec<AblationRow>,
}

/// Cross-validate the four branch selections (base, +WA, +POS-NER, full)
/// on the same folds, seeds and training settings.
pub fn run_ablation(
    config: &BloomNetConfig,
    vocab: &WordVocab,
    dataset: &Dataset,
    plan: &FoldPlan,
    train: &TrainConfig,
    options: &CvOptions<'_>,
) -> Result<AblationTable> {
    let mut rows = Vec::with_capacity(Variant::ALL.len());
    for variant in Variant::ALL {
        let cfg = config.clone().with_variant(variant);
        let factory = BloomNetFactory::new(cfg.clone(), vocab.clone());
        let options = CvOptions {
            ood: options.ood,
            workers: options.workers,
            checkpoint_dir: options
                .checkpoint_dir
                .as_ref()
                .map(|d| d.join(variant.name().replace('+', "plus-"))),
        };
        let mut result = cross_validate(&factory, dataset, plan, train, &options)?;
        result.model_name = variant.name().to_string();
        rows.push(AblationRow {
            variant: variant.name().to_string(),
            fusion_width: cfg.fusion_width()?,
            result,
        });
    }
    Ok(AblationTable {
        fold_plan_digest: plan.digest(),
        rows,
    })
}
