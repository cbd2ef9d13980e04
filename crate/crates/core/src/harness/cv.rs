use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Classifier, ModelFactory, OodProtocol, TrainConfig};
use crate::corpus::{Dataset, FoldPlan, NUM_LEVELS};
use crate::metrics::{accuracy, aggregate_folds, macro_f1, EvalRecord, MeanStd};
use crate::seed::{self, stream};
use crate::{Error, Result};

/// Scores of one model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub n: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// `confusion[gold][pred]`.
    pub confusion: [[usize; NUM_LEVELS]; NUM_LEVELS],
}

pub fn evaluate(model: &dyn Classifier, data: &Dataset) -> Result<EvalMetrics> {
    let preds = model.predict(&data.texts())?;
    let rec = EvalRecord::new(data.labels(), preds.iter().map(|d| d.predicted).collect())?;
    Ok(EvalMetrics {
        n: rec.len(),
        accuracy: accuracy(&rec),
        macro_f1: macro_f1(&rec),
        confusion: rec.confusion(),
    })
}

/// Score each trained model on the whole out-of-distribution set.
pub fn evaluate_ood(models: &[&dyn Classifier], ood: &Dataset) -> Result<Vec<EvalMetrics>> {
    models.iter().map(|m| evaluate(*m, ood)).collect()
}

/// Split `train` positions into `(fit, validation)`: within each class a
/// seeded shuffle puts `round(fraction * n)` examples (at least one when the
/// class has two or more) into validation.
pub fn validation_split(
    dataset: &Dataset,
    train: &[usize],
    fraction: f64,
    seed: u64,
    run: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = seed::rng_indexed(seed, stream::VALIDATION, run);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_LEVELS];
    for &i in train {
        by_class[dataset.examples()[i].label.ordinal()].push(i);
    }
    let mut fit = Vec::new();
    let mut val = Vec::new();
    for mut members in by_class {
        members.shuffle(&mut rng);
        let n = members.len();
        let take = if n >= 2 { ((fraction * n as f64).round() as usize).clamp(1, n - 1) } else { 0 };
        val.extend_from_slice(&members[..take]);
        fit.extend_from_slice(&members[take..]);
    }
    if val.is_empty() || fit.is_empty() {
        return Err(Error::Empty("validation slice".into()));
    }
    fit.sort_unstable();
    val.sort_unstable();
    Ok((fit, val))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub iid_accuracy: f64,
    pub iid_macro_f1: f64,
    pub ood_accuracy: Option<f64>,
    pub ood_macro_f1: Option<f64>,
    pub epochs_ran: usize,
    pub best_epoch: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub ood_size: Option<usize>,
    pub initial_checksum: String,
    pub trained_checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub iid_accuracy: MeanStd,
    pub iid_macro_f1: MeanStd,
    pub ood_accuracy: Option<MeanStd>,
    pub ood_macro_f1: Option<MeanStd>,
}

impl Aggregates {
    pub fn from_folds(folds: &[FoldResult]) -> Result<Self> {
        let col = |f: fn(&FoldResult) -> f64| aggregate_folds(&folds.iter().map(f).collect::<Vec<_>>());
        let opt = |f: fn(&FoldResult) -> Option<f64>| -> Result<Option<MeanStd>> {
            folds
                .iter()
                .map(f)
                .collect::<Option<Vec<f64>>>()
                .map(|v| aggregate_folds(&v))
                .transpose()
        };
        Ok(Self {
            iid_accuracy: col(|f| f.iid_accuracy)?,
            iid_macro_f1: col(|f| f.iid_macro_f1)?,
            ood_accuracy: opt(|f| f.ood_accuracy)?,
            ood_macro_f1: opt(|f| f.ood_macro_f1)?,
        })
    }
}

/// Protocol choices recorded with every result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolNotes {
    pub std: String,
    pub validation: String,
    pub early_stopping: String,
    pub ood: String,
}

impl ProtocolNotes {
    fn new(config: &TrainConfig) -> Self {
        Self {
            std: "sample standard deviation (n - 1 denominator)".into(),
            validation: format!(
                "stratified {}% of each fold's training portion, never the test fold",
                (config.val_fraction * 100.0).round()
            ),
            early_stopping: format!(
                "validation macro-F1, strict improvement, patience {} of at most {} epochs; best epoch restored",
                config.patience, config.epochs
            ),
            ood: match config.ood_protocol {
                OodProtocol::PerFold => "each fold model scored on the full OOD set, then averaged".into(),
                OodProtocol::RetrainFull => {
                    "fold models averaged; additionally one model retrained on the full training set".into()
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model_name: String,
    pub k: usize,
    pub per_fold: Vec<FoldResult>,
    pub aggregates: Aggregates,
    /// Scores of the full-data retrain, under [`OodProtocol::RetrainFull`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ood_full: Option<EvalMetrics>,
    pub protocol: ProtocolNotes,
}

#[derive(Default)]
pub struct CvOptions<'a> {
    /// Out-of-distribution dataset scored by every fold model.
    pub ood: Option<&'a Dataset>,
    /// Folds trained concurrently (1 when zero).
    pub workers: usize,
    /// Where to write `fold-<i>` checkpoints, if anywhere.
    pub checkpoint_dir: Option<PathBuf>,
}

fn ids(d: &Dataset) -> HashSet<&str> {
    d.examples().iter().map(|e| e.id.as_str()).collect()
}

fn disjoint(a: &Dataset, b: &Dataset, what: &str) -> Result<()> {
    let left = ids(a);
    if let Some(shared) = b.examples().iter().find(|e| left.contains(e.id.as_str())) {
        return Err(Error::InvalidArgument(format!("{what} share example id {:?}", shared.id)));
    }
    Ok(())
}

fn run_fold(
    factory: &dyn ModelFactory,
    dataset: &Dataset,
    plan: &FoldPlan,
    config: &TrainConfig,
    options: &CvOptions<'_>,
    fold: usize,
) -> Result<FoldResult> {
    let (train_idx, test_idx) = plan.split_indices(dataset, fold)?;
    let (fit_idx, val_idx) = validation_split(dataset, &train_idx, config.val_fraction, config.seed, fold as u64)?;
    let name = dataset.name();
    let train = dataset.select(format!("{name}/fold{fold}/train"), &fit_idx)?;
    let val = dataset.select(format!("{name}/fold{fold}/val"), &val_idx)?;
    let test = dataset.select(format!("{name}/fold{fold}/test"), &test_idx)?;
    disjoint(&train, &test, "train and test splits")?;
    disjoint(&val, &test, "validation and test splits")?;
    disjoint(&train, &val, "train and validation splits")?;

    let mut model = factory.build()?;
    let initial_checksum = model.checksum();
    let history = model.fit(&train, &val, config, fold as u64)?;
    let iid = evaluate(model.as_ref(), &test)?;
    let ood = options.ood.map(|o| evaluate(model.as_ref(), o)).transpose()?;
    if let Some(dir) = &options.checkpoint_dir {
        model.save(&dir.join(format!("fold-{fold}")))?;
    }
    Ok(FoldResult {
        fold,
        iid_accuracy: iid.accuracy,
        iid_macro_f1: iid.macro_f1,
        ood_accuracy: ood.as_ref().map(|m| m.accuracy),
        ood_macro_f1: ood.as_ref().map(|m| m.macro_f1),
        epochs_ran: history.epochs_ran(),
        best_epoch: history.best_epoch,
        train_size: train.len(),
        val_size: val.len(),
        test_size: test.len(),
        ood_size: ood.map(|m| m.n),
        initial_checksum,
        trained_checksum: model.checksum(),
    })
}

/// k-fold cross-validation with a fresh model per fold.
///
/// Fold `i` trains on every other fold minus a stratified validation slice,
/// stops early on that slice, and is scored on fold `i` (and on the OOD
/// set, when given). Folds are independent; with `workers > 1` they run on
/// separate threads and are joined before aggregation, so the result does
/// not depend on the worker count.
pub fn cross_validate(
    factory: &dyn ModelFactory,
    dataset: &Dataset,
    plan: &FoldPlan,
    config: &TrainConfig,
    options: &CvOptions<'_>,
) -> Result<RunResult> {
    let config = factory.train_config(config);
    config.validate()?;
    if plan.k < 2 {
        return Err(Error::InvalidArgument(format!("cross-validation needs k >= 2, got {}", plan.k)));
    }
    if let Some(ood) = options.ood {
        disjoint(dataset, ood, "training and out-of-distribution datasets")?;
    }
    let workers = options.workers.clamp(1, plan.k);
    let slots: Mutex<Vec<Option<Result<FoldResult>>>> = Mutex::new((0..plan.k).map(|_| None).collect());
    std::thread::scope(|scope| {
        for w in 0..workers {
            let slots = &slots;
            let config = &config;
            scope.spawn(move || {
                for fold in (w..plan.k).step_by(workers) {
                    let r = run_fold(factory, dataset, plan, config, options, fold);
                    slots.lock().expect("fold results")[fold] = Some(r);
                }
            });
        }
    });
    let per_fold = slots
        .into_inner()
        .expect("fold results")
        .into_iter()
        .map(|r| r.expect("every fold ran"))
        .collect::<Result<Vec<_>>>()?;

    let ood_full = match (config.ood_protocol, options.ood) {
        (OodProtocol::RetrainFull, Some(ood)) => {
            let all: Vec<usize> = (0..dataset.len()).collect();
            let run = plan.k as u64;
            let (fit_idx, val_idx) = validation_split(dataset, &all, config.val_fraction, config.seed, run)?;
            let train = dataset.select(format!("{}/full/train", dataset.name()), &fit_idx)?;
            let val = dataset.select(format!("{}/full/val", dataset.name()), &val_idx)?;
            let mut model = factory.build()?;
            model.fit(&train, &val, &config, run)?;
            Some(evaluate(model.as_ref(), ood)?)
        }
        _ => None,
    };
    Ok(RunResult {
        model_name: factory.name(),
        k: plan.k,
        aggregates: Aggregates::from_folds(&per_fold)?,
        per_fold,
        ood_full,
        protocol: ProtocolNotes::new(&config),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synthetic;

    #[test]
    fn validation_split_is_stratified_and_disjoint() {
        let data = synthetic::dataset1_like(3);
        let train: Vec<usize> = (0..480).collect();
        let (fit, val) = validation_split(&data, &train, 0.1, 7, 0).unwrap();
        assert_eq!(fit.len() + val.len(), 480);
        let v: HashSet<_> = val.iter().collect();
        assert!(fit.iter().all(|i| !v.contains(i)));
        let mut counts = [0; NUM_LEVELS];
        for &i in &val {
            counts[data.examples()[i].label.ordinal()] += 1;
        }
        let per_class: Vec<usize> = (0..NUM_LEVELS)
            .map(|c| train.iter().filter(|&&i| data.examples()[i].label.ordinal() == c).count())
            .collect();
        for c in 0..NUM_LEVELS {
            assert_eq!(counts[c], (per_class[c] as f64 * 0.1).round() as usize);
        }
        assert_eq!(validation_split(&data, &train, 0.1, 7, 0).unwrap(), (fit, val));
    }
}
