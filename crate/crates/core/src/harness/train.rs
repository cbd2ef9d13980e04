use candle_nn::optim::{AdamW, Optimizer, ParamsAdamW};

use super::{History, EpochRecord, NeuralModel, TrainConfig};
use crate::corpus::Dataset;
use crate::metrics::{macro_f1, EvalRecord};
use crate::model::{batch_loss, distributions, ClassDistribution};
use crate::nn::{self, DropoutRng, Mode};
use crate::seed::{self, stream};
use crate::{Error, Result};
use rand::seq::SliceRandom;

/// Evaluation-mode distributions, computed `batch` texts at a time.
pub fn predict_batched<M: NeuralModel + ?Sized>(
    model: &M,
    texts: &[&str],
    batch: usize,
) -> Result<Vec<ClassDistribution>> {
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(batch.max(1)) {
        out.extend(distributions(&model.logits(chunk, Mode::Eval)?)?);
    }
    Ok(out)
}

fn score<M: NeuralModel + ?Sized>(model: &M, data: &Dataset, batch: usize) -> Result<f64> {
    let preds = predict_batched(model, &data.texts(), batch)?;
    let rec = EvalRecord::new(data.labels(), preds.iter().map(|d| d.predicted).collect())?;
    Ok(macro_f1(&rec))
}

/// Mini-batch Adam on mean cross-entropy with early stopping on
/// validation macro-F1.
///
/// Each epoch visits `train` in an order drawn from the shuffle stream for
/// `run`; dropout masks come from the matching dropout stream. After every
/// epoch the model is scored on `val`; a strictly better score snapshots
/// the parameters. Training stops once `patience` epochs pass without
/// improvement, and the best snapshot is restored before returning.
pub fn train_model<M: NeuralModel + ?Sized>(
    model: &M,
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
    run: u64,
) -> Result<History> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Empty("training or validation split".into()));
    }
    let vars = model.trainable_vars();
    if vars.is_empty() {
        return Err(Error::InvalidArgument(format!("{} has no trainable parameters", model.name())));
    }
    let mut optimizer = AdamW::new(
        vars.clone(),
        ParamsAdamW {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            weight_decay: 0.0,
        },
    )?;
    let mut shuffle = seed::rng_indexed(config.seed, stream::SHUFFLE, run);
    let dropout_rng = DropoutRng::new(seed::derive_indexed(config.seed, stream::DROPOUT, run));
    let texts = train.texts();
    let labels = train.labels();

    let mut history = History::default();
    let mut best: Option<(usize, f64, nn::Snapshot)> = None;
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch_texts: Vec<&str> = chunk.iter().map(|&i| texts[i]).collect();
            let batch_labels: Vec<_> = chunk.iter().map(|&i| labels[i]).collect();
            let logits = model.logits(&batch_texts, Mode::Train(&dropout_rng))?;
            let loss = batch_loss(&logits, &batch_labels)?;
            let value = nn::scalar_f64(&loss)?;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss of {} at epoch {epoch}, batch {b}: {value}",
                    model.name()
                )));
            }
            optimizer.backward_step(&loss)?;
            total += value * chunk.len() as f64;
        }
        let val_f1 = score(model, val, config.eval_batch_size)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_macro_f1: val_f1,
        });
        match &best {
            Some((_, f1, _)) if val_f1 <= *f1 => {}
            _ => best = Some((epoch, val_f1, nn::snapshot(&vars)?)),
        }
        let best_epoch = best.as_ref().map(|b| b.0).unwrap_or(epoch);
        if epoch - best_epoch >= config.patience {
            history.stopped_early = epoch < config.epochs;
            break;
        }
    }
    let (best_epoch, best_f1, snap) = best.expect("at least one epoch ran");
    nn::restore(&snap)?;
    history.best_epoch = best_epoch;
    history.best_val_macro_f1 = best_f1;
    Ok(history)
}
