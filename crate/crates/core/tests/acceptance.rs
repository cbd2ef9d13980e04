//! Acceptance criteria, one line per criterion.
//!
//! Run with `cargo test -p bloomnet --test acceptance`. Every hard
//! criterion prints `PASS` or `FAIL`; the soft reproduction check prints
//! `REPORT` and never fails the run. Real data and checkpoints are used for
//! the reproduction check when `BLOOMNET_DATASET1`, `BLOOMNET_DATASET2` and
//! optionally `BLOOMNET_REP_CHECKPOINT`, `BLOOMNET_POS_CHECKPOINT`,
//! `BLOOMNET_NER_CHECKPOINT` point at them; otherwise it runs on the
//! synthetic stand-in corpora and says so.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::{Duration, Instant};

use bloomnet::baselines::{self, BaselineFactory, ConstantClassifier, EncoderFinetune};
use bloomnet::corpus::{self, synthetic, DataFormat};
use bloomnet::encoders::{Branch, EncoderConfig, EncoderRole, PooledRepresentation};
use bloomnet::harness::{
    cross_validate, train_model, BloomNetFactory, Classifier, CvOptions, ModelFactory, NeuralModel, TrainConfig,
};
use bloomnet::hwa::{WordAttention, WordVocab};
use bloomnet::metrics::{accuracy, macro_f1, paired_significance, EvalRecord};
use bloomnet::model::{batch_loss, fuse, BloomNet, BloomNetConfig, ClassifierHead, FusionLayout, Variant};
use bloomnet::nn::{self, ParamStore};
use bloomnet::{CognitiveLevel, Dataset, NUM_LEVELS};
use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances and budgets.
const ATTENTION_SUM_TOL: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-6;
const GRAD_SEEDS: u64 = 10;
const EXACT_TOL: f64 = 1e-12;
const OVERFIT_TARGET: f64 = 0.95;
const OVERFIT_EPOCHS: usize = 50;
const FREEZE_BUDGET: Duration = Duration::from_secs(10 * 60);
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const OVERFIT_BUDGET: Duration = Duration::from_secs(15 * 60);

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// The first `per_class` examples of each level.
fn balanced_subset(data: &Dataset, per_class: usize, name: &str) -> Dataset {
    let mut taken = [0usize; NUM_LEVELS];
    let idx: Vec<usize> = data
        .examples()
        .iter()
        .enumerate()
        .filter(|(_, e)| {
            let c = &mut taken[e.label.ordinal()];
            *c += 1;
            *c <= per_class
        })
        .map(|(i, _)| i)
        .collect();
    data.select(name, &idx).expect("subset")
}

fn train_accuracy(model: &dyn Classifier, data: &Dataset) -> Result<f64, String> {
    let preds = model.predict(&data.texts()).map_err(err)?;
    let rec = EvalRecord::new(data.labels(), preds.iter().map(|d| d.predicted).collect()).map_err(err)?;
    Ok(accuracy(&rec))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let data = balanced_subset(&synthetic::dataset1_like(11), 20, "freeze-120");
    check(data.len() == 120, format!("subset has {} examples", data.len()))?;
    let vocab = WordVocab::build(data.texts(), 1);
    let model = BloomNet::new(&BloomNetConfig::small(), vocab, &Device::Cpu).map_err(err)?;
    let before: BTreeMap<_, _> = model.component_checksums().into_iter().collect();
    let idx: Vec<usize> = (0..data.len()).collect();
    let (fit, val) = bloomnet::harness::validation_split(&data, &idx, 0.1, 0, 0).map_err(err)?;
    let train = data.select("train", &fit).map_err(err)?;
    let val = data.select("val", &val).map_err(err)?;
    let history = train_model(&model, &train, &val, &TrainConfig::default(), 0).map_err(err)?;
    let after: BTreeMap<_, _> = model.component_checksums().into_iter().collect();
    for b in ["pos", "ner"] {
        check(before[b] == after[b], format!("{b} encoder changed during training"))?;
    }
    let pos = model.pos().expect("pos branch");
    let ner = model.ner().expect("ner branch");
    check(
        pos.frozen_checksum() == Some(after["pos"].as_str()) && ner.frozen_checksum() == Some(after["ner"].as_str()),
        "frozen checksums differ from freeze-time record",
    )?;
    check(before["rep"] != after["rep"], "representation encoder did not change")?;
    let elapsed = start.elapsed();
    check(elapsed <= FREEZE_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!(
        "POS/NER checksums unchanged, representation changed after {} epochs ({:.1}s)",
        history.epochs.len(),
        elapsed.as_secs_f64()
    ))
}

fn criterion_2() -> Outcome {
    let dev = Device::Cpu;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for group in 0..20u64 {
        let dim = rng.random_range(2..12);
        let store = ParamStore::new(group, DType::F32, &dev);
        let att = WordAttention::new(dim, rng.random_range(2..10), store.var_builder()).map_err(err)?;
        let lens: Vec<usize> = (0..50).map(|_| rng.random_range(1..=128)).collect();
        let width = 128;
        let scale: f64 = rng.random_range(0.1..10.0);
        let hidden: Vec<f32> = (0..50 * width * dim).map(|_| (rng.random_range(-1.0..1.0) * scale) as f32).collect();
        let hidden = Tensor::from_vec(hidden, (50, width, dim), &dev).map_err(err)?;
        let mask: Vec<u8> = lens.iter().flat_map(|&l| (0..width).map(move |t| u8::from(t < l))).collect();
        let mask = Tensor::from_vec(mask, (50, width), &dev).map_err(err)?;
        let (_, alpha) = att.forward(&hidden, &mask).map_err(err)?;
        for (row, &l) in nn::rows_f64(&alpha).map_err(err)?.iter().zip(&lens) {
            check(row.iter().all(|a| *a >= 0.0), "negative attention weight")?;
            check(row[l..].iter().all(|a| *a == 0.0), "non-zero weight on padding")?;
            let s: f64 = row.iter().sum();
            worst = worst.max((s - 1.0).abs());
            check((s - 1.0).abs() <= ATTENTION_SUM_TOL, format!("weights sum to {s}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} inputs of length 1-128; max |sum - 1| = {worst:.2e}"))
}

/// Loss of the toy attention-then-head pipeline at double precision.
fn toy_loss(att: &WordAttention, head: &ClassifierHead, hidden: &Tensor, mask: &Tensor, labels: &[CognitiveLevel]) -> candle_core::Result<Tensor> {
    let (pooled, _) = att.forward(hidden, mask).map_err(|e| candle_core::Error::Msg(e.to_string()))?;
    let logits = head.logits(&pooled).map_err(|e| candle_core::Error::Msg(e.to_string()))?;
    batch_loss(&logits, labels).map_err(|e| candle_core::Error::Msg(e.to_string()))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let dev = Device::Cpu;
    let mut worst = 0.0f64;
    let mut n_checked = 0;
    for seed in 0..GRAD_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (dim, att_dim, len) = (4, 3, 5);
        let store = ParamStore::new(seed, DType::F64, &dev);
        let att = WordAttention::new(dim, att_dim, store.var_builder().pp("attention")).map_err(err)?;
        let head = ClassifierHead::new(dim, store.var_builder().pp("head")).map_err(err)?;
        let hidden: Vec<f64> = (0..2 * len * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hidden = Tensor::from_vec(hidden, (2, len, dim), &dev).map_err(err)?;
        let mask = Tensor::from_vec(vec![1u8, 1, 1, 1, 1, 1, 1, 1, 0, 0], (2, len), &dev).map_err(err)?;
        let labels = [
            CognitiveLevel::from_ordinal(rng.random_range(0..6)).unwrap(),
            CognitiveLevel::from_ordinal(rng.random_range(0..6)).unwrap(),
        ];
        let loss = toy_loss(&att, &head, &hidden, &mask, &labels).map_err(err)?;
        let grads = loss.backward().map_err(err)?;
        let vars: Vec<(String, Var)> = store.named_vars();
        check(vars.len() == 5, format!("expected 5 parameter tensors, found {}", vars.len()))?;
        for (name, var) in &vars {
            let analytic = grads
                .get(var.as_tensor())
                .ok_or_else(|| format!("no gradient for {name}"))?
                .flatten_all()
                .and_then(|t| t.to_vec1::<f64>())
                .map_err(err)?;
            let base = var.as_tensor().flatten_all().and_then(|t| t.to_vec1::<f64>()).map_err(err)?;
            for i in 0..base.len() {
                let eval = |delta: f64| -> Result<f64, String> {
                    let mut v = base.clone();
                    v[i] += delta;
                    var.set(&Tensor::from_vec(v, var.shape(), &dev).map_err(err)?).map_err(err)?;
                    let l = toy_loss(&att, &head, &hidden, &mask, &labels).map_err(err)?;
                    nn::scalar_f64(&l).map_err(err)
                };
                let numeric = (eval(GRAD_STEP)? - eval(-GRAD_STEP)?) / (2.0 * GRAD_STEP);
                var.set(&Tensor::from_vec(base.clone(), var.shape(), &dev).map_err(err)?).map_err(err)?;
                let a = analytic[i];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
                worst = worst.max(rel);
                check(rel < GRAD_REL_TOL, format!("seed {seed} {name}[{i}]: analytic {a}, numeric {numeric}"))?;
                n_checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < GRAD_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!(
        "{n_checked} attention and head coordinates over {GRAD_SEEDS} seeds; max rel error {worst:.2e}"
    ))
}

fn criterion_4() -> Outcome {
    let dev = Device::Cpu;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let vocab = WordVocab::build(["state the law", "plan a study"], 1);
    let mut widths = Vec::new();
    for _ in 0..5 {
        let dims: [usize; 4] = std::array::from_fn(|_| rng.random_range(1..200));
        let layout = FusionLayout::new(vec![
            (Branch::Rep, dims[0]),
            (Branch::Pos, dims[1]),
            (Branch::Ner, dims[2]),
            (Branch::Hwa, dims[3]),
        ])
        .map_err(err)?;
        let parts: Vec<PooledRepresentation> = layout
            .segments()
            .iter()
            .map(|&(b, d)| PooledRepresentation::new(b, vec![0.5; d]).unwrap())
            .collect();
        let fused = fuse(&layout, &parts.iter().collect::<Vec<_>>()).map_err(err)?;
        check(fused.dim() == dims.iter().sum::<usize>(), "fused width differs from sum")?;

        // A real model with a randomised word-attention width.
        let mut cfg = BloomNetConfig::tiny();
        cfg.hwa.recurrent_hidden = rng.random_range(1..20);
        let model = BloomNet::new(&cfg, vocab.clone(), &dev).map_err(err)?;
        let expected = 3 * 32 + 2 * cfg.hwa.recurrent_hidden;
        let fused = model.fused_batch(&["plan a study"], bloomnet::nn::Mode::Eval).map_err(err)?;
        check(
            model.fusion_width() == expected && model.head().input_dim() == expected && fused.dim(1).map_err(err)? == expected,
            format!("model width {} vs expected {expected}", model.fusion_width()),
        )?;
        widths.push(expected);
    }
    let reference = BloomNetConfig::reference().fusion_width().map_err(err)?;
    check(reference == 3072, format!("reference width {reference}"))?;

    let cfg = BloomNetConfig::tiny();
    let parts = (|| -> bloomnet::Result<_> {
        let dtype = cfg.dtype()?;
        Ok((
            bloomnet::encoders::Encoder::load(&cfg.representation, dtype, &dev)?,
            bloomnet::encoders::Encoder::load(&cfg.pos, dtype, &dev)?,
            bloomnet::encoders::Encoder::load(&cfg.ner, dtype, &dev)?,
            bloomnet::hwa::Hwa::new(&cfg.hwa, vocab.clone(), ParamStore::new(0, dtype, &dev))?,
        ))
    })()
    .map_err(err)?;
    let store = ParamStore::new(1, DType::F32, &dev);
    let head = ClassifierHead::new(cfg.fusion_width().map_err(err)? + 1, store.var_builder()).map_err(err)?;
    let built = BloomNet::from_parts(&cfg, parts.0, Some(parts.1), Some(parts.2), Some(parts.3), store, head);
    check(
        matches!(built, Err(bloomnet::Error::DimensionMismatch { .. })),
        "mismatched head was accepted",
    )?;
    Ok(format!("widths {widths:?} match; reference D = 3072; mismatched head rejected"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let n = rng.random_range(1..30);
        let golds: Vec<usize> = (0..n).map(|_| rng.random_range(0..6)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..6)).collect();
        let mut m = [[0usize; 6]; 6];
        for (g, p) in golds.iter().zip(&preds) {
            m[*g][*p] += 1;
        }
        let acc = (0..6).map(|c| m[c][c]).sum::<usize>() as f64 / n as f64;
        let mut f1s = Vec::new();
        for c in 0..6 {
            let tp = m[c][c] as f64;
            let fp = (0..6).map(|g| m[g][c]).sum::<usize>() as f64 - tp;
            let fnn = m[c].iter().sum::<usize>() as f64 - tp;
            if tp + fp + fnn > 0.0 {
                f1s.push(if tp > 0.0 { 2.0 * tp / (2.0 * tp + fp + fnn) } else { 0.0 });
            }
        }
        let f1 = f1s.iter().sum::<f64>() / f1s.len() as f64;
        let lv = |v: &[usize]| v.iter().map(|&i| CognitiveLevel::from_ordinal(i).unwrap()).collect::<Vec<_>>();
        let rec = EvalRecord::new(lv(&golds), lv(&preds)).map_err(err)?;
        check((accuracy(&rec) - acc).abs() < EXACT_TOL, "accuracy differs from brute force")?;
        check((macro_f1(&rec) - f1).abs() < EXACT_TOL, "macro-F1 differs from brute force")?;
    }
    let lv = |v: [usize; 4]| v.iter().map(|&i| CognitiveLevel::from_ordinal(i).unwrap()).collect::<Vec<_>>();
    let rec = EvalRecord::new(lv([0, 0, 1, 2]), lv([0, 1, 1, 2])).map_err(err)?;
    check((accuracy(&rec) - 0.75).abs() < EXACT_TOL, "hand-case accuracy")?;
    check((macro_f1(&rec) - 7.0 / 9.0).abs() < EXACT_TOL, "hand-case macro-F1")?;
    Ok("1000 random records match brute force; hand case 0.75 / 7/9".into())
}

struct ConstantFactory;

impl ModelFactory for ConstantFactory {
    fn name(&self) -> String {
        "constant".into()
    }
    fn build(&self) -> bloomnet::Result<Box<dyn Classifier>> {
        Ok(Box::new(ConstantClassifier {
            level: CognitiveLevel::Knowledge,
        }))
    }
}

fn criterion_6() -> Outcome {
    let d1 = synthetic::dataset1_like(6);
    let d2 = synthetic::dataset2_like(6);
    let plan = corpus::make_folds(&d1, 5, 6, true).map_err(err)?;
    let mut seen = HashSet::new();
    for f in 0..5 {
        let test = plan.test_indices(&d1, f).map_err(err)?;
        check(test.len() == 120, format!("fold {f} has {} examples", test.len()))?;
        let mut per_class = [0; NUM_LEVELS];
        for &i in &test {
            check(seen.insert(i), "folds overlap")?;
            per_class[d1.examples()[i].label.ordinal()] += 1;
        }
        check(per_class == [20; NUM_LEVELS], format!("fold {f} class counts {per_class:?}"))?;
    }
    check(seen.len() == 600, "folds do not cover the dataset")?;
    let opts = CvOptions {
        ood: Some(&d2),
        ..CvOptions::default()
    };
    let result = cross_validate(&ConstantFactory, &d1, &plan, &TrainConfig::default(), &opts).map_err(err)?;
    for f in &result.per_fold {
        check((f.iid_accuracy - 1.0 / 6.0).abs() < EXACT_TOL, format!("fold {} IID accuracy {}", f.fold, f.iid_accuracy))?;
        let ood = f.ood_accuracy.unwrap_or(f64::NAN);
        check((ood - 26.0 / 141.0).abs() < EXACT_TOL, format!("fold {} OOD accuracy {ood}", f.fold))?;
        check(f.ood_size == Some(141), "OOD set is not 141 examples")?;
    }
    Ok(format!(
        "5 disjoint folds of 120 (20 per class); constant model IID 1/6, OOD {:.4} on 141",
        26.0 / 141.0
    ))
}

fn overfit_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        epochs: OVERFIT_EPOCHS,
        patience: 3,
        ..TrainConfig::default()
    }
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let data = balanced_subset(&synthetic::dataset1_like(7), 10, "overfit-60");
    let vocab = WordVocab::build(data.texts(), 1);
    let cfg = overfit_config();
    let mut lines = Vec::new();
    let bloom = BloomNet::new(&BloomNetConfig::small(), vocab.clone(), &Device::Cpu).map_err(err)?;
    let h = train_model(&bloom, &data, &data, &cfg, 0).map_err(err)?;
    let acc = train_accuracy(&bloom, &data)?;
    lines.push(format!("bloomnet {acc:.3} ({} ep)", h.epochs.len()));
    let mut ok = acc >= OVERFIT_TARGET;
    for name in ["cnn", "lstm", "self_attention"] {
        let t = Instant::now();
        let factory = BaselineFactory {
            spec: baselines::lookup(name).map_err(err)?,
            vocab: vocab.clone(),
            encoder: EncoderConfig::builtin(EncoderRole::Representation, "small").map_err(err)?,
            seed: 0,
            dtype: DType::F32,
            device: Device::Cpu,
        };
        let mut model = factory.build().map_err(err)?;
        let h = model.fit(&data, &data, &factory.train_config(&cfg), 0).map_err(err)?;
        let acc = train_accuracy(model.as_ref(), &data)?;
        ok &= acc >= OVERFIT_TARGET;
        lines.push(format!("{name} {acc:.3} ({} ep, {:.0}s)", h.epochs.len(), t.elapsed().as_secs_f64()));
    }
    let elapsed = start.elapsed();
    let summary = format!("{}; {:.0}s total", lines.join(", "), elapsed.as_secs_f64());
    check(ok, summary.clone())?;
    check(elapsed <= OVERFIT_BUDGET, summary.clone())?;
    Ok(summary)
}

fn criterion_8() -> Outcome {
    let data = synthetic::dataset1_like(8);
    let plan = corpus::make_folds(&data, 5, 8, true).map_err(err)?;
    let (train_idx, test_idx) = plan.split_indices(&data, 0).map_err(err)?;
    let train_idx: Vec<usize> = train_idx.into_iter().step_by(4).collect();
    let (fit, val) = bloomnet::harness::validation_split(&data, &train_idx, 0.1, 8, 0).map_err(err)?;
    let train = data.select("train", &fit).map_err(err)?;
    let val = data.select("val", &val).map_err(err)?;
    let test = data.select("test", &test_idx).map_err(err)?;
    let vocab = WordVocab::build(data.texts(), 1);
    let cfg = TrainConfig {
        learning_rate: 2e-5,
        epochs: 8,
        patience: 3,
        batch_size: 16,
        seed: 8,
        ..TrainConfig::default()
    };
    let mut bcfg = BloomNetConfig::tiny().with_variant(Variant::Base);
    bcfg.seed = 8;
    let base = BloomNet::new(&bcfg, vocab, &Device::Cpu).map_err(err)?;
    let fine = EncoderFinetune::new(&bcfg.representation, 8, DType::F32, &Device::Cpu).map_err(err)?;
    check(
        NeuralModel::checksum(&base) != String::new() && base.head().input_dim() == fine.head().input_dim(),
        "head widths differ",
    )?;
    let hb = train_model(&base, &train, &val, &cfg, 0).map_err(err)?;
    let hf = train_model(&fine, &train, &val, &cfg, 0).map_err(err)?;
    check(hb == hf, "training histories differ")?;
    let pb = Classifier::predict(&base, &test.texts()).map_err(err)?;
    let pf = Classifier::predict(&fine, &test.texts()).map_err(err)?;
    let same_pred = pb.iter().zip(&pf).all(|(a, b)| a.predicted == b.predicted);
    let same_probs = pb.iter().zip(&pf).all(|(a, b)| a.probs == b.probs);
    check(same_pred && same_probs, "predictions differ")?;
    Ok(format!(
        "identical histories ({} epochs) and {} bit-identical predictions",
        hb.epochs.len(),
        pb.len()
    ))
}

fn load_env_dataset(var: &str) -> Option<Dataset> {
    let path = std::env::var(var).ok()?;
    let path = Path::new(&path);
    let format = DataFormat::from_path(path)?;
    corpus::load_dataset(path, format).ok()
}

fn criterion_9() -> String {
    let real = match (load_env_dataset("BLOOMNET_DATASET1"), load_env_dataset("BLOOMNET_DATASET2")) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    let (d1, d2, source, mut bcfg, train) = match real {
        Some((a, b)) => {
            let mut cfg = BloomNetConfig::reference();
            for (var, enc) in [
                ("BLOOMNET_REP_CHECKPOINT", &mut cfg.representation),
                ("BLOOMNET_POS_CHECKPOINT", &mut cfg.pos),
                ("BLOOMNET_NER_CHECKPOINT", &mut cfg.ner),
            ] {
                if let Ok(id) = std::env::var(var) {
                    enc.pretrained_id = id;
                }
            }
            (a, b, "real data", cfg, TrainConfig::default())
        }
        None => (
            synthetic::dataset1_like(9),
            synthetic::dataset2_like(9),
            "synthetic stand-in data, random built-in encoders (not a reproduction)",
            BloomNetConfig::small(),
            TrainConfig {
                learning_rate: 1e-3,
                epochs: 12,
                patience: 3,
                ..TrainConfig::default()
            },
        ),
    };
    bcfg.seed = 9;
    let run = || -> bloomnet::Result<String> {
        let plan = corpus::make_folds(&d1, 5, 9, true)?;
        let opts = CvOptions {
            ood: Some(&d2),
            ..CvOptions::default()
        };
        let vocab = WordVocab::build(d1.texts(), 1);
        let bloom = cross_validate(&BloomNetFactory::new(bcfg.clone(), vocab.clone()), &d1, &plan, &train, &opts)?;
        let forest = cross_validate(
            &BaselineFactory {
                spec: baselines::lookup("tfidf_forest")?,
                vocab,
                encoder: bcfg.representation.clone(),
                seed: 9,
                dtype: DType::F32,
                device: Device::Cpu,
            },
            &d1,
            &plan,
            &train,
            &opts,
        )?;
        let iid = bloom.aggregates.iid_accuracy;
        let ood = bloom.aggregates.ood_accuracy.expect("OOD scored");
        let rf = forest.aggregates.iid_accuracy;
        let p = paired_significance(
            &bloom.per_fold.iter().map(|f| f.iid_accuracy).collect::<Vec<_>>(),
            &forest.per_fold.iter().map(|f| f.iid_accuracy).collect::<Vec<_>>(),
        )?;
        let targets = [
            iid.mean >= 0.80,
            (iid.mean - ood.mean) * 100.0 >= 10.0,
            (rf.mean * 100.0 - 70.66).abs() <= 10.0,
        ];
        Ok(format!(
            "[{source}] BloomNet IID acc {:.2} ± {:.2} (reference 87.50 ± 1.88, target >= 80), OOD {:.2} ± {:.2} (gap {:.1} pts); \
             TF-IDF+forest IID {:.2} ± {:.2} (reference 70.66, target within 10 pts); permutation p {:.4}; targets met: {}/3",
            iid.mean * 100.0,
            iid.std * 100.0,
            ood.mean * 100.0,
            ood.std * 100.0,
            (iid.mean - ood.mean) * 100.0,
            rf.mean * 100.0,
            rf.std * 100.0,
            p.permutation_p_value,
            targets.iter().filter(|t| **t).count()
        ))
    };
    match run() {
        Ok(s) => s,
        Err(e) => format!("[{source}] run failed: {e}"),
    }
}

fn criterion_10() -> Outcome {
    let b = [0.71, 0.64, 0.69, 0.73, 0.66];
    let a: Vec<f64> = b.iter().map(|x| x + 0.04).collect();
    let s = paired_significance(&a, &b).map_err(err)?;
    check(s.permutation_exact, "enumeration not exact")?;
    check((s.permutation_p_value - 0.0625).abs() < EXACT_TOL, format!("shifted p = {}", s.permutation_p_value))?;
    let same = paired_significance(&b, &b).map_err(err)?;
    check(same.permutation_p_value == 1.0 && same.t_p_value == 1.0, "identical lists did not give p = 1")?;
    Ok(format!("shifted scores p = {}, identical scores p = 1", s.permutation_p_value))
}

fn main() {
    // Honour `cargo test -- --list` and filters by running everything but
    // printing nothing when only listing.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 freeze invariant", criterion_1),
        ("2 attention normalisation", criterion_2),
        ("3 gradient checks", criterion_3),
        ("4 fusion and shapes", criterion_4),
        ("5 metric oracles", criterion_5),
        ("6 fold properties", criterion_6),
        ("7 tiny overfit", criterion_7),
        ("8 ablation equivalence", criterion_8),
        ("10 significance machinery", criterion_10),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        match f() {
            Ok(msg) => println!("PASS criterion {name}: {msg} [{:.1}s]", t.elapsed().as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg} [{:.1}s]", t.elapsed().as_secs_f64());
            }
        }
        if name.starts_with("8 ") {
            let t = Instant::now();
            println!("REPORT criterion 9 soft reproduction: {} [{:.1}s]", criterion_9(), t.elapsed().as_secs_f64());
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
