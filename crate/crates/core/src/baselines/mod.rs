//! Comparison models behind the same [`Classifier`] contract as BloomNet:
//! TF-IDF with a random forest, three word-level neural models trained
//! from scratch, and a fine-tuned representation encoder.
//!
//! The registry also reserves `vdcnn`, `han`, `rcnn` and
//! `seq2seq_attention`; they resolve to [`Error::Unimplemented`].

mod finetune;
pub mod forest;
pub mod neural;
pub mod tfidf;

pub use finetune::EncoderFinetune;
pub use forest::{ForestParams, RandomForest};
pub use neural::{build_neural_baseline, NeuralBaseline};
pub use tfidf::{classical_tokens, tfidf_features, TfidfState, TfidfVectorizer};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use candle_core::{DType, Device};
use serde::{Deserialize, Serialize};

use crate::corpus::{CognitiveLevel, Dataset};
use crate::encoders::EncoderConfig;
use crate::harness::{Classifier, History, ModelFactory, TrainConfig};
use crate::hwa::WordVocab;
use crate::metrics::{macro_f1, EvalRecord};
use crate::model::{init_seed, BloomNet, ClassDistribution};
use crate::nn;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    TfidfForest,
    Cnn,
    Lstm,
    SelfAttention,
    EncoderFinetune,
}

impl Family {
    pub fn key(self) -> &'static str {
        match self {
            Family::TfidfForest => "tfidf_forest",
            Family::Cnn => "cnn",
            Family::Lstm => "lstm",
            Family::SelfAttention => "self_attention",
            Family::EncoderFinetune => "encoder_finetune",
        }
    }

    /// Every hyperparameter of the family with its default.
    pub fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            Family::TfidfForest => &[
                ("n_trees", 100.0),
                ("max_depth", 0.0),
                ("min_samples_split", 2.0),
                ("max_features", 0.0),
            ],
            Family::Cnn => &[
                ("learning_rate", 1e-3),
                ("embed_dim", 300.0),
                ("filters", 100.0),
                ("dropout", 0.1),
                ("max_words", 128.0),
            ],
            Family::Lstm => &[
                ("learning_rate", 1e-3),
                ("embed_dim", 300.0),
                ("hidden", 768.0),
                ("layers", 4.0),
                ("dropout", 0.1),
                ("max_words", 128.0),
            ],
            Family::SelfAttention => &[
                ("learning_rate", 1e-3),
                ("embed_dim", 300.0),
                ("heads", 6.0),
                ("dropout", 0.1),
                ("max_words", 128.0),
            ],
            Family::EncoderFinetune => &[("learning_rate", 2e-5)],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// A registered baseline: its name, family and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub name: String,
    pub family: Family,
    pub hyperparams: BTreeMap<String, f64>,
}

const INTEGER_KEYS: [&str; 11] = [
    "n_trees",
    "max_depth",
    "min_samples_split",
    "max_features",
    "embed_dim",
    "filters",
    "hidden",
    "layers",
    "heads",
    "max_words",
    "seed",
];

impl BaselineSpec {
    pub fn with_defaults(name: impl Into<String>, family: Family) -> Self {
        Self {
            name: name.into(),
            family,
            hyperparams: family.defaults().iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    /// Replace hyperparameters; keys the family does not know are rejected.
    pub fn with_overrides(mut self, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        for (k, v) in overrides {
            if !self.hyperparams.contains_key(k) {
                return Err(Error::InvalidArgument(format!(
                    "{} has no hyperparameter {k:?} (known: {})",
                    self.name,
                    self.hyperparams.keys().cloned().collect::<Vec<_>>().join(", ")
                )));
            }
            self.hyperparams.insert(k.clone(), *v);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, _) in self.family.defaults() {
            if !self.hyperparams.contains_key(*k) {
                return Err(Error::InvalidArgument(format!("{}: missing hyperparameter {k:?}", self.name)));
            }
        }
        for (k, v) in &self.hyperparams {
            if !self.family.defaults().iter().any(|(d, _)| d == k) {
                return Err(Error::InvalidArgument(format!("{}: unknown hyperparameter {k:?}", self.name)));
            }
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::InvalidArgument(format!("{}: {k} = {v} must be finite and >= 0", self.name)));
            }
            if INTEGER_KEYS.contains(&k.as_str()) && v.fract() != 0.0 {
                return Err(Error::InvalidArgument(format!("{}: {k} = {v} must be an integer", self.name)));
            }
        }
        if let Some(&p) = self.hyperparams.get("dropout") {
            if p >= 1.0 {
                return Err(Error::InvalidArgument(format!("{}: dropout {p} must be < 1", self.name)));
            }
        }
        if let Some(&lr) = self.hyperparams.get("learning_rate") {
            if lr <= 0.0 {
                return Err(Error::InvalidArgument(format!("{}: learning_rate must be positive", self.name)));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<f64> {
        self.hyperparams
            .get(key)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("{}: missing hyperparameter {key:?}", self.name)))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        Ok(self.get(key)? as usize)
    }

    pub fn learning_rate(&self) -> Option<f64> {
        self.hyperparams.get("learning_rate").copied()
    }
}

/// Names reserved for baselines that are not implemented.
pub const RESERVED: [&str; 4] = ["vdcnn", "han", "rcnn", "seq2seq_attention"];

/// The implemented baselines with default hyperparameters.
pub fn registry() -> Vec<BaselineSpec> {
    [
        Family::TfidfForest,
        Family::Cnn,
        Family::Lstm,
        Family::SelfAttention,
        Family::EncoderFinetune,
    ]
    .into_iter()
    .map(|f| BaselineSpec::with_defaults(f.key(), f))
    .collect()
}

/// Every model name the tools accept: `bloomnet`, the implemented
/// baselines and the reserved names.
pub fn known_names() -> Vec<String> {
    std::iter::once("bloomnet".to_string())
        .chain(registry().into_iter().map(|s| s.name))
        .chain(RESERVED.iter().map(|s| s.to_string()))
        .collect()
}

pub fn lookup(name: &str) -> Result<BaselineSpec> {
    if RESERVED.contains(&name) {
        return Err(Error::Unimplemented(name.to_string()));
    }
    registry().into_iter().find(|s| s.name == name).ok_or_else(|| Error::UnknownModel {
        name: name.to_string(),
        known: known_names().join(", "),
    })
}

/// TF-IDF features fed to a random forest. Validation data is only scored.
pub struct TfidfForest {
    params: ForestParams,
    fitted: Option<(TfidfState, RandomForest)>,
}

#[derive(Serialize, Deserialize)]
struct ForestBlob {
    tfidf: TfidfState,
    forest: RandomForest,
}

impl TfidfForest {
    pub fn new(params: ForestParams) -> Self {
        Self { params, fitted: None }
    }

    pub fn from_spec(spec: &BaselineSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let opt = |k: &str| -> Result<Option<usize>> {
            let v = spec.get_usize(k)?;
            Ok((v > 0).then_some(v))
        };
        Ok(Self::new(ForestParams {
            n_trees: spec.get_usize("n_trees")?,
            max_depth: opt("max_depth")?,
            min_samples_split: spec.get_usize("min_samples_split")?,
            max_features: opt("max_features")?,
            bootstrap: true,
            seed,
        }))
    }

    fn blob_bytes(&self) -> Result<Option<Vec<u8>>> {
        self.fitted
            .as_ref()
            .map(|(tfidf, forest)| {
                let blob = ForestBlob {
                    tfidf: tfidf.clone(),
                    forest: forest.clone(),
                };
                bincode::serde::encode_to_vec(&blob, bincode::config::standard())
                    .map_err(|e| Error::Checkpoint(format!("encoding forest: {e}")))
            })
            .transpose()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("forest.bin");
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let (blob, _): (ForestBlob, usize) = bincode::serde::decode_from_slice(&bytes, bincode::config::standard())
            .map_err(|e| Error::Checkpoint(format!("decoding forest: {e}")))?;
        Ok(Self {
            params: blob.forest.params().clone(),
            fitted: Some((blob.tfidf, blob.forest)),
        })
    }
}

impl Classifier for TfidfForest {
    fn name(&self) -> String {
        Family::TfidfForest.key().into()
    }

    fn fit(&mut self, train: &Dataset, val: &Dataset, _config: &TrainConfig, _run: u64) -> Result<History> {
        let (x, tfidf) = tfidf_features(&train.texts(), None)?;
        let forest = RandomForest::fit(&x, &train.labels(), &self.params)?;
        self.fitted = Some((tfidf, forest));
        let preds = self.predict(&val.texts())?;
        let rec = EvalRecord::new(val.labels(), preds.iter().map(|d| d.predicted).collect())?;
        Ok(History {
            best_val_macro_f1: macro_f1(&rec),
            ..History::default()
        })
    }

    fn predict(&self, texts: &[&str]) -> Result<Vec<ClassDistribution>> {
        let (tfidf, forest) = self.fitted.as_ref().ok_or(Error::NotFitted)?;
        forest
            .vote_fractions(&tfidf.transform(texts))?
            .into_iter()
            .map(ClassDistribution::from_probs)
            .collect()
    }

    fn checksum(&self) -> String {
        let bytes = match self.blob_bytes() {
            Ok(Some(b)) => b,
            _ => serde_json::to_vec(&self.params).expect("params serialise"),
        };
        nn::hex(&<sha2::Sha256 as sha2::Digest>::digest(&bytes))
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let bytes = self.blob_bytes()?.ok_or(Error::NotFitted)?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, data: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, data).map_err(|e| Error::io(&p, e))
        };
        write("forest.bin", &bytes)?;
        write("forest.json", serde_json::to_string_pretty(&self.params)?.as_bytes())?;
        write("manifest.json", serde_json::to_string_pretty(&serde_json::json!({"kind": "tfidf_forest"}))?.as_bytes())
    }
}

/// Always predicts one level; a floor for every metric.
pub struct ConstantClassifier {
    pub level: CognitiveLevel,
}

impl Classifier for ConstantClassifier {
    fn name(&self) -> String {
        format!("constant {}", self.level)
    }

    fn fit(&mut self, _train: &Dataset, _val: &Dataset, _config: &TrainConfig, _run: u64) -> Result<History> {
        Ok(History::default())
    }

    fn predict(&self, texts: &[&str]) -> Result<Vec<ClassDistribution>> {
        Ok(texts.iter().map(|_| ClassDistribution::certain(self.level)).collect())
    }

    fn checksum(&self) -> String {
        format!("constant:{}", self.level)
    }

    fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("manifest.json");
        let m = serde_json::json!({"kind": "constant", "level": self.level});
        std::fs::write(&p, serde_json::to_string_pretty(&m)?).map_err(|e| Error::io(&p, e))
    }
}

/// Factory for a registered baseline.
pub struct BaselineFactory {
    pub spec: BaselineSpec,
    /// Word vocabulary of the from-scratch neural models.
    pub vocab: WordVocab,
    /// Encoder fine-tuned by `encoder_finetune`.
    pub encoder: EncoderConfig,
    pub seed: u64,
    pub dtype: DType,
    pub device: Device,
}

impl ModelFactory for BaselineFactory {
    fn name(&self) -> String {
        self.spec.name.clone()
    }

    fn build(&self) -> Result<Box<dyn Classifier>> {
        Ok(match self.spec.family {
            Family::TfidfForest => Box::new(TfidfForest::from_spec(&self.spec, init_seed(self.seed, &self.spec.name))?),
            Family::Cnn | Family::Lstm | Family::SelfAttention => Box::new(SpecifiedNeural {
                spec: self.spec.clone(),
                model: build_neural_baseline(
                    &self.spec,
                    self.vocab.clone(),
                    init_seed(self.seed, &self.spec.name),
                    self.dtype,
                    &self.device,
                )?,
            }),
            Family::EncoderFinetune => Box::new(EncoderFinetune::new(&self.encoder, self.seed, self.dtype, &self.device)?),
        })
    }

    fn train_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            learning_rate: self.spec.learning_rate().unwrap_or(base.learning_rate),
            ..base.clone()
        }
    }
}

#[derive(Serialize, Deserialize)]
struct NeuralManifest {
    kind: String,
    spec: BaselineSpec,
    dtype: String,
}

impl NeuralBaseline {
    pub fn save_checkpoint(&self, dir: &Path, spec: &BaselineSpec) -> Result<()> {
        self.save_weights(dir)?;
        let m = NeuralManifest {
            kind: "neural_baseline".into(),
            spec: spec.clone(),
            dtype: nn::dtype_name(self.store().dtype()).into(),
        };
        let p = dir.join("manifest.json");
        std::fs::write(&p, serde_json::to_string_pretty(&m)?).map_err(|e| Error::io(&p, e))
    }
}

/// A from-scratch neural baseline that remembers its spec, so its
/// checkpoints are self-describing.
pub struct SpecifiedNeural {
    pub spec: BaselineSpec,
    pub model: NeuralBaseline,
}

impl crate::harness::NeuralModel for SpecifiedNeural {
    fn name(&self) -> String {
        self.spec.name.clone()
    }

    fn logits(&self, texts: &[&str], mode: nn::Mode<'_>) -> Result<candle_core::Tensor> {
        self.model.logits(texts, mode)
    }

    fn trainable_vars(&self) -> Vec<candle_core::Var> {
        self.model.trainable_vars()
    }

    fn checksum(&self) -> String {
        crate::harness::NeuralModel::checksum(&self.model)
    }

    fn save(&self, dir: &Path) -> Result<()> {
        self.model.save_checkpoint(dir, &self.spec)
    }
}

/// Load any checkpoint directory written by a model's `save`.
pub fn load_checkpoint(dir: &Path, device: &Device) -> Result<Box<dyn Classifier>> {
    let path = dir.join("manifest.json");
    let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let value: serde_json::Value = serde_json::from_str(&raw)?;
    let kind = value.get("kind").and_then(|k| k.as_str()).unwrap_or_default();
    Ok(match kind {
        "bloomnet" => Box::new(BloomNet::load(dir, device)?),
        "encoder_finetune" => Box::new(EncoderFinetune::load(dir, device)?),
        "tfidf_forest" => Box::new(TfidfForest::load(dir)?),
        "constant" => Box::new(ConstantClassifier {
            level: serde_json::from_value(value["level"].clone())?,
        }),
        "neural_baseline" => {
            let m: NeuralManifest = serde_json::from_value(value)?;
            let vocab = WordVocab::load(&dir.join("word_vocab.json"))?;
            let model = build_neural_baseline(&m.spec, vocab, 0, nn::parse_dtype(&m.dtype)?, device)?;
            model.load_weights(dir)?;
            Box::new(SpecifiedNeural { spec: m.spec, model })
        }
        other => return Err(Error::Checkpoint(format!("{}: unknown model kind {other:?}", dir.display()))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_are_unique_and_reserved_names_refuse() {
        let names = known_names();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
        for r in RESERVED {
            assert!(matches!(lookup(r), Err(Error::Unimplemented(_))));
        }
        match lookup("gpt") {
            Err(Error::UnknownModel { known, .. }) => assert!(known.contains("tfidf_forest")),
            other => panic!("unexpected {:?}", other.map(|s| s.name)),
        }
    }

    #[test]
    fn spec_validation() {
        let lstm = lookup("lstm").unwrap();
        assert_eq!(lstm.get("hidden").unwrap(), 768.0);
        assert_eq!(lstm.get("layers").unwrap(), 4.0);
        assert_eq!(lstm.get("dropout").unwrap(), 0.1);
        let mut o = BTreeMap::new();
        o.insert("kernel".to_string(), 3.0);
        assert!(lstm.clone().with_overrides(&o).is_err());
        o.clear();
        o.insert("layers".to_string(), 2.5);
        assert!(lstm.clone().with_overrides(&o).is_err());
        o.insert("layers".to_string(), 2.0);
        assert_eq!(lstm.with_overrides(&o).unwrap().get_usize("layers").unwrap(), 2);
        assert_eq!(lookup("encoder_finetune").unwrap().learning_rate(), Some(2e-5));
        assert_eq!(lookup("cnn").unwrap().learning_rate(), Some(1e-3));
    }
}
