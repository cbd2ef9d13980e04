//! Experiment configuration.
//!
//! A config is a TOML document with a top-level `seed` and one level of
//! sections: `[data]`, `[model]`, `[encoders]`, `[hwa]`, `[train]`,
//! `[folds]`, `[output]` and an optional `[hyperparams]` table of baseline
//! overrides keyed `"<baseline>.<key>"`. Any value can be overridden from
//! the environment with `BLOOMNET_<SECTION>__<KEY>` (for example
//! `BLOOMNET_TRAIN__EPOCHS=3`); top-level keys use `BLOOMNET_<KEY>`.
//! Override values are parsed as TOML scalars and fall back to strings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use bloomnet::baselines::{self, BaselineSpec};
use bloomnet::encoders::{EncoderConfig, EncoderRole};
use bloomnet::harness::{EarlyStopMetric, OodProtocol, TrainConfig};
use bloomnet::hwa::HwaConfig;
use bloomnet::{BloomNetConfig, Variant};
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "BLOOMNET_";

/// Model name that runs the four-variant ablation.
pub const ABLATION: &str = "ablation";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// The one seed every random stream (folds, init, shuffle, dropout) derives from.
    #[serde(default)]
    pub seed: u64,
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub encoders: EncoderSection,
    #[serde(default = "small_hwa")]
    pub hwa: HwaConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub folds: FoldSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hyperparams: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Training / in-distribution corpus.
    pub dataset1: PathBuf,
    /// Out-of-distribution corpus, scored by every fold model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset2: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// `bloomnet`, a registered baseline, or `ablation`.
    pub name: String,
    pub variant: Variant,
    pub fusion_dropout: f64,
    pub dtype: String,
    /// Models run by `compare`; the first is the reference for significance.
    pub compare: Vec<String>,
    /// Minimum corpus frequency for the word vocabulary.
    pub min_word_freq: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            name: "bloomnet".into(),
            variant: Variant::Full,
            fusion_dropout: 0.0,
            dtype: "f32".into(),
            compare: vec![
                "bloomnet".into(),
                "tfidf_forest".into(),
                "cnn".into(),
                "lstm".into(),
                "self_attention".into(),
                "encoder_finetune".into(),
            ],
            min_word_freq: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSection {
    /// Built-in name (`builtin:small`) or a checkpoint directory.
    pub representation: String,
    pub pos: String,
    pub ner: String,
    pub max_len: usize,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            representation: "builtin:small".into(),
            pos: "builtin:small".into(),
            ner: "builtin:small".into(),
            max_len: bloomnet::encoders::DEFAULT_MAX_LEN,
        }
    }
}

fn small_hwa() -> HwaConfig {
    BloomNetConfig::small().hwa
}

/// Training settings; the seed comes from the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub early_stop_metric: EarlyStopMetric,
    pub patience: usize,
    pub val_fraction: f64,
    pub eval_batch_size: usize,
    pub ood_protocol: OodProtocol,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            early_stop_metric: t.early_stop_metric,
            patience: t.patience,
            val_fraction: t.val_fraction,
            eval_batch_size: t.eval_batch_size,
            ood_protocol: t.ood_protocol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoldSection {
    pub k: usize,
    pub stratified: bool,
}

impl Default for FoldSection {
    fn default() -> Self {
        Self { k: 5, stratified: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Defaults to a name derived from the command, model and config digest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub save_checkpoints: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
            run_id: None,
            save_checkpoints: true,
        }
    }
}

impl ExperimentConfig {
    /// A config with every default and the given training corpus.
    pub fn with_dataset(dataset1: impl Into<PathBuf>) -> Self {
        Self {
            seed: 0,
            data: DataSection {
                dataset1: dataset1.into(),
                dataset2: None,
            },
            model: ModelSection::default(),
            encoders: EncoderSection::default(),
            hwa: small_hwa(),
            train: TrainSection::default(),
            folds: FoldSection::default(),
            output: OutputSection::default(),
            hyperparams: BTreeMap::new(),
        }
    }

    /// Parse TOML text, applying `BLOOMNET_` overrides from `env`.
    pub fn parse_with_env<I>(text: &str, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = text.parse().context("config is not valid TOML")?;
        apply_overrides(&mut table, env)?;
        let config: Self = table.try_into().map_err(|e: toml::de::Error| anyhow!("invalid config: {}", e.message()))?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_env(text, std::iter::empty())
    }

    /// Read a config file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config = Self::parse_with_env(&text, std::env::vars())
            .with_context(|| format!("in config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.data.dataset1 = rebase(base, &config.data.dataset1);
        config.data.dataset2 = config.data.dataset2.as_deref().map(|p| rebase(base, p));
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            early_stop_metric: t.early_stop_metric,
            patience: t.patience,
            seed: self.seed,
            val_fraction: t.val_fraction,
            eval_batch_size: t.eval_batch_size,
            ood_protocol: t.ood_protocol,
        }
    }

    fn encoder(&self, role: EncoderRole, id: &str) -> Result<EncoderConfig> {
        let mut cfg = EncoderConfig::resolve(role, id).with_context(|| format!("encoders: cannot resolve {id:?}"))?;
        cfg.max_len = self.encoders.max_len;
        Ok(cfg)
    }

    pub fn representation_encoder(&self) -> Result<EncoderConfig> {
        self.encoder(EncoderRole::Representation, &self.encoders.representation)
    }

    pub fn bloomnet_config(&self) -> Result<BloomNetConfig> {
        let cfg = BloomNetConfig {
            representation: self.representation_encoder()?,
            pos: self.encoder(EncoderRole::Pos, &self.encoders.pos)?,
            ner: self.encoder(EncoderRole::Ner, &self.encoders.ner)?,
            hwa: self.hwa.clone(),
            variant: self.model.variant,
            fusion_dropout: self.model.fusion_dropout,
            seed: self.seed,
            dtype: self.model.dtype.clone(),
        };
        cfg.validate().context("model")?;
        Ok(cfg)
    }

    /// The spec of a baseline with this config's overrides applied.
    pub fn baseline_spec(&self, name: &str) -> Result<BaselineSpec> {
        let prefix = format!("{name}.");
        let overrides: BTreeMap<String, f64> = self
            .hyperparams
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&prefix).map(|k| (k.to_string(), *v)))
            .collect();
        let spec = baselines::lookup(name)?
            .with_overrides(&overrides)
            .with_context(|| format!("hyperparams for {name}"))?;
        Ok(spec)
    }

    /// Check paths, names and every derived component config.
    pub fn validate(&self) -> Result<()> {
        if !self.data.dataset1.is_file() {
            bail!("data.dataset1: no such file {}", self.data.dataset1.display());
        }
        if let Some(p) = &self.data.dataset2 {
            if !p.is_file() {
                bail!("data.dataset2: no such file {}", p.display());
            }
        }
        if self.folds.k < 2 {
            bail!("folds.k must be at least 2, got {}", self.folds.k);
        }
        if self.model.min_word_freq == 0 {
            bail!("model.min_word_freq must be positive");
        }
        self.train_config().validate().context("train")?;
        self.check_model_name(&self.model.name).context("model.name")?;
        if self.model.compare.is_empty() {
            bail!("model.compare must name at least one model");
        }
        for name in &self.model.compare {
            if name == ABLATION {
                bail!("model.compare: {ABLATION:?} is not a single model");
            }
            self.check_model_name(name).context("model.compare")?;
        }
        for key in self.hyperparams.keys() {
            let Some((model, _)) = key.split_once('.') else {
                bail!("hyperparams: key {key:?} must look like \"<baseline>.<name>\"");
            };
            self.baseline_spec(model).context("hyperparams")?;
        }
        Ok(())
    }

    fn check_model_name(&self, name: &str) -> Result<()> {
        if name == "bloomnet" || name == ABLATION {
            self.bloomnet_config()?;
            return Ok(());
        }
        let spec = self.baseline_spec(name)?;
        if spec.family == baselines::Family::EncoderFinetune {
            self.representation_encoder()?;
        }
        Ok(())
    }
}

fn rebase(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() && !p.exists() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

/// Apply `BLOOMNET_SECTION__KEY=value` (or `BLOOMNET_KEY=value`) overrides.
pub fn apply_overrides<I>(table: &mut toml::Table, env: I) -> Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    for (name, raw) in env {
        let Some(path) = name.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let value = parse_scalar(&raw);
        match path.split_once("__") {
            Some((section, key)) => {
                let (section, key) = (section.to_ascii_lowercase(), key.to_ascii_lowercase());
                if section.is_empty() || key.is_empty() {
                    bail!("malformed override {name}");
                }
                let entry = table
                    .entry(section.clone())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                let toml::Value::Table(inner) = entry else {
                    bail!("override {name}: {section:?} is not a section");
                };
                inner.insert(key, value);
            }
            None => {
                table.insert(path.to_ascii_lowercase(), value);
            }
        }
    }
    Ok(())
}

fn parse_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    doc.parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[data]\ndataset1 = \"d1.csv\"\n";

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c, ExperimentConfig::with_dataset("d1.csv"));
        assert_eq!(c.train_config(), TrainConfig::default());
    }

    #[test]
    fn unknown_field_is_named() {
        let e = ExperimentConfig::parse("[data]\ndataset1 = \"x\"\n[train]\nepoch = 3\n").unwrap_err();
        assert!(format!("{e:#}").contains("epoch"), "{e:#}");
    }

    #[test]
    fn env_overrides_sections_and_top_level() {
        let env = [
            ("BLOOMNET_TRAIN__EPOCHS".to_string(), "3".to_string()),
            ("BLOOMNET_SEED".to_string(), "42".to_string()),
            ("BLOOMNET_MODEL__NAME".to_string(), "cnn".to_string()),
            ("OTHER".to_string(), "1".to_string()),
        ];
        let c = ExperimentConfig::parse_with_env(MINIMAL, env).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.seed, 42);
        assert_eq!(c.model.name, "cnn");
        assert_eq!(c.train_config().seed, 42);
    }

    #[test]
    fn hyperparam_overrides_reach_the_spec() {
        let mut c = ExperimentConfig::with_dataset("x");
        c.hyperparams.insert("cnn.filters".into(), 7.0);
        assert_eq!(c.baseline_spec("cnn").unwrap().get_usize("filters").unwrap(), 7);
        c.hyperparams.insert("cnn.nope".into(), 1.0);
        assert!(c.baseline_spec("cnn").is_err());
    }
}
