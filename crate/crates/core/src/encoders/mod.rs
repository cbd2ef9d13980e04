//! The three pooled sequence encoders of BloomNet: the trainable
//! representation encoder and the frozen part-of-speech and named-entity
//! encoders, all behind [`Encoder`].
//!
//! An encoder is identified by a checkpoint id. Two kinds resolve:
//!
//! * `builtin:tiny`, `builtin:small`, `builtin:base`: randomly initialised
//!   BERT-layout encoders with a hashing word tokenizer. Their weights are a
//!   pure function of the id and role, which makes them stand-ins for
//!   pretrained checkpoints on machines without any.
//! * a local directory holding a Hugging Face `config.json`,
//!   `tokenizer.json` and `model.safetensors` (BERT or RoBERTa layout,
//!   with or without a task head).

mod tokenize;
pub mod transformer;

pub use tokenize::{split_words, SubwordTokenizer, TokenizedInput, TokenizerSpec};
pub use transformer::{SelfAttentionBlock, TransformerConfig, TransformerEncoder};

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use candle_core::{DType, Device, IndexOp, Tensor, Var};
use candle_nn::VarBuilder;
use serde::{Deserialize, Serialize};

use crate::nn::{self, Mode, ParamStore};
use crate::seed;
use crate::{Error, Result};

/// Which encoder of the model a config describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderRole {
    Representation,
    Pos,
    Ner,
}

impl EncoderRole {
    pub fn branch(self) -> Branch {
        match self {
            EncoderRole::Representation => Branch::Rep,
            EncoderRole::Pos => Branch::Pos,
            EncoderRole::Ner => Branch::Ner,
        }
    }

    /// Linguistic encoders are frozen; the representation encoder trains.
    pub fn frozen(self) -> bool {
        !matches!(self, EncoderRole::Representation)
    }
}

/// Tag of a pooled vector; fusion order is rep, pos, ner, hwa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Rep,
    Pos,
    Ner,
    Hwa,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Rep => "rep",
            Branch::Pos => "pos",
            Branch::Ner => "ner",
            Branch::Hwa => "hwa",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Final hidden state of the first (sequence-start) token.
    Cls,
    /// Mask-weighted mean of the final hidden states; used when the
    /// tokenizer emits no start marker.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub role: EncoderRole,
    pub pretrained_id: String,
    pub hidden_dim: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    pub frozen: bool,
    /// Forces a pooling mode; chosen from the tokenizer when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooling: Option<Pooling>,
}

pub const DEFAULT_MAX_LEN: usize = 128;

fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

impl EncoderConfig {
    pub fn new(role: EncoderRole, pretrained_id: impl Into<String>, hidden_dim: usize) -> Self {
        Self {
            role,
            pretrained_id: pretrained_id.into(),
            hidden_dim,
            max_len: DEFAULT_MAX_LEN,
            frozen: role.frozen(),
            pooling: None,
        }
    }

    /// Config for a built-in checkpoint, hidden size read from its architecture.
    pub fn builtin(role: EncoderRole, name: &str) -> Result<Self> {
        let id = format!("builtin:{name}");
        let arch = builtin_arch(&id).ok_or_else(|| Error::UnknownCheckpoint(id.clone()))?;
        Ok(Self::new(role, id, arch.hidden_size))
    }

    /// Config for a built-in name (`builtin:small`) or a checkpoint
    /// directory, hidden size read from the architecture either way.
    pub fn resolve(role: EncoderRole, id: &str) -> Result<Self> {
        if let Some(arch) = builtin_arch(id) {
            return Ok(Self::new(role, id, arch.hidden_size));
        }
        let config_path = Path::new(id).join("config.json");
        if !config_path.is_file() {
            return Err(Error::UnknownCheckpoint(id.to_string()));
        }
        let raw = std::fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
        let arch = TransformerConfig::from_hf_json(&serde_json::from_str(&raw)?)?;
        Ok(Self::new(role, id, arch.hidden_size))
    }

    pub fn validate(&self) -> Result<()> {
        if self.frozen != self.role.frozen() {
            return Err(Error::InvalidArgument(format!(
                "{:?} encoder must have frozen = {}",
                self.role,
                self.role.frozen()
            )));
        }
        if self.hidden_dim == 0 || self.max_len < 3 {
            return Err(Error::InvalidArgument("encoder hidden_dim and max_len must be positive".into()));
        }
        Ok(())
    }
}

/// A pooled vector from one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledRepresentation {
    pub branch: Branch,
    pub vector: Vec<f64>,
}

impl PooledRepresentation {
    pub fn new(branch: Branch, vector: Vec<f64>) -> Result<Self> {
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{branch} representation")));
        }
        Ok(Self { branch, vector })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Architectures of the built-in checkpoints.
pub fn builtin_arch(id: &str) -> Option<TransformerConfig> {
    let (hidden, layers, heads, inter, vocab, positions) = match id {
        "builtin:tiny" => (32, 2, 2, 64, 2048, 130),
        "builtin:small" => (128, 2, 4, 512, 8192, 514),
        "builtin:base" => (768, 12, 12, 3072, 50265, 514),
        _ => return None,
    };
    Some(TransformerConfig {
        vocab_size: vocab,
        hidden_size: hidden,
        num_hidden_layers: layers,
        num_attention_heads: heads,
        intermediate_size: inter,
        max_position_embeddings: positions,
        type_vocab_size: 1,
        layer_norm_eps: 1e-12,
        hidden_dropout_prob: 0.1,
        attention_probs_dropout_prob: 0.1,
        position_offset: 0,
    })
}

pub const BUILTIN_IDS: [&str; 3] = ["builtin:tiny", "builtin:small", "builtin:base"];

fn role_label(role: EncoderRole) -> &'static str {
    match role {
        EncoderRole::Representation => "encoder.rep",
        EncoderRole::Pos => "encoder.pos",
        EncoderRole::Ner => "encoder.ner",
    }
}

enum Params {
    Trainable(ParamStore),
    Frozen {
        tensors: HashMap<String, Tensor>,
        checksum: String,
    },
}

/// A loaded encoder with its tokenizer.
///
/// Frozen encoders hold plain tensors (not variables), so they never enter
/// the autodiff graph or an optimizer, always run in evaluation mode, and
/// memoise pooled outputs per text.
pub struct Encoder {
    config: EncoderConfig,
    arch: TransformerConfig,
    tokenizer: SubwordTokenizer,
    pooling: Pooling,
    model: TransformerEncoder,
    params: Params,
    dtype: DType,
    device: Device,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

/// Everything needed to rebuild an encoder from a model checkpoint directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderManifest {
    pub config: EncoderConfig,
    pub arch: TransformerConfig,
    pub tokenizer: TokenizerSpec,
    pub pooling: Pooling,
    pub weights: String,
    pub checksum: String,
}

impl Encoder {
    /// Resolve `config.pretrained_id` and load it. Frozen roles come back frozen.
    pub fn load(config: &EncoderConfig, dtype: DType, device: &Device) -> Result<Self> {
        config.validate()?;
        let id = config.pretrained_id.as_str();
        let (arch, tokenizer, weights) = if let Some(arch) = builtin_arch(id) {
            let salt = seed::derive(seed::hash_str(0, id), role_label(config.role));
            let spec = TokenizerSpec::Hashing {
                vocab_size: arch.vocab_size,
                salt,
            };
            (arch, spec, None)
        } else {
            let dir = Path::new(id);
            if !dir.is_dir() {
                return Err(Error::UnknownCheckpoint(id.to_string()));
            }
            let (arch, spec, weights) = read_hf_checkpoint(dir, device)?;
            (arch, spec, Some(weights))
        };
        let init_seed = seed::derive(seed::hash_str(0, id), role_label(config.role));
        let encoder = Self::from_parts(config, arch, tokenizer, weights.as_ref(), init_seed, dtype, device)?;
        Ok(if config.frozen { encoder.freeze()? } else { encoder })
    }

    fn from_parts(
        config: &EncoderConfig,
        arch: TransformerConfig,
        tokenizer: TokenizerSpec,
        weights: Option<&HashMap<String, Tensor>>,
        init_seed: u64,
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        if arch.hidden_size != config.hidden_dim {
            return Err(Error::DimensionMismatch {
                what: format!("hidden size of checkpoint {:?}", config.pretrained_id),
                expected: config.hidden_dim,
                found: arch.hidden_size,
            });
        }
        if config.max_len > arch.max_sequence() {
            return Err(Error::InvalidArgument(format!(
                "max_len {} exceeds the {} positions of {:?}",
                config.max_len,
                arch.max_sequence(),
                config.pretrained_id
            )));
        }
        let tokenizer = SubwordTokenizer::new(tokenizer, config.max_len)?;
        let pooling = config.pooling.unwrap_or(if tokenizer.has_start_marker() {
            Pooling::Cls
        } else {
            Pooling::Mean
        });
        let store = ParamStore::new(init_seed, dtype, device);
        let model = TransformerEncoder::new(&arch, store.var_builder())?;
        if let Some(w) = weights {
            store.assign_from(w)?;
        }
        Ok(Self {
            config: config.clone(),
            arch,
            tokenizer,
            pooling,
            model,
            params: Params::Trainable(store),
            dtype,
            device: device.clone(),
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Detach every parameter from training: the model is rebuilt over
    /// plain tensor copies and a checksum of them is recorded.
    pub fn freeze(self) -> Result<Self> {
        let tensors = match &self.params {
            Params::Frozen { .. } => return Ok(self),
            Params::Trainable(store) => store.tensors()?,
        };
        let checksum = nn::checksum_tensors(&tensors);
        let vb = VarBuilder::from_tensors(tensors.clone(), self.dtype, &self.device);
        let model = TransformerEncoder::new(&self.arch, vb)?;
        Ok(Self {
            model,
            params: Params::Frozen { tensors, checksum },
            ..self
        })
    }

    pub fn is_frozen(&self) -> bool {
        matches!(self.params, Params::Frozen { .. })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn arch(&self) -> &TransformerConfig {
        &self.arch
    }

    pub fn pooling(&self) -> Pooling {
        self.pooling
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn hidden_dim(&self) -> usize {
        self.arch.hidden_size
    }

    pub fn tokenizer(&self) -> &SubwordTokenizer {
        &self.tokenizer
    }

    /// Parameters the optimizer may update; empty when frozen.
    pub fn trainable_vars(&self) -> Vec<Var> {
        match &self.params {
            Params::Trainable(store) => store.vars(),
            Params::Frozen { .. } => Vec::new(),
        }
    }

    /// Checksum of the current parameter values.
    pub fn checksum(&self) -> String {
        match &self.params {
            Params::Trainable(store) => store.checksum(),
            Params::Frozen { tensors, .. } => nn::checksum_tensors(tensors),
        }
    }

    /// Checksum recorded at freeze time.
    pub fn frozen_checksum(&self) -> Option<&str> {
        match &self.params {
            Params::Frozen { checksum, .. } => Some(checksum),
            Params::Trainable(_) => None,
        }
    }

    pub fn tokenize(&self, text: &str) -> Result<TokenizedInput> {
        self.tokenizer.tokenize(text)
    }

    /// Pooled representations `(batch, hidden)` for tokenized inputs.
    pub fn encode_batch(&self, inputs: &[TokenizedInput], mode: Mode<'_>) -> Result<Tensor> {
        let mode = if self.is_frozen() { Mode::Eval } else { mode };
        let seqs: Vec<&[u32]> = inputs.iter().map(|x| x.token_ids.as_slice()).collect();
        let (ids, mask) = nn::pad_batch(&seqs, self.tokenizer.pad_id(), 1, &self.device)?;
        let hidden = self.model.forward(&ids, &mask, mode)?;
        let pooled = match self.pooling {
            Pooling::Cls => hidden.i((.., 0, ..))?.contiguous()?,
            Pooling::Mean => nn::masked_mean(&hidden, &mask)?,
        };
        Ok(if self.is_frozen() { pooled.detach() } else { pooled })
    }

    pub fn encode_pooled(&self, input: &TokenizedInput) -> Result<PooledRepresentation> {
        let pooled = self.encode_batch(std::slice::from_ref(input), Mode::Eval)?;
        let row = nn::rows_f64(&pooled)?.remove(0);
        PooledRepresentation::new(self.config.role.branch(), row)
    }

    /// Tokenize and encode. Frozen encoders answer repeated texts from the cache.
    pub fn encode_texts(&self, texts: &[&str], mode: Mode<'_>) -> Result<Tensor> {
        if !self.is_frozen() {
            let inputs = texts.iter().map(|t| self.tokenize(t)).collect::<Result<Vec<_>>>()?;
            return self.encode_batch(&inputs, mode);
        }
        let missing: Vec<&str> = {
            let cache = self.cache.lock().expect("cache lock");
            let mut seen = std::collections::HashSet::new();
            texts
                .iter()
                .copied()
                .filter(|t| !cache.contains_key(*t) && seen.insert(*t))
                .collect()
        };
        if !missing.is_empty() {
            let inputs = missing.iter().map(|t| self.tokenize(t)).collect::<Result<Vec<_>>>()?;
            let rows = nn::rows_f64(&self.encode_batch(&inputs, Mode::Eval)?)?;
            let mut cache = self.cache.lock().expect("cache lock");
            for (t, row) in missing.into_iter().zip(rows) {
                cache.insert(t.to_string(), row);
            }
        }
        let cache = self.cache.lock().expect("cache lock");
        let dim = self.hidden_dim();
        let mut flat = Vec::with_capacity(texts.len() * dim);
        for t in texts {
            flat.extend_from_slice(&cache[*t]);
        }
        Ok(Tensor::from_vec(flat, (texts.len(), dim), &self.device)?.to_dtype(self.dtype)?)
    }

    /// Write weights (and a copy of the tokenizer file, if any) into `dir`
    /// under `stem`, returning the manifest entry.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<EncoderManifest> {
        let weights = format!("{stem}.safetensors");
        let tensors = match &self.params {
            Params::Trainable(store) => store.tensors()?,
            Params::Frozen { tensors, .. } => tensors.clone(),
        };
        candle_core::safetensors::save(&tensors, dir.join(&weights))?;
        let tokenizer = match self.tokenizer.spec() {
            TokenizerSpec::File { path } => {
                let name = format!("{stem}.tokenizer.json");
                std::fs::copy(path, dir.join(&name)).map_err(|e| Error::io(path, e))?;
                TokenizerSpec::File { path: PathBuf::from(name) }
            }
            spec => spec.clone(),
        };
        Ok(EncoderManifest {
            config: self.config.clone(),
            arch: self.arch.clone(),
            tokenizer,
            pooling: self.pooling,
            weights,
            checksum: nn::checksum_tensors(&tensors),
        })
    }

    /// Rebuild an encoder saved by [`Encoder::save`].
    pub fn load_saved(dir: &Path, manifest: &EncoderManifest, dtype: DType, device: &Device) -> Result<Self> {
        let tokenizer = match &manifest.tokenizer {
            TokenizerSpec::File { path } => TokenizerSpec::File { path: dir.join(path) },
            spec => spec.clone(),
        };
        let weights = candle_core::safetensors::load(dir.join(&manifest.weights), device)?;
        let mut config = manifest.config.clone();
        config.pooling = Some(manifest.pooling);
        let encoder = Self::from_parts(&config, manifest.arch.clone(), tokenizer, Some(&weights), 0, dtype, device)?;
        Ok(if config.frozen { encoder.freeze()? } else { encoder })
    }
}

/// Load a Hugging Face checkpoint directory, keeping only encoder-body
/// weights with any model prefix (`roberta.`, `bert.`) stripped.
fn read_hf_checkpoint(
    dir: &Path,
    device: &Device,
) -> Result<(TransformerConfig, TokenizerSpec, HashMap<String, Tensor>)> {
    let config_path = dir.join("config.json");
    let raw = std::fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
    let arch = TransformerConfig::from_hf_json(&serde_json::from_str(&raw)?)?;
    let tokenizer_path = dir.join("tokenizer.json");
    if !tokenizer_path.is_file() {
        return Err(Error::Checkpoint(format!("{} has no tokenizer.json", dir.display())));
    }
    let weights_path = dir.join("model.safetensors");
    if !weights_path.is_file() {
        return Err(Error::Checkpoint(format!("{} has no model.safetensors", dir.display())));
    }
    let raw_weights = candle_core::safetensors::load(&weights_path, device)?;
    let mut weights = HashMap::new();
    for (name, t) in raw_weights {
        let body = ["roberta.", "bert.", "model.", "encoder_model."]
            .iter()
            .find_map(|p| name.strip_prefix(p))
            .unwrap_or(&name);
        if !(body.starts_with("embeddings.") || body.starts_with("encoder.")) {
            continue;
        }
        let body = body
            .replace("LayerNorm.gamma", "LayerNorm.weight")
            .replace("LayerNorm.beta", "LayerNorm.bias");
        weights.insert(body, t);
    }
    Ok((
        arch,
        TokenizerSpec::File {
            path: tokenizer_path,
        },
        weights,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(role: EncoderRole) -> Encoder {
        Encoder::load(&EncoderConfig::builtin(role, "tiny").unwrap(), DType::F32, &Device::Cpu).unwrap()
    }

    #[test]
    fn roles_freeze_as_configured() {
        assert!(!tiny(EncoderRole::Representation).is_frozen());
        let pos = tiny(EncoderRole::Pos);
        assert!(pos.is_frozen());
        assert!(pos.trainable_vars().is_empty());
        assert_eq!(pos.frozen_checksum().unwrap(), pos.checksum());
        // distinct roles of the same checkpoint id carry distinct weights
        assert_ne!(pos.checksum(), tiny(EncoderRole::Ner).checksum());
    }

    #[test]
    fn unknown_id_and_dimension_mismatch() {
        let cfg = EncoderConfig::new(EncoderRole::Representation, "no-such-model", 768);
        assert!(matches!(
            Encoder::load(&cfg, DType::F32, &Device::Cpu),
            Err(Error::UnknownCheckpoint(_))
        ));
        let cfg = EncoderConfig::new(EncoderRole::Representation, "builtin:tiny", 768);
        assert!(matches!(
            Encoder::load(&cfg, DType::F32, &Device::Cpu),
            Err(Error::DimensionMismatch { expected: 768, found: 32, .. })
        ));
        let mut cfg = EncoderConfig::builtin(EncoderRole::Pos, "tiny").unwrap();
        cfg.frozen = false;
        assert!(Encoder::load(&cfg, DType::F32, &Device::Cpu).is_err());
    }

    #[test]
    fn pooled_dimension_and_determinism() {
        let enc = tiny(EncoderRole::Representation);
        for text in ["Why?", "Compare the two poems and explain which one uses imagery better."] {
            let x = enc.tokenize(text).unwrap();
            let a = enc.encode_pooled(&x).unwrap();
            let b = enc.encode_pooled(&x).unwrap();
            assert_eq!(a.dim(), 32);
            assert_eq!(a, b);
            assert_eq!(a.branch, Branch::Rep);
        }
    }

    #[test]
    fn frozen_cache_matches_direct_encoding() {
        let enc = tiny(EncoderRole::Ner);
        let texts = ["Name the capital of France.", "Design a poster.", "Name the capital of France."];
        let batch = nn::rows_f64(&enc.encode_texts(&texts, Mode::Eval).unwrap()).unwrap();
        let direct = enc.encode_pooled(&enc.tokenize(texts[1]).unwrap()).unwrap();
        for (a, b) in batch[1].iter().zip(&direct.vector) {
            assert!((a - b).abs() < 1e-5);
        }
        assert_eq!(batch[0], batch[2]);
    }

    #[test]
    fn save_and_reload_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let enc = tiny(EncoderRole::Pos);
        let manifest = enc.save(dir.path(), "pos").unwrap();
        let back = Encoder::load_saved(dir.path(), &manifest, DType::F32, &Device::Cpu).unwrap();
        assert!(back.is_frozen());
        assert_eq!(back.checksum(), enc.checksum());
        let x = enc.tokenize("Summarize the chapter.").unwrap();
        assert_eq!(enc.encode_pooled(&x).unwrap(), back.encode_pooled(&x).unwrap());
    }
}
