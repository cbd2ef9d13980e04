use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::encoders::{Encoder, EncoderConfig, EncoderManifest, EncoderRole};
use crate::harness::NeuralModel;
use crate::model::{init_seed, ClassifierHead, HEAD_COMPONENT};
use crate::nn::{Mode, ParamStore};
use crate::{Error, Result};

pub(crate) const KIND: &str = "encoder_finetune";

/// A representation encoder with a linear softmax head on its pooled
/// output, trained end to end.
///
/// The head is initialised exactly as BloomNet's head is for the same
/// seed, so with identical seeds and data order this model and the
/// BloomNet `base` variant follow the same trajectory.
pub struct EncoderFinetune {
    encoder: Encoder,
    head_store: ParamStore,
    head: ClassifierHead,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    kind: String,
    seed: u64,
    dtype: String,
    encoder: EncoderManifest,
    head_weights: String,
}

impl EncoderFinetune {
    pub fn new(config: &EncoderConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        if config.role != EncoderRole::Representation || config.frozen {
            return Err(Error::InvalidArgument(
                "fine-tuning needs a trainable representation encoder".into(),
            ));
        }
        let encoder = Encoder::load(config, dtype, device)?;
        Self::with_encoder(encoder, seed)
    }

    fn with_encoder(encoder: Encoder, seed: u64) -> Result<Self> {
        let head_store = ParamStore::new(init_seed(seed, HEAD_COMPONENT), encoder.dtype(), encoder.device());
        let head = ClassifierHead::new(encoder.hidden_dim(), head_store.var_builder().pp(HEAD_COMPONENT))?;
        Ok(Self {
            encoder,
            head_store,
            head,
            seed,
        })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn head(&self) -> &ClassifierHead {
        &self.head
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let encoder = self.encoder.save(dir, "representation")?;
        self.head_store.save(&dir.join("head.safetensors"))?;
        let m = Manifest {
            kind: KIND.into(),
            seed: self.seed,
            dtype: crate::nn::dtype_name(self.encoder.dtype()).into(),
            encoder,
            head_weights: "head.safetensors".into(),
        };
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&m)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, device: &Device) -> Result<Self> {
        let path = dir.join("manifest.json");
        let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&raw)?;
        if m.kind != KIND {
            return Err(Error::Checkpoint(format!("{} holds a {:?} model", dir.display(), m.kind)));
        }
        let dtype = crate::nn::parse_dtype(&m.dtype)?;
        let encoder = Encoder::load_saved(dir, &m.encoder, dtype, device)?;
        let model = Self::with_encoder(encoder, m.seed)?;
        model.head_store.load_into(&dir.join(&m.head_weights))?;
        Ok(model)
    }
}

impl NeuralModel for EncoderFinetune {
    fn name(&self) -> String {
        KIND.into()
    }

    fn logits(&self, texts: &[&str], mode: Mode<'_>) -> Result<Tensor> {
        if texts.is_empty() {
            return Err(Error::Empty("batch of texts".into()));
        }
        self.head.logits(&self.encoder.encode_texts(texts, mode)?)
    }

    fn trainable_vars(&self) -> Vec<Var> {
        let mut v = self.encoder.trainable_vars();
        v.extend(self.head_store.vars());
        v
    }

    fn checksum(&self) -> String {
        let joined = format!("{};{}", self.encoder.checksum(), self.head_store.checksum());
        crate::nn::hex(&<sha2::Sha256 as sha2::Digest>::digest(joined.as_bytes()))
    }

    fn save(&self, dir: &Path) -> Result<()> {
        EncoderFinetune::save(self, dir)
    }
}
