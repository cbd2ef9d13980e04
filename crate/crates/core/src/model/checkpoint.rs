//! Self-contained checkpoint directories: every branch, the head, the
//! tokenizer files and the word vocabulary, described by `manifest.json`.

use std::path::Path;

use candle_core::Device;
use serde::{Deserialize, Serialize};

use super::{BloomNet, BloomNetConfig, ClassifierHead, HEAD_COMPONENT};
use crate::corpus::CognitiveLevel;
use crate::encoders::{Encoder, EncoderManifest};
use crate::hwa::{Hwa, WordVocab};
use crate::nn::ParamStore;
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const KIND: &str = "bloomnet";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BloomNetManifest {
    pub kind: String,
    pub config: BloomNetConfig,
    pub fusion_dims: Vec<(String, usize)>,
    pub label_order: Vec<String>,
    pub seed: u64,
    pub representation: EncoderManifest,
    pub pos: Option<EncoderManifest>,
    pub ner: Option<EncoderManifest>,
    pub hwa_weights: Option<String>,
    pub word_vocab: String,
    pub head_weights: String,
    pub checksum: String,
}

const VOCAB_FILE: &str = "word_vocab.json";

impl BloomNet {
    /// Write the model into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let representation = self.representation.save(dir, "representation")?;
        let pos = self.pos.as_ref().map(|e| e.save(dir, "pos")).transpose()?;
        let ner = self.ner.as_ref().map(|e| e.save(dir, "ner")).transpose()?;
        let hwa_weights = match &self.hwa {
            Some(h) => {
                h.store().save(&dir.join("hwa.safetensors"))?;
                h.vocab().save(&dir.join(VOCAB_FILE))?;
                Some("hwa.safetensors".to_string())
            }
            None => {
                WordVocab::build(std::iter::empty(), 1).save(&dir.join(VOCAB_FILE))?;
                None
            }
        };
        self.head_store.save(&dir.join("head.safetensors"))?;
        let manifest = BloomNetManifest {
            kind: KIND.into(),
            config: self.config.clone(),
            fusion_dims: self
                .layout
                .segments()
                .iter()
                .map(|(b, d)| (b.name().to_string(), *d))
                .collect(),
            label_order: CognitiveLevel::ALL.iter().map(|l| l.name().to_string()).collect(),
            seed: self.config.seed,
            representation,
            pos,
            ner,
            hwa_weights,
            word_vocab: VOCAB_FILE.into(),
            head_weights: "head.safetensors".into(),
            checksum: self.checksum(),
        };
        let path = dir.join(MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    /// Rebuild a model written by [`BloomNet::save`].
    pub fn load(dir: &Path, device: &Device) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: BloomNetManifest = serde_json::from_str(&raw)?;
        if m.kind != KIND {
            return Err(Error::Checkpoint(format!("{} holds a {:?} model", dir.display(), m.kind)));
        }
        let expected: Vec<String> = CognitiveLevel::ALL.iter().map(|l| l.name().to_string()).collect();
        if m.label_order != expected {
            return Err(Error::Checkpoint(format!("label order {:?} differs from {:?}", m.label_order, expected)));
        }
        let config = m.config;
        let dtype = config.dtype()?;
        let representation = Encoder::load_saved(dir, &m.representation, dtype, device)?;
        let pos = m.pos.as_ref().map(|x| Encoder::load_saved(dir, x, dtype, device)).transpose()?;
        let ner = m.ner.as_ref().map(|x| Encoder::load_saved(dir, x, dtype, device)).transpose()?;
        let hwa = match &m.hwa_weights {
            Some(file) => {
                let vocab = WordVocab::load(&dir.join(&m.word_vocab))?;
                let store = ParamStore::new(0, dtype, device);
                let hwa = Hwa::new(&config.hwa, vocab, store.clone())?;
                store.load_into(&dir.join(file))?;
                Some(hwa)
            }
            None => None,
        };
        let head_store = ParamStore::new(0, dtype, device);
        let head = ClassifierHead::new(config.fusion_width()?, head_store.var_builder().pp(HEAD_COMPONENT))?;
        head_store.load_into(&dir.join(&m.head_weights))?;
        let model = Self::from_parts(&config, representation, pos, ner, hwa, head_store, head)?;
        if model.checksum() != m.checksum {
            return Err(Error::Checkpoint(format!("{}: parameter checksum mismatch", dir.display())));
        }
        Ok(model)
    }
}
