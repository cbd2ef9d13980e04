//! BloomNet: representation, linguistic and word-attention branches fused
//! by concatenation and classified by a single linear softmax layer.
//!
//! The branch set is controlled by [`Variant`]; the full model uses all
//! four branches, the ablation variants drop the word-attention branch,
//! the two frozen linguistic encoders, or both.

mod checkpoint;
pub mod fusion;
pub mod head;

pub use fusion::{fuse, FusedRepresentation, FusionLayout};
pub use head::{batch_loss, classify, distributions, loss, ClassDistribution, ClassifierHead};

use std::fmt;
use std::str::FromStr;

use candle_core::{DType, Device, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::encoders::{Branch, Encoder, EncoderConfig, EncoderRole, PooledRepresentation};
use crate::hwa::{Hwa, HwaConfig, WordVocab};
use crate::nn::{self, dropout, Mode, ParamStore};
use crate::seed;
use crate::{Error, Result};

/// Branch selection for the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Variant {
    /// Representation encoder and head only.
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "+WA")]
    WordAttention,
    #[serde(rename = "+POS-NER")]
    Linguistic,
    #[default]
    #[serde(rename = "+WA+POS-NER")]
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Base, Variant::WordAttention, Variant::Linguistic, Variant::Full];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::WordAttention => "+WA",
            Variant::Linguistic => "+POS-NER",
            Variant::Full => "+WA+POS-NER",
        }
    }

    pub fn uses_hwa(self) -> bool {
        matches!(self, Variant::WordAttention | Variant::Full)
    }

    pub fn uses_linguistic(self) -> bool {
        matches!(self, Variant::Linguistic | Variant::Full)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.name().to_ascii_lowercase() == norm || (norm == "full" && *v == Variant::Full))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BloomNetConfig {
    pub representation: EncoderConfig,
    pub pos: EncoderConfig,
    pub ner: EncoderConfig,
    pub hwa: HwaConfig,
    #[serde(default)]
    pub variant: Variant,
    /// Dropout on the fused vector before the head. Off by default.
    #[serde(default)]
    pub fusion_dropout: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dtype")]
    pub dtype: String,
}

fn default_dtype() -> String {
    "f32".into()
}

impl BloomNetConfig {
    /// All three encoders from the same built-in checkpoint family, with
    /// the given word-attention settings.
    pub fn with_builtin(name: &str, hwa: HwaConfig) -> Result<Self> {
        Ok(Self {
            representation: EncoderConfig::builtin(EncoderRole::Representation, name)?,
            pos: EncoderConfig::builtin(EncoderRole::Pos, name)?,
            ner: EncoderConfig::builtin(EncoderRole::Ner, name)?,
            hwa,
            variant: Variant::Full,
            fusion_dropout: 0.0,
            seed: 0,
            dtype: default_dtype(),
        })
    }

    /// Base-size encoders (hidden 768) and a word-attention branch of
    /// output width 768: every branch contributes 768 dimensions.
    pub fn reference() -> Self {
        Self::with_builtin("base", HwaConfig::default()).expect("built-in checkpoint")
    }

    /// A CPU-friendly configuration: hidden-128 encoders, 64-unit GRUs.
    pub fn small() -> Self {
        let hwa = HwaConfig {
            embed_dim: 64,
            recurrent_hidden: 64,
            attention_dim: 128,
            ..HwaConfig::default()
        };
        Self::with_builtin("small", hwa).expect("built-in checkpoint")
    }

    /// The smallest configuration, for tests.
    pub fn tiny() -> Self {
        let hwa = HwaConfig {
            embed_dim: 16,
            recurrent_hidden: 8,
            attention_dim: 16,
            ..HwaConfig::default()
        };
        Self::with_builtin("tiny", hwa).expect("built-in checkpoint")
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn dtype(&self) -> Result<DType> {
        nn::parse_dtype(&self.dtype)
    }

    /// Fusion segments implied by the variant and the configured widths.
    pub fn layout(&self) -> Result<FusionLayout> {
        let mut segments = vec![(Branch::Rep, self.representation.hidden_dim)];
        if self.variant.uses_linguistic() {
            segments.push((Branch::Pos, self.pos.hidden_dim));
            segments.push((Branch::Ner, self.ner.hidden_dim));
        }
        if self.variant.uses_hwa() {
            segments.push((Branch::Hwa, self.hwa.output_dim()));
        }
        FusionLayout::new(segments)
    }

    pub fn fusion_width(&self) -> Result<usize> {
        Ok(self.layout()?.width())
    }

    pub fn validate(&self) -> Result<()> {
        for (cfg, role) in [
            (&self.representation, EncoderRole::Representation),
            (&self.pos, EncoderRole::Pos),
            (&self.ner, EncoderRole::Ner),
        ] {
            if cfg.role != role {
                return Err(Error::InvalidArgument(format!(
                    "encoder configured for {:?} used as {:?}",
                    cfg.role, role
                )));
            }
            cfg.validate()?;
        }
        if !self.pos.frozen || !self.ner.frozen {
            return Err(Error::InvalidArgument("POS and NER encoders must be frozen".into()));
        }
        self.hwa.validate()?;
        if !(0.0..1.0).contains(&self.fusion_dropout) {
            return Err(Error::InvalidArgument(format!(
                "fusion_dropout {} outside [0, 1)",
                self.fusion_dropout
            )));
        }
        self.dtype()?;
        Ok(())
    }
}

/// Seed for a trainable component's initial parameters.
pub(crate) fn init_seed(seed: u64, component: &str) -> u64 {
    seed::derive(seed::derive(seed, seed::stream::INIT), component)
}

/// Path prefix and seed label of the classifier head's parameters. Shared
/// with the fine-tune baseline so both start from the same head.
pub(crate) const HEAD_COMPONENT: &str = "head";

pub struct BloomNet {
    config: BloomNetConfig,
    layout: FusionLayout,
    representation: Encoder,
    pos: Option<Encoder>,
    ner: Option<Encoder>,
    hwa: Option<Hwa>,
    head_store: ParamStore,
    head: ClassifierHead,
    device: Device,
}

impl BloomNet {
    /// Load the encoders named by `config` and initialise the trainable
    /// branches from `config.seed`. `vocab` is the word vocabulary of the
    /// word-attention branch (ignored by variants without it).
    pub fn new(config: &BloomNetConfig, vocab: WordVocab, device: &Device) -> Result<Self> {
        config.validate()?;
        let dtype = config.dtype()?;
        let representation = Encoder::load(&config.representation, dtype, device)?;
        let (pos, ner) = if config.variant.uses_linguistic() {
            (
                Some(Encoder::load(&config.pos, dtype, device)?),
                Some(Encoder::load(&config.ner, dtype, device)?),
            )
        } else {
            (None, None)
        };
        let hwa = if config.variant.uses_hwa() {
            let store = ParamStore::new(init_seed(config.seed, "hwa"), dtype, device);
            Some(Hwa::new(&config.hwa, vocab, store)?)
        } else {
            None
        };
        let head_store = ParamStore::new(init_seed(config.seed, HEAD_COMPONENT), dtype, device);
        let head = ClassifierHead::new(config.fusion_width()?, head_store.var_builder().pp(HEAD_COMPONENT))?;
        Self::from_parts(config, representation, pos, ner, hwa, head_store, head)
    }

    /// Assemble a model from loaded parts. Every width is checked against
    /// the configuration; in particular the head's input width must equal
    /// the sum of branch widths.
    pub fn from_parts(
        config: &BloomNetConfig,
        representation: Encoder,
        pos: Option<Encoder>,
        ner: Option<Encoder>,
        hwa: Option<Hwa>,
        head_store: ParamStore,
        head: ClassifierHead,
    ) -> Result<Self> {
        config.validate()?;
        let layout = config.layout()?;
        let check = |what: &str, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    what: what.into(),
                    expected,
                    found,
                })
            }
        };
        check("representation encoder", config.representation.hidden_dim, representation.hidden_dim())?;
        if representation.is_frozen() != config.representation.frozen {
            return Err(Error::InvalidArgument("representation encoder freeze state differs from config".into()));
        }
        let linguistic = config.variant.uses_linguistic();
        match (&pos, &ner) {
            (Some(p), Some(n)) if linguistic => {
                check("POS encoder", config.pos.hidden_dim, p.hidden_dim())?;
                check("NER encoder", config.ner.hidden_dim, n.hidden_dim())?;
                if !p.is_frozen() || !n.is_frozen() {
                    return Err(Error::InvalidArgument("POS and NER encoders must be frozen".into()));
                }
            }
            (None, None) if !linguistic => {}
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "variant {} {} linguistic encoders",
                    config.variant,
                    if linguistic { "requires" } else { "excludes" }
                )))
            }
        }
        match &hwa {
            Some(h) if config.variant.uses_hwa() => check("word-attention branch", config.hwa.output_dim(), h.output_dim())?,
            None if !config.variant.uses_hwa() => {}
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "variant {} and word-attention branch disagree",
                    config.variant
                )))
            }
        }
        check("classifier input width", layout.width(), head.input_dim())?;
        let device = head_store.device().clone();
        Ok(Self {
            config: config.clone(),
            layout,
            representation,
            pos,
            ner,
            hwa,
            head_store,
            head,
            device,
        })
    }

    pub fn config(&self) -> &BloomNetConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn layout(&self) -> &FusionLayout {
        &self.layout
    }

    pub fn fusion_width(&self) -> usize {
        self.layout.width()
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn representation(&self) -> &Encoder {
        &self.representation
    }

    pub fn pos(&self) -> Option<&Encoder> {
        self.pos.as_ref()
    }

    pub fn ner(&self) -> Option<&Encoder> {
        self.ner.as_ref()
    }

    pub fn hwa(&self) -> Option<&Hwa> {
        self.hwa.as_ref()
    }

    pub fn head(&self) -> &ClassifierHead {
        &self.head
    }

    /// Trainable parameters: the representation encoder, the
    /// word-attention branch and the head. Frozen encoders contribute none.
    pub fn trainable_vars(&self) -> Vec<Var> {
        let mut vars = self.representation.trainable_vars();
        if let Some(h) = &self.hwa {
            vars.extend(h.trainable_vars());
        }
        vars.extend(self.head_store.vars());
        vars
    }

    pub fn head_vars(&self) -> Vec<(String, Var)> {
        self.head_store.named_vars()
    }

    /// Checksum per component, keyed by branch name (plus `head`).
    pub fn component_checksums(&self) -> Vec<(String, String)> {
        let mut out = vec![(Branch::Rep.name().to_string(), self.representation.checksum())];
        if let (Some(p), Some(n)) = (&self.pos, &self.ner) {
            out.push((Branch::Pos.name().to_string(), p.checksum()));
            out.push((Branch::Ner.name().to_string(), n.checksum()));
        }
        if let Some(h) = &self.hwa {
            out.push((Branch::Hwa.name().to_string(), h.store().checksum()));
        }
        out.push((HEAD_COMPONENT.to_string(), self.head_store.checksum()));
        out
    }

    /// One checksum over every component.
    pub fn checksum(&self) -> String {
        let joined: Vec<String> = self
            .component_checksums()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let digest = <sha2::Sha256 as sha2::Digest>::digest(joined.join(";").as_bytes());
        nn::hex(&digest)
    }

    /// Fused representations `(batch, D)` for a batch of texts.
    pub fn fused_batch(&self, texts: &[&str], mode: Mode<'_>) -> Result<Tensor> {
        let mut parts = vec![self.representation.encode_texts(texts, mode)?];
        if let (Some(p), Some(n)) = (&self.pos, &self.ner) {
            parts.push(p.encode_texts(texts, Mode::Eval)?);
            parts.push(n.encode_texts(texts, Mode::Eval)?);
        }
        if let Some(h) = &self.hwa {
            parts.push(h.forward_texts(texts, mode)?);
        }
        let fused = if parts.len() == 1 {
            parts.pop().expect("one part")
        } else {
            Tensor::cat(&parts, 1)?
        };
        dropout(&fused, self.config.fusion_dropout, mode)
    }

    /// Logits `(batch, 6)`.
    pub fn logits(&self, texts: &[&str], mode: Mode<'_>) -> Result<Tensor> {
        if texts.is_empty() {
            return Err(Error::Empty("batch of texts".into()));
        }
        self.head.logits(&self.fused_batch(texts, mode)?)
    }

    /// The pooled vector of every active branch for one text, in fusion order.
    pub fn branch_representations(&self, text: &str) -> Result<Vec<PooledRepresentation>> {
        let mut out = vec![self.representation.encode_pooled(&self.representation.tokenize(text)?)?];
        if let (Some(p), Some(n)) = (&self.pos, &self.ner) {
            out.push(p.encode_pooled(&p.tokenize(text)?)?);
            out.push(n.encode_pooled(&n.tokenize(text)?)?);
        }
        if let Some(h) = &self.hwa {
            out.push(h.hwa_forward(text)?);
        }
        Ok(out)
    }

    /// Evaluation-mode class distribution for one text, composed branch by
    /// branch: encode, fuse, classify.
    pub fn forward(&self, text: &str) -> Result<ClassDistribution> {
        let reps = self.branch_representations(text)?;
        let refs: Vec<&PooledRepresentation> = reps.iter().collect();
        classify(&fuse(&self.layout, &refs)?, &self.head)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> WordVocab {
        WordVocab::build(["define the term", "compare two designs", "why is this so"], 1)
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(serde_json::from_str::<Variant>(&json).unwrap(), v);
        }
        assert!("nope".parse::<Variant>().is_err());
    }

    #[test]
    fn reference_width_is_3072() {
        assert_eq!(BloomNetConfig::reference().fusion_width().unwrap(), 3072);
        let base = BloomNetConfig::reference().with_variant(Variant::Base);
        assert_eq!(base.fusion_width().unwrap(), 768);
    }

    #[test]
    fn batched_logits_match_composed_forward() {
        let cfg = BloomNetConfig::tiny();
        let model = BloomNet::new(&cfg, vocab(), &Device::Cpu).unwrap();
        assert_eq!(model.fusion_width(), 32 * 3 + 16);
        let texts = ["define the term", "why is this so?"];
        let batch = distributions(&model.logits(&texts, Mode::Eval).unwrap()).unwrap();
        for (t, d) in texts.iter().zip(&batch) {
            let single = model.forward(t).unwrap();
            for (a, b) in single.probs.iter().zip(&d.probs) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
            assert_eq!(model.forward(t).unwrap(), single);
        }
    }

    #[test]
    fn mismatched_head_fails_fast() {
        let cfg = BloomNetConfig::tiny();
        let dtype = cfg.dtype().unwrap();
        let dev = Device::Cpu;
        let rep = Encoder::load(&cfg.representation, dtype, &dev).unwrap();
        let pos = Encoder::load(&cfg.pos, dtype, &dev).unwrap();
        let ner = Encoder::load(&cfg.ner, dtype, &dev).unwrap();
        let hwa = Hwa::new(&cfg.hwa, vocab(), ParamStore::new(1, dtype, &dev)).unwrap();
        let store = ParamStore::new(2, dtype, &dev);
        let head = ClassifierHead::new(cfg.fusion_width().unwrap() - 1, store.var_builder()).unwrap();
        let err = BloomNet::from_parts(&cfg, rep, Some(pos), Some(ner), Some(hwa), store, head);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn frozen_branches_excluded_from_training() {
        let model = BloomNet::new(&BloomNetConfig::tiny(), vocab(), &Device::Cpu).unwrap();
        let n_rep = model.representation().trainable_vars().len();
        let n_hwa = model.hwa().unwrap().trainable_vars().len();
        assert_eq!(model.trainable_vars().len(), n_rep + n_hwa + 2);
        assert!(model.pos().unwrap().trainable_vars().is_empty());
        assert!(model.ner().unwrap().trainable_vars().is_empty());
    }
}
