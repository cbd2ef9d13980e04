//! Word-level neural baselines trained from scratch: a multi-width CNN, a
//! stacked LSTM and a single self-attention block.

use std::path::Path;

use candle_core::{DType, Device, Module, Tensor, Var};
use candle_nn::rnn::{LSTMConfig, LSTMState, LSTM, RNN};
use candle_nn::{Embedding, Linear};
use serde::{Deserialize, Serialize};

use super::{BaselineSpec, Family};
use crate::corpus::NUM_LEVELS;
use crate::encoders::SelfAttentionBlock;
use crate::harness::NeuralModel;
use crate::hwa::{WordSequence, WordVocab, PAD_ID};
use crate::nn::{self, dropout, Mode, ParamStore};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub embed_dim: usize,
    pub filters: usize,
    pub widths: Vec<usize>,
    pub dropout: f64,
    pub max_words: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub max_words: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfAttentionConfig {
    pub embed_dim: usize,
    pub heads: usize,
    pub dropout: f64,
    pub max_words: usize,
}

/// Embedded, right-padded word ids `(batch, len, dim)` and their mask.
fn embed(seqs: &[WordSequence], min_len: usize, emb: &Embedding, dev: &Device) -> Result<(Tensor, Tensor)> {
    let ids: Vec<&[u32]> = seqs.iter().map(|s| s.word_ids.as_slice()).collect();
    let (ids, mask) = nn::pad_batch(&ids, PAD_ID, min_len, dev)?;
    Ok((emb.forward(&ids)?, mask))
}

/// Parallel convolutions over word embeddings with max-over-time pooling.
///
/// Each width `w` is a linear map over concatenated windows of `w`
/// embeddings followed by ReLU. Inputs shorter than the widest kernel are
/// padded up to it; windows that start past a sequence's last real word
/// are masked out of the max, so every sequence keeps at least its first
/// window.
pub struct WordCnn {
    config: CnnConfig,
    vocab: WordVocab,
    store: ParamStore,
    embedding: Embedding,
    convs: Vec<(usize, Linear)>,
    head: Linear,
}

impl WordCnn {
    pub fn new(config: CnnConfig, vocab: WordVocab, store: ParamStore) -> Result<Self> {
        if config.widths.is_empty() || config.widths.contains(&0) || config.filters == 0 {
            return Err(Error::InvalidArgument("CNN needs positive widths and filters".into()));
        }
        let vb = store.var_builder();
        let embedding = candle_nn::embedding(vocab.len(), config.embed_dim, vb.pp("embedding"))?;
        let convs = config
            .widths
            .iter()
            .map(|&w| Ok((w, candle_nn::linear(w * config.embed_dim, config.filters, vb.pp("conv").pp(w))?)))
            .collect::<Result<Vec<_>>>()?;
        let head = candle_nn::linear(config.filters * config.widths.len(), NUM_LEVELS, vb.pp("head"))?;
        Ok(Self {
            config,
            vocab,
            store,
            embedding,
            convs,
            head,
        })
    }

    fn features(&self, texts: &[&str], mode: Mode<'_>) -> Result<Tensor> {
        let seqs = self.vocab_encode(texts)?;
        let widest = *self.config.widths.iter().max().expect("non-empty widths");
        let (x, _) = embed(&seqs, widest, &self.embedding, self.store.device())?;
        let x = dropout(&x, self.config.dropout, mode)?;
        let (b, len, _) = x.dims3()?;
        let mut pooled = Vec::with_capacity(self.convs.len());
        for (w, linear) in &self.convs {
            let n_windows = len - w + 1;
            let windows: Vec<Tensor> = (0..*w).map(|o| x.narrow(1, o, n_windows)).collect::<candle_core::Result<_>>()?;
            let windows = Tensor::cat(&windows, 2)?;
            let act = linear.forward(&windows)?.relu()?;
            let valid: Vec<u8> = seqs
                .iter()
                .flat_map(|s| (0..n_windows).map(move |t| u8::from(t == 0 || t + w <= s.length)))
                .collect();
            let valid = Tensor::from_vec(valid, (b, n_windows, 1), x.device())?;
            pooled.push(nn::masked_fill(&act, &valid)?.max(1)?);
        }
        dropout(&Tensor::cat(&pooled, 1)?, self.config.dropout, mode)
    }

    fn vocab_encode(&self, texts: &[&str]) -> Result<Vec<WordSequence>> {
        texts.iter().map(|t| self.vocab.encode(t, self.config.max_words)).collect()
    }
}

/// Stacked unidirectional LSTM; the last real step's top-layer state feeds the head.
pub struct WordLstm {
    config: LstmConfig,
    vocab: WordVocab,
    store: ParamStore,
    embedding: Embedding,
    layers: Vec<LSTM>,
    head: Linear,
}

impl WordLstm {
    pub fn new(config: LstmConfig, vocab: WordVocab, store: ParamStore) -> Result<Self> {
        if config.layers == 0 || config.hidden == 0 {
            return Err(Error::InvalidArgument("LSTM needs positive layers and hidden size".into()));
        }
        let vb = store.var_builder();
        let embedding = candle_nn::embedding(vocab.len(), config.embed_dim, vb.pp("embedding"))?;
        let bound = 1.0 / (config.hidden as f64).sqrt();
        let init = LSTMConfig {
            w_ih_init: candle_nn::Init::Uniform { lo: -bound, up: bound },
            w_hh_init: candle_nn::Init::Uniform { lo: -bound, up: bound },
            ..LSTMConfig::default()
        };
        let layers = (0..config.layers)
            .map(|l| {
                let input = if l == 0 { config.embed_dim } else { config.hidden };
                Ok(candle_nn::rnn::lstm(input, config.hidden, init, vb.pp("lstm").pp(l))?)
            })
            .collect::<Result<Vec<_>>>()?;
        let head = candle_nn::linear(config.hidden, NUM_LEVELS, vb.pp("head"))?;
        Ok(Self {
            config,
            vocab,
            store,
            embedding,
            layers,
            head,
        })
    }

    fn features(&self, texts: &[&str], mode: Mode<'_>) -> Result<Tensor> {
        let seqs: Vec<WordSequence> = texts
            .iter()
            .map(|t| self.vocab.encode(t, self.config.max_words))
            .collect::<Result<_>>()?;
        let (mut xs, mask) = embed(&seqs, 1, &self.embedding, self.store.device())?;
        let (b, len, _) = xs.dims3()?;
        let mut last = None;
        for lstm in &self.layers {
            xs = dropout(&xs, self.config.dropout, mode)?;
            let mut state = lstm.zero_state(b)?;
            let mut outs = Vec::with_capacity(len);
            for t in 0..len {
                let next = lstm.step(&xs.narrow(1, t, 1)?.squeeze(1)?, &state)?;
                let keep = mask.narrow(1, t, 1)?.broadcast_as(next.h.shape())?;
                state = LSTMState {
                    h: keep.where_cond(&next.h, &state.h)?,
                    c: keep.where_cond(&next.c, &state.c)?,
                };
                outs.push(state.h.clone());
            }
            xs = Tensor::stack(&outs, 1)?;
            last = Some(state.h);
        }
        dropout(&last.expect("at least one layer"), self.config.dropout, mode)
    }
}

/// Word embeddings plus learned positions, one multi-head self-attention
/// block, masked mean pooling.
pub struct WordSelfAttention {
    config: SelfAttentionConfig,
    vocab: WordVocab,
    store: ParamStore,
    embedding: Embedding,
    positions: Embedding,
    block: SelfAttentionBlock,
    head: Linear,
}

impl WordSelfAttention {
    pub fn new(config: SelfAttentionConfig, vocab: WordVocab, store: ParamStore) -> Result<Self> {
        let vb = store.var_builder();
        let embedding = candle_nn::embedding(vocab.len(), config.embed_dim, vb.pp("embedding"))?;
        let positions = candle_nn::embedding(config.max_words, config.embed_dim, vb.pp("positions"))?;
        let block = SelfAttentionBlock::new(
            config.embed_dim,
            config.heads,
            1e-5,
            config.dropout,
            config.dropout,
            vb.pp("attention"),
        )?;
        let head = candle_nn::linear(config.embed_dim, NUM_LEVELS, vb.pp("head"))?;
        Ok(Self {
            config,
            vocab,
            store,
            embedding,
            positions,
            block,
            head,
        })
    }

    fn features(&self, texts: &[&str], mode: Mode<'_>) -> Result<Tensor> {
        let seqs: Vec<WordSequence> = texts
            .iter()
            .map(|t| self.vocab.encode(t, self.config.max_words))
            .collect::<Result<_>>()?;
        let (x, mask) = embed(&seqs, 1, &self.embedding, self.store.device())?;
        let len = x.dim(1)?;
        let pos_ids = Tensor::arange(0u32, len as u32, x.device())?;
        let x = x.broadcast_add(&self.positions.forward(&pos_ids)?)?;
        let x = dropout(&x, self.config.dropout, mode)?;
        let h = self.block.forward(&x, &mask, mode)?;
        nn::masked_mean(&h, &mask)
    }
}

/// One of the from-scratch neural baselines.
pub enum NeuralBaseline {
    Cnn(WordCnn),
    Lstm(WordLstm),
    SelfAttention(WordSelfAttention),
}

/// Construct the model described by a `cnn`, `lstm` or `self_attention`
/// spec, initialised from `seed`.
pub fn build_neural_baseline(
    spec: &BaselineSpec,
    vocab: WordVocab,
    seed: u64,
    dtype: DType,
    device: &Device,
) -> Result<NeuralBaseline> {
    spec.validate()?;
    let store = ParamStore::new(seed, dtype, device);
    let h = |k: &str| spec.get(k);
    let u = |k: &str| spec.get_usize(k);
    Ok(match spec.family {
        Family::Cnn => NeuralBaseline::Cnn(WordCnn::new(
            CnnConfig {
                embed_dim: u("embed_dim")?,
                filters: u("filters")?,
                widths: vec![3, 4, 5],
                dropout: h("dropout")?,
                max_words: u("max_words")?,
            },
            vocab,
            store,
        )?),
        Family::Lstm => NeuralBaseline::Lstm(WordLstm::new(
            LstmConfig {
                embed_dim: u("embed_dim")?,
                hidden: u("hidden")?,
                layers: u("layers")?,
                dropout: h("dropout")?,
                max_words: u("max_words")?,
            },
            vocab,
            store,
        )?),
        Family::SelfAttention => NeuralBaseline::SelfAttention(WordSelfAttention::new(
            SelfAttentionConfig {
                embed_dim: u("embed_dim")?,
                heads: u("heads")?,
                dropout: h("dropout")?,
                max_words: u("max_words")?,
            },
            vocab,
            store,
        )?),
        other => {
            return Err(Error::InvalidArgument(format!(
                "{other:?} is not a from-scratch neural family"
            )))
        }
    })
}

impl NeuralBaseline {
    fn parts(&self) -> (&ParamStore, &WordVocab, &Linear) {
        match self {
            NeuralBaseline::Cnn(m) => (&m.store, &m.vocab, &m.head),
            NeuralBaseline::Lstm(m) => (&m.store, &m.vocab, &m.head),
            NeuralBaseline::SelfAttention(m) => (&m.store, &m.vocab, &m.head),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            NeuralBaseline::Cnn(_) => Family::Cnn,
            NeuralBaseline::Lstm(_) => Family::Lstm,
            NeuralBaseline::SelfAttention(_) => Family::SelfAttention,
        }
    }

    pub fn store(&self) -> &ParamStore {
        self.parts().0
    }

    pub fn vocab(&self) -> &WordVocab {
        self.parts().1
    }

    fn features(&self, texts: &[&str], mode: Mode<'_>) -> Result<Tensor> {
        match self {
            NeuralBaseline::Cnn(m) => m.features(texts, mode),
            NeuralBaseline::Lstm(m) => m.features(texts, mode),
            NeuralBaseline::SelfAttention(m) => m.features(texts, mode),
        }
    }

    /// The spec-independent part of a checkpoint: weights and vocabulary.
    pub(crate) fn save_weights(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.store().save(&dir.join("weights.safetensors"))?;
        self.vocab().save(&dir.join("word_vocab.json"))
    }

    pub(crate) fn load_weights(&self, dir: &Path) -> Result<()> {
        self.store().load_into(&dir.join("weights.safetensors"))
    }
}

impl NeuralModel for NeuralBaseline {
    fn name(&self) -> String {
        self.family().key().to_string()
    }

    fn logits(&self, texts: &[&str], mode: Mode<'_>) -> Result<Tensor> {
        if texts.is_empty() {
            return Err(Error::Empty("batch of texts".into()));
        }
        let features = self.features(texts, mode)?;
        Ok(self.parts().2.forward(&features)?)
    }

    fn trainable_vars(&self) -> Vec<Var> {
        self.store().vars()
    }

    fn checksum(&self) -> String {
        self.store().checksum()
    }
}
