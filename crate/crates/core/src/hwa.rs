//! Word-level attention branch: word embeddings, a bidirectional GRU and
//! learned attention pooling over the GRU states.
//!
//! Attention scores follow the hierarchical-attention formulation
//! `u_i = tanh(W h_i + b)`, `alpha_i = softmax_i(u_i . u_w)`,
//! `s = sum_i alpha_i h_i`, restricted to unmasked positions. Inputs are
//! single questions, so only the word level is used.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Module, Tensor, Var, D};
use candle_nn::rnn::{GRUConfig, GRUState, GRU, RNN};
use candle_nn::{Embedding, Linear, VarBuilder};
use serde::{Deserialize, Serialize};

use crate::encoders::{split_words, Branch, PooledRepresentation};
use crate::nn::{self, dropout, Mode, ParamStore};
use crate::{Error, Result};

pub const PAD_WORD: &str = "<pad>";
pub const UNK_WORD: &str = "<unk>";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

/// Lowercased, punctuation-split word vocabulary. Ids 0 and 1 are the
/// padding and unknown words; the rest follow first occurrence in the
/// corpus, so the vocabulary is a pure function of corpus order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordVocab {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl WordVocab {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_freq: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut order = Vec::new();
        for text in texts {
            for w in split_words(text) {
                let c = counts.entry(w.clone()).or_insert(0);
                if *c == 0 {
                    order.push(w);
                }
                *c += 1;
            }
        }
        let words = [PAD_WORD.to_string(), UNK_WORD.to_string()]
            .into_iter()
            .chain(order.into_iter().filter(|w| counts[w] >= min_freq.max(1)))
            .collect();
        Self::from_words(words).expect("reserved words present")
    }

    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.len() < 2 || words[0] != PAD_WORD || words[1] != UNK_WORD {
            return Err(Error::InvalidArgument(format!(
                "word vocabulary must start with {PAD_WORD:?}, {UNK_WORD:?}"
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Self { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 2
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.words)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_words(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Word ids of `text`, truncated to `max_words`.
    pub fn encode(&self, text: &str, max_words: usize) -> Result<WordSequence> {
        let word_ids: Vec<u32> = split_words(text)
            .iter()
            .take(max_words)
            .map(|w| self.id(w))
            .collect();
        if word_ids.is_empty() {
            return Err(Error::Empty(format!("no words in {text:?}")));
        }
        let length = word_ids.len();
        Ok(WordSequence {
            mask: vec![1; length],
            word_ids,
            length,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordSequence {
    pub word_ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub length: usize,
}

/// Attention weights over one sequence: non-negative, summing to one over
/// unmasked positions and exactly zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwaConfig {
    pub embed_dim: usize,
    /// GRU units per direction; the branch output is twice this.
    pub recurrent_hidden: usize,
    pub attention_dim: usize,
    #[serde(default = "one")]
    pub num_layers: usize,
    #[serde(default = "default_max_words")]
    pub max_words: usize,
    #[serde(default)]
    pub dropout: f64,
}

fn one() -> usize {
    1
}
fn default_max_words() -> usize {
    128
}

impl Default for HwaConfig {
    fn default() -> Self {
        Self {
            embed_dim: 300,
            recurrent_hidden: 384,
            attention_dim: 768,
            num_layers: 1,
            max_words: 128,
            dropout: 0.0,
        }
    }
}

impl HwaConfig {
    pub fn output_dim(&self) -> usize {
        2 * self.recurrent_hidden
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0
            || self.recurrent_hidden == 0
            || self.attention_dim == 0
            || self.num_layers == 0
            || self.max_words == 0
        {
            return Err(Error::InvalidArgument("HWA dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("HWA dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Learned word-level attention pooling.
pub struct WordAttention {
    proj: Linear,
    context: Tensor,
}

impl WordAttention {
    pub fn new(input_dim: usize, attention_dim: usize, vb: VarBuilder) -> Result<Self> {
        let proj = candle_nn::linear(input_dim, attention_dim, vb.pp("proj"))?;
        let bound = 1.0 / (attention_dim as f64).sqrt();
        let context = vb.get_with_hints(
            attention_dim,
            "context",
            candle_nn::Init::Uniform { lo: -bound, up: bound },
        )?;
        Ok(Self { proj, context })
    }

    /// `hidden`: `(batch, len, dim)`; `mask`: `(batch, len)` u8 with at
    /// least one 1 per row. Returns the pooled `(batch, dim)` context and
    /// `(batch, len)` weights.
    pub fn forward(&self, hidden: &Tensor, mask: &Tensor) -> Result<(Tensor, Tensor)> {
        let counts = mask.to_dtype(DType::U32)?.sum(1)?.to_vec1::<u32>()?;
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::Empty("word attention over a fully masked sequence".into()));
        }
        let u = self.proj.forward(hidden)?.tanh()?;
        let scores = u.broadcast_matmul(&self.context.unsqueeze(1)?)?.squeeze(D::Minus1)?;
        let alpha = nn::masked_softmax(&scores, mask)?;
        let pooled = alpha.unsqueeze(1)?.matmul(hidden)?.squeeze(1)?;
        Ok((pooled, alpha))
    }
}

/// Pool one sequence of hidden vectors. Convenience over
/// [`WordAttention::forward`] for inspection and testing.
pub fn word_attention(
    hidden_states: &[Vec<f64>],
    mask: &[u8],
    attention: &WordAttention,
    device: &Device,
) -> Result<(Vec<f64>, AttentionWeights)> {
    if hidden_states.is_empty() || hidden_states.len() != mask.len() {
        return Err(Error::InvalidArgument("hidden states and mask must align".into()));
    }
    let dim = hidden_states[0].len();
    let flat: Vec<f64> = hidden_states.iter().flatten().copied().collect();
    let dtype = attention.context.dtype();
    let hidden = Tensor::from_vec(flat, (1, hidden_states.len(), dim), device)?.to_dtype(dtype)?;
    let mask = Tensor::from_vec(mask.to_vec(), (1, mask.len()), device)?;
    let (pooled, alpha) = attention.forward(&hidden, &mask)?;
    Ok((
        nn::rows_f64(&pooled)?.remove(0),
        AttentionWeights {
            alpha: nn::rows_f64(&alpha)?.remove(0),
        },
    ))
}

/// One GRU direction stepped over a right-padded batch; padded steps carry
/// the previous state through unchanged.
fn run_direction(gru: &GRU, xs: &Tensor, step_mask: &[Tensor], reverse: bool) -> Result<Vec<Tensor>> {
    let (b, len, _) = xs.dims3()?;
    let mut state = gru.zero_state(b)?;
    let mut outputs = vec![None; len];
    let steps: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..len).rev())
    } else {
        Box::new(0..len)
    };
    for t in steps {
        let x_t = xs.narrow(1, t, 1)?.squeeze(1)?;
        let next = gru.step(&x_t, &state)?;
        let keep = step_mask[t].broadcast_as(next.h.shape())?;
        let h = keep.where_cond(&next.h, &state.h)?;
        outputs[t] = Some(h.clone());
        state = GRUState { h };
    }
    Ok(outputs.into_iter().map(|o| o.expect("every step visited")).collect())
}

/// The word-attention branch.
pub struct Hwa {
    config: HwaConfig,
    vocab: WordVocab,
    store: ParamStore,
    embedding: Embedding,
    layers: Vec<(GRU, GRU)>,
    attention: WordAttention,
}

impl Hwa {
    pub fn new(config: &HwaConfig, vocab: WordVocab, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let vb = store.var_builder();
        let embedding = candle_nn::embedding(vocab.len(), config.embed_dim, vb.pp("embedding"))?;
        let h = config.recurrent_hidden;
        let init = GRUConfig {
            w_ih_init: candle_nn::Init::Uniform {
                lo: -1.0 / (h as f64).sqrt(),
                up: 1.0 / (h as f64).sqrt(),
            },
            w_hh_init: candle_nn::Init::Uniform {
                lo: -1.0 / (h as f64).sqrt(),
                up: 1.0 / (h as f64).sqrt(),
            },
            ..GRUConfig::default()
        };
        let layers = (0..config.num_layers)
            .map(|l| {
                let input = if l == 0 { config.embed_dim } else { 2 * h };
                let gru = |dir: &str| candle_nn::rnn::gru(input, h, init, vb.pp("gru").pp(l).pp(dir));
                Ok((gru("forward")?, gru("backward")?))
            })
            .collect::<Result<Vec<_>>>()?;
        let attention = WordAttention::new(2 * h, config.attention_dim, vb.pp("attention"))?;
        Ok(Self {
            config: config.clone(),
            vocab,
            store,
            embedding,
            layers,
            attention,
        })
    }

    pub fn config(&self) -> &HwaConfig {
        &self.config
    }

    pub fn vocab(&self) -> &WordVocab {
        &self.vocab
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn attention(&self) -> &WordAttention {
        &self.attention
    }

    pub fn trainable_vars(&self) -> Vec<Var> {
        self.store.vars()
    }

    pub fn encode_words(&self, texts: &[&str]) -> Result<Vec<WordSequence>> {
        texts
            .iter()
            .map(|t| self.vocab.encode(t, self.config.max_words))
            .collect()
    }

    /// Contextual GRU states `(batch, len, 2h)` for padded word ids.
    pub fn contextualize(&self, ids: &Tensor, mask: &Tensor, mode: Mode<'_>) -> Result<Tensor> {
        let mut xs = dropout(&self.embedding.forward(ids)?, self.config.dropout, mode)?;
        let (b, len) = ids.dims2()?;
        let step_mask = (0..len)
            .map(|t| Ok(mask.narrow(1, t, 1)?.reshape((b, 1))?))
            .collect::<Result<Vec<_>>>()?;
        for (fwd, bwd) in &self.layers {
            let f = run_direction(fwd, &xs, &step_mask, false)?;
            let r = run_direction(bwd, &xs, &step_mask, true)?;
            let merged = f
                .iter()
                .zip(&r)
                .map(|(a, b)| Ok(Tensor::cat(&[a, b], 1)?))
                .collect::<Result<Vec<_>>>()?;
            xs = Tensor::stack(&merged, 1)?;
        }
        Ok(xs)
    }

    /// Branch output `(batch, 2h)` and attention weights `(batch, len)`.
    pub fn forward_sequences(&self, seqs: &[WordSequence], mode: Mode<'_>) -> Result<(Tensor, Tensor)> {
        let ids: Vec<&[u32]> = seqs.iter().map(|s| s.word_ids.as_slice()).collect();
        let (ids, mask) = nn::pad_batch(&ids, PAD_ID, 1, self.store.device())?;
        let states = self.contextualize(&ids, &mask, mode)?;
        self.attention.forward(&states, &mask)
    }

    pub fn forward_texts(&self, texts: &[&str], mode: Mode<'_>) -> Result<Tensor> {
        let seqs = self.encode_words(texts)?;
        Ok(self.forward_sequences(&seqs, mode)?.0)
    }

    /// Pooled branch vector for one text in evaluation mode.
    pub fn hwa_forward(&self, text: &str) -> Result<PooledRepresentation> {
        let out = self.forward_texts(&[text], Mode::Eval)?;
        PooledRepresentation::new(Branch::Hwa, nn::rows_f64(&out)?.remove(0))
    }
}
