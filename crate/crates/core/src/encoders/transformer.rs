//! A BERT/RoBERTa-layout transformer encoder. Parameter names follow the
//! Hugging Face layout (`embeddings.word_embeddings.weight`,
//! `encoder.layer.0.attention.self.query.weight`, ...) so pretrained
//! safetensors checkpoints load directly.

use candle_core::{DType, Module, Tensor, D};
use candle_nn::{Embedding, Linear, VarBuilder};
use serde::{Deserialize, Serialize};

use crate::nn::{self, dropout, LayerNorm, Mode};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub max_position_embeddings: usize,
    #[serde(default = "one")]
    pub type_vocab_size: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
    #[serde(default = "default_dropout")]
    pub hidden_dropout_prob: f64,
    #[serde(default = "default_dropout")]
    pub attention_probs_dropout_prob: f64,
    /// First position id: 0 for BERT, `pad_token_id + 1` for RoBERTa.
    #[serde(default)]
    pub position_offset: usize,
}

fn one() -> usize {
    1
}
fn default_eps() -> f64 {
    1e-12
}
fn default_dropout() -> f64 {
    0.1
}

impl TransformerConfig {
    /// Read a Hugging Face `config.json`.
    pub fn from_hf_json(json: &serde_json::Value) -> Result<Self> {
        let get = |key: &str| {
            json.get(key)
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .ok_or_else(|| Error::Checkpoint(format!("config.json lacks integer {key:?}")))
        };
        let float = |key: &str, default: f64| json.get(key).and_then(|v| v.as_f64()).unwrap_or(default);
        let model_type = json.get("model_type").and_then(|v| v.as_str()).unwrap_or("bert");
        let pad = json.get("pad_token_id").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
        let position_offset = if model_type.contains("roberta") { pad + 1 } else { 0 };
        Ok(Self {
            vocab_size: get("vocab_size")?,
            hidden_size: get("hidden_size")?,
            num_hidden_layers: get("num_hidden_layers")?,
            num_attention_heads: get("num_attention_heads")?,
            intermediate_size: get("intermediate_size")?,
            max_position_embeddings: get("max_position_embeddings")?,
            type_vocab_size: get("type_vocab_size").unwrap_or(1),
            layer_norm_eps: float("layer_norm_eps", 1e-12),
            hidden_dropout_prob: float("hidden_dropout_prob", 0.1),
            attention_probs_dropout_prob: float("attention_probs_dropout_prob", 0.1),
            position_offset,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.num_attention_heads == 0 || self.num_hidden_layers == 0 {
            return Err(Error::InvalidArgument("transformer dimensions must be positive".into()));
        }
        if self.hidden_size % self.num_attention_heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "hidden size {} not divisible by {} heads",
                self.hidden_size, self.num_attention_heads
            )));
        }
        Ok(())
    }

    /// Longest sequence the position table supports.
    pub fn max_sequence(&self) -> usize {
        self.max_position_embeddings.saturating_sub(self.position_offset)
    }
}

struct Embeddings {
    word: Embedding,
    position: Embedding,
    token_type: Embedding,
    norm: LayerNorm,
    dropout: f64,
    offset: usize,
}

impl Embeddings {
    fn new(cfg: &TransformerConfig, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            word: candle_nn::embedding(cfg.vocab_size, cfg.hidden_size, vb.pp("word_embeddings"))?,
            position: candle_nn::embedding(
                cfg.max_position_embeddings,
                cfg.hidden_size,
                vb.pp("position_embeddings"),
            )?,
            token_type: candle_nn::embedding(cfg.type_vocab_size, cfg.hidden_size, vb.pp("token_type_embeddings"))?,
            norm: LayerNorm::new(cfg.hidden_size, cfg.layer_norm_eps, vb.pp("LayerNorm"))?,
            dropout: cfg.hidden_dropout_prob,
            offset: cfg.position_offset,
        })
    }

    fn forward(&self, ids: &Tensor, mode: Mode<'_>) -> Result<Tensor> {
        let (batch, len) = ids.dims2()?;
        let positions: Vec<u32> = (0..len).map(|i| (i + self.offset) as u32).collect();
        let positions = Tensor::from_vec(positions, (1, len), ids.device())?;
        let words = self.word.forward(ids)?;
        let pos = self.position.forward(&positions)?;
        let types = self
            .token_type
            .forward(&Tensor::zeros((batch, len), DType::U32, ids.device())?)?;
        let x = words.broadcast_add(&pos)?.add(&types)?;
        dropout(&self.norm.forward(&x)?, self.dropout, mode)
    }
}

/// Multi-head self-attention with residual connection and post-norm.
pub struct SelfAttentionBlock {
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    norm: LayerNorm,
    heads: usize,
    head_dim: usize,
    attn_dropout: f64,
    hidden_dropout: f64,
}

impl SelfAttentionBlock {
    pub fn new(
        hidden: usize,
        heads: usize,
        eps: f64,
        attn_dropout: f64,
        hidden_dropout: f64,
        vb: VarBuilder,
    ) -> Result<Self> {
        if heads == 0 || hidden % heads != 0 {
            return Err(Error::InvalidArgument(format!("hidden {hidden} not divisible by {heads} heads")));
        }
        let s = vb.pp("self");
        let o = vb.pp("output");
        Ok(Self {
            query: candle_nn::linear(hidden, hidden, s.pp("query"))?,
            key: candle_nn::linear(hidden, hidden, s.pp("key"))?,
            value: candle_nn::linear(hidden, hidden, s.pp("value"))?,
            output: candle_nn::linear(hidden, hidden, o.pp("dense"))?,
            norm: LayerNorm::new(hidden, eps, o.pp("LayerNorm"))?,
            heads,
            head_dim: hidden / heads,
            attn_dropout,
            hidden_dropout,
        })
    }

    /// `x`: `(batch, len, hidden)`, `mask`: `(batch, len)` u8.
    pub fn forward(&self, x: &Tensor, mask: &Tensor, mode: Mode<'_>) -> Result<Tensor> {
        let (b, l, h) = x.dims3()?;
        let split = |t: Tensor| -> Result<Tensor> {
            Ok(t.reshape((b, l, self.heads, self.head_dim))?
                .transpose(1, 2)?
                .contiguous()?)
        };
        let q = split(self.query.forward(x)?)?;
        let k = split(self.key.forward(x)?)?;
        let v = split(self.value.forward(x)?)?;
        let scores = (q.matmul(&k.t()?.contiguous()?)? / (self.head_dim as f64).sqrt())?;
        let key_mask = mask.reshape((b, 1, 1, l))?;
        let probs = nn::masked_softmax(&scores, &key_mask)?;
        let probs = dropout(&probs, self.attn_dropout, mode)?;
        let ctx = probs
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, l, h))?;
        let out = dropout(&self.output.forward(&ctx)?, self.hidden_dropout, mode)?;
        self.norm.forward(&(out + x)?)
    }
}

struct Layer {
    attention: SelfAttentionBlock,
    intermediate: Linear,
    output: Linear,
    norm: LayerNorm,
    dropout: f64,
}

impl Layer {
    fn new(cfg: &TransformerConfig, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            attention: SelfAttentionBlock::new(
                cfg.hidden_size,
                cfg.num_attention_heads,
                cfg.layer_norm_eps,
                cfg.attention_probs_dropout_prob,
                cfg.hidden_dropout_prob,
                vb.pp("attention"),
            )?,
            intermediate: candle_nn::linear(cfg.hidden_size, cfg.intermediate_size, vb.pp("intermediate").pp("dense"))?,
            output: candle_nn::linear(cfg.intermediate_size, cfg.hidden_size, vb.pp("output").pp("dense"))?,
            norm: LayerNorm::new(cfg.hidden_size, cfg.layer_norm_eps, vb.pp("output").pp("LayerNorm"))?,
            dropout: cfg.hidden_dropout_prob,
        })
    }

    fn forward(&self, x: &Tensor, mask: &Tensor, mode: Mode<'_>) -> Result<Tensor> {
        let a = self.attention.forward(x, mask, mode)?;
        let ff = self.intermediate.forward(&a)?.gelu_erf()?;
        let ff = dropout(&self.output.forward(&ff)?, self.dropout, mode)?;
        self.norm.forward(&(ff + a)?)
    }
}

pub struct TransformerEncoder {
    config: TransformerConfig,
    embeddings: Embeddings,
    layers: Vec<Layer>,
}

impl TransformerEncoder {
    pub fn new(config: &TransformerConfig, vb: VarBuilder) -> Result<Self> {
        config.validate()?;
        let embeddings = Embeddings::new(config, vb.pp("embeddings"))?;
        let layers = (0..config.num_hidden_layers)
            .map(|i| Layer::new(config, vb.pp("encoder").pp("layer").pp(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            embeddings,
            layers,
        })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    /// Contextual states `(batch, len, hidden)` for right-padded `ids` with
    /// u8 `mask`.
    pub fn forward(&self, ids: &Tensor, mask: &Tensor, mode: Mode<'_>) -> Result<Tensor> {
        let (_, len) = ids.dims2()?;
        if len > self.config.max_sequence() {
            return Err(Error::InvalidArgument(format!(
                "sequence length {len} exceeds the {} positions of the checkpoint",
                self.config.max_sequence()
            )));
        }
        let mut x = self.embeddings.forward(ids, mode)?;
        for layer in &self.layers {
            x = layer.forward(&x, mask, mode)?;
        }
        if x.dim(D::Minus1)? != self.config.hidden_size {
            return Err(Error::DimensionMismatch {
                what: "encoder output".into(),
                expected: self.config.hidden_size,
                found: x.dim(D::Minus1)?,
            });
        }
        Ok(x)
    }
}
