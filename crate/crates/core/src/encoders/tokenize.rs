use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

/// Split text into lowercase words: alphanumeric runs (apostrophes kept
/// inside words) and single punctuation characters. Whitespace separates.
pub fn split_words(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let inner_apostrophe = c == '\''
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if c.is_alphanumeric() || inner_apostrophe {
            current.extend(c.to_lowercase());
        } else {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            if !c.is_whitespace() {
                words.push(c.to_string());
            }
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// Token ids for one text under one encoder's tokenizer, unpadded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedInput {
    pub token_ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub length: usize,
}

impl TokenizedInput {
    fn from_ids(token_ids: Vec<u32>) -> Self {
        let length = token_ids.len();
        Self {
            mask: vec![1; length],
            token_ids,
            length,
        }
    }
}

/// Serializable description of a tokenizer, stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TokenizerSpec {
    /// Words hashed into a fixed vocabulary; used by the built-in encoders.
    Hashing { vocab_size: usize, salt: u64 },
    /// A `tokenizer.json` file.
    File { path: PathBuf },
}

pub(crate) const HASH_PAD: u32 = 0;
pub(crate) const HASH_CLS: u32 = 1;
pub(crate) const HASH_SEP: u32 = 2;
const HASH_RESERVED: u32 = 4;

/// Subword (or hashed-word) tokenizer of one encoder checkpoint.
pub struct SubwordTokenizer {
    spec: TokenizerSpec,
    inner: Inner,
    max_len: usize,
}

enum Inner {
    Hashing { vocab_size: usize, salt: u64 },
    Pretrained(Box<tokenizers::Tokenizer>),
}

impl SubwordTokenizer {
    pub fn new(spec: TokenizerSpec, max_len: usize) -> Result<Self> {
        if max_len < 3 {
            return Err(Error::InvalidArgument(format!("max_len {max_len} leaves no room for text")));
        }
        let inner = match &spec {
            TokenizerSpec::Hashing { vocab_size, salt } => {
                if *vocab_size <= HASH_RESERVED as usize {
                    return Err(Error::InvalidArgument(format!("vocab_size {vocab_size} too small")));
                }
                Inner::Hashing {
                    vocab_size: *vocab_size,
                    salt: *salt,
                }
            }
            TokenizerSpec::File { path } => Inner::Pretrained(Box::new(load_tokenizer(path, max_len)?)),
        };
        Ok(Self { spec, inner, max_len })
    }

    pub fn spec(&self) -> &TokenizerSpec {
        &self.spec
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn pad_id(&self) -> u32 {
        match &self.inner {
            Inner::Hashing { .. } => HASH_PAD,
            Inner::Pretrained(tok) => tok
                .get_padding()
                .map(|p| p.pad_id)
                .or_else(|| tok.token_to_id("<pad>"))
                .or_else(|| tok.token_to_id("[PAD]"))
                .unwrap_or(0),
        }
    }

    /// Whether the first position of every encoding is a special
    /// sequence-start marker (so first-position pooling is meaningful).
    pub fn has_start_marker(&self) -> bool {
        match &self.inner {
            Inner::Hashing { .. } => true,
            Inner::Pretrained(tok) => tok
                .encode("a", true)
                .map(|enc| enc.get_special_tokens_mask().first() == Some(&1))
                .unwrap_or(false),
        }
    }

    pub fn tokenize(&self, text: &str) -> Result<TokenizedInput> {
        if text.trim().is_empty() {
            return Err(Error::Empty("text to tokenize".into()));
        }
        match &self.inner {
            Inner::Hashing { vocab_size, salt } => {
                let buckets = (*vocab_size as u32 - HASH_RESERVED) as u64;
                let mut ids = Vec::with_capacity(self.max_len);
                ids.push(HASH_CLS);
                ids.extend(
                    split_words(text)
                        .iter()
                        .take(self.max_len - 2)
                        .map(|w| HASH_RESERVED + (seed::hash_str(*salt, w) % buckets) as u32),
                );
                ids.push(HASH_SEP);
                Ok(TokenizedInput::from_ids(ids))
            }
            Inner::Pretrained(tok) => {
                let enc = tok
                    .encode(text, true)
                    .map_err(|e| Error::Tokenizer(e.to_string()))?;
                let mut ids = enc.get_ids().to_vec();
                ids.truncate(self.max_len);
                Ok(TokenizedInput::from_ids(ids))
            }
        }
    }
}

fn load_tokenizer(path: &Path, max_len: usize) -> Result<tokenizers::Tokenizer> {
    let mut tok = tokenizers::Tokenizer::from_file(path)
        .map_err(|e| Error::Tokenizer(format!("{}: {e}", path.display())))?;
    tok.with_padding(None);
    tok.with_truncation(Some(tokenizers::TruncationParams {
        max_length: max_len,
        ..Default::default()
    }))
    .map_err(|e| Error::Tokenizer(e.to_string()))?;
    Ok(tok)
}
