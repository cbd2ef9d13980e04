//! BloomNet: classify educational questions and course learning outcomes into
//! the six cognitive levels of Bloom's taxonomy.
//!
//! The model fuses four pooled views of a question:
//!
//! * a trainable transformer encoder (`h_rep`),
//! * two frozen transformer encoders trained for part-of-speech tagging and
//!   named-entity recognition (`h_pos`, `h_ner`),
//! * a bidirectional GRU with word-level attention pooling (`h_hwa`),
//!
//! concatenates them and feeds the result to a single linear softmax layer.
//! Around the model sits the experimental protocol: stratified k-fold
//! cross-validation, out-of-distribution scoring, ablations, baselines and
//! paired significance tests.

pub mod baselines;
pub mod corpus;
pub mod encoders;
pub mod error;
pub mod harness;
pub mod hwa;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod seed;

pub use corpus::{CognitiveLevel, Dataset, Example, FoldPlan, NUM_LEVELS};
pub use error::{Error, Result};
pub use model::{BloomNet, BloomNetConfig, ClassDistribution, Variant};
