//! Labelled question corpora, the cognitive-level schema and fold plans.

mod folds;
mod level;
mod load;
pub mod synthetic;

pub use folds::{make_folds, FoldPlan};
pub use level::{label_index, level_name, CognitiveLevel, NUM_LEVELS};
pub use load::{load_dataset, write_dataset, DataFormat};

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One labelled question or learning outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub text: String,
    pub label: CognitiveLevel,
    pub source: String,
}

impl Example {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        label: CognitiveLevel,
        source: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label,
            source: source.into(),
        }
    }
}

/// An ordered, validated collection of examples.
///
/// Construction goes through [`Dataset::new`], which rejects empty texts and
/// duplicate ids; the per-class counts are always a fresh recount.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    name: String,
    examples: Vec<Example>,
    class_counts: [usize; NUM_LEVELS],
}

impl Dataset {
    pub fn new(name: impl Into<String>, examples: Vec<Example>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(examples.len());
        let mut class_counts = [0; NUM_LEVELS];
        for (row, ex) in examples.iter().enumerate() {
            if ex.text.trim().is_empty() {
                return Err(Error::EmptyText { line: row as u64 + 1 });
            }
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::DuplicateId(ex.id.clone()));
            }
            class_counts[ex.label.ordinal()] += 1;
        }
        Ok(Self {
            name: name.into(),
            examples,
            class_counts,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn class_counts(&self) -> [usize; NUM_LEVELS] {
        self.class_counts
    }

    pub fn count(&self, level: CognitiveLevel) -> usize {
        self.class_counts[level.ordinal()]
    }

    pub fn texts(&self) -> Vec<&str> {
        self.examples.iter().map(|e| e.text.as_str()).collect()
    }

    pub fn labels(&self) -> Vec<CognitiveLevel> {
        self.examples.iter().map(|e| e.label).collect()
    }

    /// Subset by position, preserving the given order.
    pub fn select(&self, name: impl Into<String>, indices: &[usize]) -> Result<Dataset> {
        let examples = indices
            .iter()
            .map(|&i| {
                self.examples.get(i).cloned().ok_or_else(|| {
                    Error::InvalidArgument(format!("index {i} out of range for {}", self.name))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(name, examples)
    }

    /// Texts that occur more than once (after trimming and lowercasing),
    /// mapped to the ids carrying them. Duplicates are legal; this is the
    /// load report.
    pub fn duplicate_texts(&self) -> BTreeMap<String, Vec<String>> {
        let mut by_text: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for ex in &self.examples {
            by_text
                .entry(ex.text.trim().to_lowercase())
                .or_default()
                .push(ex.id.clone());
        }
        by_text.retain(|_, ids| ids.len() > 1);
        by_text
    }
}
