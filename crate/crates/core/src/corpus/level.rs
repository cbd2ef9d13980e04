use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

pub const NUM_LEVELS: usize = 6;

/// The six cognitive levels of Bloom's taxonomy, ordered from Knowledge (0)
/// to Evaluation (5). The ordinal is the class index everywhere: logits,
/// confusion matrices, fold stratification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CognitiveLevel {
    Knowledge = 0,
    Comprehension = 1,
    Application = 2,
    Analysis = 3,
    Synthesis = 4,
    Evaluation = 5,
}

impl CognitiveLevel {
    pub const ALL: [CognitiveLevel; NUM_LEVELS] = [
        CognitiveLevel::Knowledge,
        CognitiveLevel::Comprehension,
        CognitiveLevel::Application,
        CognitiveLevel::Analysis,
        CognitiveLevel::Synthesis,
        CognitiveLevel::Evaluation,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ordinal: usize) -> Result<Self> {
        Self::ALL
            .get(ordinal)
            .copied()
            .ok_or(Error::OrdinalOutOfRange(ordinal))
    }

    pub fn name(self) -> &'static str {
        match self {
            CognitiveLevel::Knowledge => "Knowledge",
            CognitiveLevel::Comprehension => "Comprehension",
            CognitiveLevel::Application => "Application",
            CognitiveLevel::Analysis => "Analysis",
            CognitiveLevel::Synthesis => "Synthesis",
            CognitiveLevel::Evaluation => "Evaluation",
        }
    }
}

impl fmt::Display for CognitiveLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CognitiveLevel {
    type Err = Error;

    /// Case-insensitive match against the level names.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownLevelName(s.to_string()))
    }
}

impl Serialize for CognitiveLevel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for CognitiveLevel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn label_index(name: &str) -> Result<CognitiveLevel> {
    name.parse()
}

pub fn level_name(ordinal: usize) -> Result<&'static str> {
    CognitiveLevel::from_ordinal(ordinal).map(CognitiveLevel::name)
}
