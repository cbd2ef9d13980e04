//! Template-generated question banks with the class profiles of the two
//! reference corpora (600 balanced questions; 141 questions split
//! 26/23/15/23/30/24). The raw reference files are not distributed, so these
//! stand in for smoke tests, demos and the CLI's `generate-data` command.
//!
//! The "shifted" style draws from a partly different verb inventory, other
//! subject areas and other sentence frames, which gives an honest
//! out-of-distribution gap.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{CognitiveLevel, Dataset, Example, NUM_LEVELS};
use crate::seed;

pub const DATASET1_COUNTS: [usize; NUM_LEVELS] = [100; NUM_LEVELS];
pub const DATASET2_COUNTS: [usize; NUM_LEVELS] = [26, 23, 15, 23, 30, 24];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    InDomain,
    Shifted,
}

fn verbs(level: CognitiveLevel, style: Style) -> &'static [&'static str] {
    use CognitiveLevel::*;
    match (level, style) {
        (Knowledge, Style::InDomain) => &["define", "list", "name", "state", "recall", "identify", "label"],
        (Knowledge, Style::Shifted) => &["list", "name", "memorize", "recognize", "match", "quote"],
        (Comprehension, Style::InDomain) => &["explain", "describe", "summarize", "interpret", "discuss", "paraphrase"],
        (Comprehension, Style::Shifted) => &["explain", "restate", "outline", "review", "translate", "illustrate"],
        (Application, Style::InDomain) => &["apply", "solve", "calculate", "demonstrate", "use", "compute"],
        (Application, Style::Shifted) => &["solve", "operate", "implement", "practice", "employ", "sketch"],
        (Analysis, Style::InDomain) => &["analyze", "compare", "contrast", "differentiate", "examine", "distinguish"],
        (Analysis, Style::Shifted) => &["compare", "categorize", "dissect", "inspect", "investigate", "infer"],
        (Synthesis, Style::InDomain) => &["design", "create", "compose", "formulate", "propose", "construct"],
        (Synthesis, Style::Shifted) => &["design", "invent", "devise", "plan", "assemble", "generate"],
        (Evaluation, Style::InDomain) => &["evaluate", "justify", "assess", "critique", "judge", "defend"],
        (Evaluation, Style::Shifted) => &["evaluate", "appraise", "argue", "rate", "recommend", "prioritize"],
    }
}

fn topics(style: Style) -> &'static [&'static str] {
    match style {
        Style::InDomain => &[
            "the water cycle",
            "photosynthesis",
            "a binary search tree",
            "the French Revolution",
            "Newton's second law",
            "supply and demand",
            "a sorting algorithm",
            "cellular respiration",
            "the periodic table",
            "a relational database",
            "the causes of the First World War",
            "chemical equilibrium",
            "a sonnet by Shakespeare",
            "the structure of DNA",
            "a linked list",
            "impressionist painting",
        ],
        Style::Shifted => &[
            "a marketing campaign",
            "the human immune system",
            "an operating system scheduler",
            "renaissance sculpture",
            "climate policy",
            "a hospital triage process",
            "acid rain",
            "a network protocol",
            "the novel Things Fall Apart",
            "organic polymers",
            "a school timetable",
            "public health data",
        ],
    }
}

fn frames(level: CognitiveLevel, style: Style) -> &'static [&'static str] {
    use CognitiveLevel::*;
    match (level, style) {
        (Knowledge, Style::InDomain) => &["{V} the main terms of {T}.", "{V} the key facts about {T}.", "{V} the parts of {T}."],
        (Comprehension, Style::InDomain) => &["{V} in your own words {T}.", "{V} the main idea of {T}.", "{V} how {T} works."],
        (Application, Style::InDomain) => &["{V} {T} to a new problem.", "{V} a worked example using {T}.", "{V} the result for a case involving {T}."],
        (Analysis, Style::InDomain) => &["{V} the components of {T}.", "{V} {T} with a related idea.", "{V} the relationship between the elements of {T}."],
        (Synthesis, Style::InDomain) => &["{V} a new model of {T}.", "{V} an original plan based on {T}.", "{V} a solution that extends {T}."],
        (Evaluation, Style::InDomain) => &["{V} the effectiveness of {T}.", "{V} your opinion on {T}.", "{V} the strengths and weaknesses of {T}."],
        (_, Style::Shifted) => &[
            "Students should {v} {T}.",
            "How would you {v} {T}?",
            "Can you {v} {T} for the class?",
            "{V}: {T}.",
        ],
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn question<R: Rng>(level: CognitiveLevel, style: Style, rng: &mut R) -> String {
    let verb = verbs(level, style).choose(rng).expect("non-empty");
    let topic = topics(style).choose(rng).expect("non-empty");
    let frame = frames(level, style).choose(rng).expect("non-empty");
    frame
        .replace("{V}", &capitalize(verb))
        .replace("{v}", verb)
        .replace("{T}", topic)
}

/// A bank with the given per-level counts, in level-major order.
pub fn generate(name: &str, counts: &[usize; NUM_LEVELS], style: Style, seed: u64) -> Dataset {
    let mut rng = seed::rng(seed, name);
    let mut examples = Vec::with_capacity(counts.iter().sum());
    for level in CognitiveLevel::ALL {
        for _ in 0..counts[level.ordinal()] {
            let id = format!("{name}:{}", examples.len());
            examples.push(Example::new(id, question(level, style, &mut rng), level, name));
        }
    }
    Dataset::new(name, examples).expect("generated examples are valid")
}

pub fn with_counts(name: &str, counts: &[usize; NUM_LEVELS], seed: u64) -> Dataset {
    generate(name, counts, Style::InDomain, seed)
}

/// 600 questions, 100 per level.
pub fn dataset1_like(seed: u64) -> Dataset {
    generate("dataset1", &DATASET1_COUNTS, Style::InDomain, seed)
}

/// 141 questions with the out-of-distribution class profile.
pub fn dataset2_like(seed: u64) -> Dataset {
    generate("dataset2", &DATASET2_COUNTS, Style::Shifted, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_profiles() {
        let d1 = dataset1_like(0);
        assert_eq!(d1.len(), 600);
        assert_eq!(d1.class_counts(), [100; 6]);
        let d2 = dataset2_like(0);
        assert_eq!(d2.len(), 141);
        assert_eq!(d2.class_counts(), [26, 23, 15, 23, 30, 24]);
        assert_eq!(dataset1_like(5), dataset1_like(5));
    }
}
