use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lowercased alphanumeric word unigrams; all punctuation is dropped.
pub fn classical_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// Vocabulary and inverse document frequencies learned from a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfState {
    /// Term to column; columns follow lexicographic term order.
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub n_docs: usize,
}

impl TfidfState {
    /// Smoothed idf: `ln((1 + N) / (1 + df)) + 1`.
    pub fn fit(corpus: &[&str]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Empty("TF-IDF fit corpus".into()));
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in corpus {
            let mut terms = classical_tokens(doc);
            terms.sort_unstable();
            terms.dedup();
            for t in terms {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = corpus.len() as f64;
        let idf = df.values().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        let vocabulary = df.into_keys().enumerate().map(|(i, t)| (t, i)).collect();
        Ok(Self {
            vocabulary,
            idf,
            n_docs: corpus.len(),
        })
    }

    pub fn width(&self) -> usize {
        self.idf.len()
    }

    /// Raw term count times idf, L2-normalised per row. Terms outside the
    /// fitted vocabulary are ignored; a document with none gives a zero row.
    pub fn transform(&self, docs: &[&str]) -> Vec<Vec<f64>> {
        docs.iter()
            .map(|doc| {
                let mut counts: HashMap<usize, f64> = HashMap::new();
                for t in classical_tokens(doc) {
                    if let Some(&j) = self.vocabulary.get(&t) {
                        *counts.entry(j).or_default() += 1.0;
                    }
                }
                let mut row = vec![0.0; self.width()];
                for (j, c) in counts {
                    row[j] = c * self.idf[j];
                }
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    row.iter_mut().for_each(|v| *v /= norm);
                }
                row
            })
            .collect()
    }
}

/// Fit on `corpus` when `state` is `None`, otherwise transform with the
/// given state. Returns the matrix and the state used.
pub fn tfidf_features(corpus: &[&str], state: Option<&TfidfState>) -> Result<(Vec<Vec<f64>>, TfidfState)> {
    let state = match state {
        Some(s) => s.clone(),
        None => TfidfState::fit(corpus)?,
    };
    Ok((state.transform(corpus), state))
}

/// Fit/transform wrapper that refuses to transform before fitting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    state: Option<TfidfState>,
}

impl TfidfVectorizer {
    pub fn fit_transform(&mut self, corpus: &[&str]) -> Result<Vec<Vec<f64>>> {
        let state = TfidfState::fit(corpus)?;
        let m = state.transform(corpus);
        self.state = Some(state);
        Ok(m)
    }

    pub fn transform(&self, docs: &[&str]) -> Result<Vec<Vec<f64>>> {
        Ok(self.state.as_ref().ok_or(Error::NotFitted)?.transform(docs))
    }

    pub fn state(&self) -> Option<&TfidfState> {
        self.state.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_strip_punctuation() {
        assert_eq!(classical_tokens("Define: 'osmosis', e.g. H2O!"), ["define", "osmosis", "e", "g", "h2o"]);
    }

    #[test]
    fn toy_corpus_by_hand() {
        let corpus = ["the cat sat", "the dog sat sat", "the bird"];
        let (m, s) = tfidf_features(&corpus, None).unwrap();
        let cols: Vec<&str> = s.vocabulary.keys().map(String::as_str).collect();
        assert_eq!(cols, ["bird", "cat", "dog", "sat", "the"]);
        let idf = |df: f64| (4.0f64 / (1.0 + df)).ln() + 1.0;
        let expect = |raw: [f64; 5]| {
            let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            raw.map(|v| v / n)
        };
        let want = [
            expect([0.0, idf(1.0), 0.0, idf(2.0), 1.0]),
            expect([0.0, 0.0, idf(1.0), 2.0 * idf(2.0), 1.0]),
            expect([idf(1.0), 0.0, 0.0, 0.0, 1.0]),
        ];
        for (row, w) in m.iter().zip(want) {
            for (a, b) in row.iter().zip(w) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        // "the" occurs everywhere: idf exactly 1.
        assert_eq!(s.idf[4], 1.0);
        // absent term: zero weight
        assert_eq!(m[2][1], 0.0);
    }

    #[test]
    fn fit_transform_separation() {
        let corpus = ["alpha beta", "beta gamma gamma", "delta"];
        let mut v = TfidfVectorizer::default();
        assert!(matches!(v.transform(&corpus), Err(Error::NotFitted)));
        let fitted = v.fit_transform(&corpus).unwrap();
        assert_eq!(v.transform(&corpus).unwrap(), fitted);
        let unseen = v.transform(&["omega alpha"]).unwrap();
        assert_eq!(unseen[0].len(), fitted[0].len());
        assert!(v.transform(&["omega"]).unwrap()[0].iter().all(|x| *x == 0.0));
        assert!(TfidfState::fit(&[]).is_err());
    }
}
