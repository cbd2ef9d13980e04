//! Random forest of CART trees (Gini impurity) with bootstrap sampling and
//! per-node random feature subsets. Predictions are majority votes.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CognitiveLevel, NUM_LEVELS};
use crate::seed::{self, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Unlimited when `None`.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features examined per split; `None` means `ceil(sqrt(width))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(c) => return *c,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    params: ForestParams,
    width: usize,
    trees: Vec<Tree>,
}

fn gini(counts: &[usize; NUM_LEVELS], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize; NUM_LEVELS]) -> usize {
    let mut best = 0;
    for c in 1..NUM_LEVELS {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    best
}

struct Builder<'a, R: Rng> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    params: &'a ForestParams,
    max_features: usize,
    rng: R,
    nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, R> {
    fn counts(&self, idx: &[usize]) -> [usize; NUM_LEVELS] {
        let mut c = [0; NUM_LEVELS];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    /// Best `(feature, threshold, impurity decrease)` among randomly
    /// ordered features: at least `max_features` are examined, and the
    /// search continues past that until some feature separates the node.
    fn best_split(&mut self, idx: &[usize], parent: &[usize; NUM_LEVELS]) -> Option<(usize, f64)> {
        let n = idx.len();
        let parent_gini = gini(parent, n);
        let mut features: Vec<usize> = (0..self.x[0].len()).collect();
        features.shuffle(&mut self.rng);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
        for (visited, &f) in features.iter().enumerate() {
            if visited >= self.max_features && best.is_some() {
                break;
            }
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }
            let mut left = [0usize; NUM_LEVELS];
            for k in 0..n - 1 {
                left[pairs[k].1] += 1;
                if pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let nl = k + 1;
                let mut right = *parent;
                for c in 0..NUM_LEVELS {
                    right[c] -= left[c];
                }
                let weighted = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
                let gain = parent_gini - weighted;
                if best.is_none_or(|b| gain > b.2) {
                    best = Some((f, 0.5 * (pairs[k].0 + pairs[k + 1].0), gain));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(majority(&counts)));
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || idx.len() < self.params.min_samples_split {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&idx, &counts) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], labels: &[CognitiveLevel], params: &ForestParams) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Empty("forest training rows".into()));
        }
        if x.len() != labels.len() {
            return Err(Error::InvalidArgument(format!("{} rows but {} labels", x.len(), labels.len())));
        }
        let width = x[0].len();
        if width == 0 || x.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidArgument("feature rows must share a positive width".into()));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forest features".into()));
        }
        let y: Vec<usize> = labels.iter().map(|l| l.ordinal()).collect();
        if y.iter().all(|&c| c == y[0]) {
            return Err(Error::InvalidArgument("training labels contain a single class".into()));
        }
        if params.n_trees == 0 || params.min_samples_split < 2 || params.max_features == Some(0) {
            return Err(Error::InvalidArgument(format!("invalid forest parameters {params:?}")));
        }
        let max_features = params
            .max_features
            .unwrap_or_else(|| (width as f64).sqrt().ceil() as usize)
            .min(width);
        let trees = (0..params.n_trees)
            .map(|t| {
                let mut rng = seed::rng_indexed(params.seed, stream::FOREST, t as u64);
                let sample: Vec<usize> = if params.bootstrap {
                    (0..x.len()).map(|_| rng.random_range(0..x.len())).collect()
                } else {
                    (0..x.len()).collect()
                };
                let mut b = Builder {
                    x,
                    y: &y,
                    params,
                    max_features,
                    rng,
                    nodes: Vec::new(),
                };
                b.grow(sample, 0);
                Tree { nodes: b.nodes }
            })
            .collect();
        Ok(Self {
            params: params.clone(),
            width,
            trees,
        })
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Fraction of trees voting for each class, per row.
    pub fn vote_fractions(&self, x: &[Vec<f64>]) -> Result<Vec<[f64; NUM_LEVELS]>> {
        x.iter()
            .map(|row| {
                if row.len() != self.width {
                    return Err(Error::DimensionMismatch {
                        what: "forest feature width".into(),
                        expected: self.width,
                        found: row.len(),
                    });
                }
                let mut votes = [0.0; NUM_LEVELS];
                for t in &self.trees {
                    votes[t.predict(row)] += 1.0;
                }
                Ok(votes.map(|v| v / self.trees.len() as f64))
            })
            .collect()
    }

    /// Majority vote per row; ties go to the lowest ordinal.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<CognitiveLevel>> {
        Ok(self
            .vote_fractions(x)?
            .iter()
            .map(|v| {
                let mut best = 0;
                for c in 1..NUM_LEVELS {
                    if v[c] > v[best] {
                        best = c;
                    }
                }
                CognitiveLevel::from_ordinal(best).expect("ordinal in range")
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        bincode::serde::encode_to_vec(self, bincode::config::standard())
            .map_err(|e| Error::Checkpoint(format!("encoding forest: {e}")))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        bincode::serde::decode_from_slice(bytes, bincode::config::standard())
            .map(|(f, _)| f)
            .map_err(|e| Error::Checkpoint(format!("decoding forest: {e}")))
    }
}
