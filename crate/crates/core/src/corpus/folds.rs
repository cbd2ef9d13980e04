use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Dataset, NUM_LEVELS};
use crate::seed::{self, stream};
use crate::{CognitiveLevel, Error, Result};

/// Assignment of every example id to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    /// Positions in `dataset` (dataset order) of the examples in fold `i`.
    pub fn test_indices(&self, dataset: &Dataset, fold: usize) -> Result<Vec<usize>> {
        self.split_indices(dataset, fold).map(|(_, test)| test)
    }

    /// `(train, test)` positions for fold `i`: test is fold `i`, train is the rest.
    pub fn split_indices(&self, dataset: &Dataset, fold: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        if fold >= self.k {
            return Err(Error::InvalidArgument(format!(
                "fold {fold} out of range for k={}",
                self.k
            )));
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, ex) in dataset.examples().iter().enumerate() {
            match self.fold_of(&ex.id) {
                Some(f) if f == fold => test.push(i),
                Some(_) => train.push(i),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "example {:?} is not covered by the fold plan",
                        ex.id
                    )))
                }
            }
        }
        if dataset.len() != self.assignment.len() {
            return Err(Error::InvalidArgument(format!(
                "fold plan covers {} ids but dataset {} has {}",
                self.assignment.len(),
                dataset.name(),
                dataset.len()
            )));
        }
        Ok((train, test))
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// SHA-256 of the canonical JSON form, hex encoded. Recorded in run
    /// manifests.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("fold plan serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Partition `dataset` into `k` folds.
///
/// Stratified plans shuffle each class independently and deal the
/// concatenated classes round-robin, so every class's per-fold counts differ
/// by at most one and fold sizes differ by at most one.
pub fn make_folds(dataset: &Dataset, k: usize, seed: u64, stratified: bool) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    if k > dataset.len() {
        return Err(Error::InvalidArgument(format!(
            "k={k} exceeds the {} examples of {}",
            dataset.len(),
            dataset.name()
        )));
    }
    let mut rng = seed::rng(seed, stream::FOLDS);
    let order: Vec<usize> = if stratified {
        let counts = dataset.class_counts();
        for level in CognitiveLevel::ALL {
            let count = counts[level.ordinal()];
            if count > 0 && count < k {
                return Err(Error::Stratification {
                    k,
                    level: level.name().to_string(),
                    count,
                });
            }
        }
        let mut by_class: [Vec<usize>; NUM_LEVELS] = Default::default();
        for (i, ex) in dataset.examples().iter().enumerate() {
            by_class[ex.label.ordinal()].push(i);
        }
        by_class
            .into_iter()
            .flat_map(|mut members| {
                members.shuffle(&mut rng);
                members
            })
            .collect()
    } else {
        let mut all: Vec<usize> = (0..dataset.len()).collect();
        all.shuffle(&mut rng);
        all
    };

    let examples = dataset.examples();
    let assignment = order
        .into_iter()
        .enumerate()
        .map(|(pos, i)| (examples[i].id.clone(), pos % k))
        .collect();
    Ok(FoldPlan {
        k,
        seed,
        stratified,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synthetic;
    use proptest::prelude::*;

    #[test]
    fn dataset1_shape_stratified() {
        let ds = synthetic::dataset1_like(3);
        let plan = make_folds(&ds, 5, 11, true).unwrap();
        for fold in 0..5 {
            let test = plan.test_indices(&ds, fold).unwrap();
            assert_eq!(test.len(), 120);
            let mut per_class = [0; NUM_LEVELS];
            for i in test {
                per_class[ds.examples()[i].label.ordinal()] += 1;
            }
            assert_eq!(per_class, [20; NUM_LEVELS]);
        }
    }

    #[test]
    fn k_bounds() {
        let ds = synthetic::dataset2_like(1);
        assert!(matches!(make_folds(&ds, 1, 0, true), Err(Error::InvalidArgument(_))));
        // Application has 15 examples in the Dataset2 shape.
        assert!(matches!(
            make_folds(&ds, 16, 0, true),
            Err(Error::Stratification { count: 15, .. })
        ));
        assert!(make_folds(&ds, 16, 0, false).is_ok());
        assert!(make_folds(&ds, 142, 0, false).is_err());
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let ds = synthetic::dataset1_like(0);
        let a = make_folds(&ds, 5, 42, true).unwrap();
        let b = make_folds(&ds, 5, 42, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.assignment, make_folds(&ds, 5, 43, true).unwrap().assignment);
    }

    #[test]
    fn json_roundtrip() {
        let ds = synthetic::dataset2_like(0);
        let plan = make_folds(&ds, 5, 1, false).unwrap();
        assert_eq!(FoldPlan::from_json(&plan.to_json().unwrap()).unwrap(), plan);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn partition_and_stratification(
            counts in proptest::collection::vec(3usize..25, NUM_LEVELS),
            k in 2usize..4,
            seed in any::<u64>(),
            stratified in any::<bool>(),
        ) {
            let ds = synthetic::with_counts("p", &counts.clone().try_into().unwrap(), seed);
            let plan = make_folds(&ds, k, seed, stratified).unwrap();
            // every id exactly once, folds disjoint and non-empty
            prop_assert_eq!(plan.assignment.len(), ds.len());
            let mut seen = std::collections::HashSet::new();
            for fold in 0..k {
                let idx = plan.test_indices(&ds, fold).unwrap();
                prop_assert!(!idx.is_empty());
                for i in idx {
                    prop_assert!(seen.insert(i));
                }
            }
            prop_assert_eq!(seen.len(), ds.len());
            if stratified {
                for level in CognitiveLevel::ALL {
                    let per_fold: Vec<usize> = (0..k)
                        .map(|f| plan.test_indices(&ds, f).unwrap().into_iter()
                            .filter(|&i| ds.examples()[i].label == level).count())
                        .collect();
                    let max = *per_fold.iter().max().unwrap();
                    let min = *per_fold.iter().min().unwrap();
                    prop_assert!(max - min <= 1);
                }
            }
        }
    }
}
