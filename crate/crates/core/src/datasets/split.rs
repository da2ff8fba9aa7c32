use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Disjoint train/validation/test index lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// First `n_train` indices train, next `n_val` validate, the rest test.
    pub fn contiguous(n_train: usize, n_val: usize, n_test: usize) -> Self {
        Self {
            train: (0..n_train).collect(),
            val: (n_train..n_train + n_val).collect(),
            test: (n_train + n_val..n_train + n_val + n_test).collect(),
        }
    }
}

/// Either a fixed split or a fold assignment for cross-validation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SplitSpec {
    Fixed { split: Split, seed: u64 },
    Folds { fold_of: Vec<usize>, folds: usize, seed: u64 },
}

impl SplitSpec {
    pub fn num_folds(&self) -> usize {
        match self {
            SplitSpec::Fixed { .. } => 1,
            SplitSpec::Folds { folds, .. } => *folds,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            SplitSpec::Fixed { seed, .. } | SplitSpec::Folds { seed, .. } => *seed,
        }
    }

    /// Fold `i` tests on fold `i`, validates on fold `i + 1 (mod folds)` and
    /// trains on the rest.
    pub fn split(&self, fold: usize) -> Split {
        match self {
            SplitSpec::Fixed { split, .. } => split.clone(),
            SplitSpec::Folds { fold_of, folds, .. } => {
                let test_fold = fold % folds;
                let val_fold = (fold + 1) % folds;
                let mut split = Split { train: Vec::new(), val: Vec::new(), test: Vec::new() };
                for (i, &f) in fold_of.iter().enumerate() {
                    if f == test_fold {
                        split.test.push(i);
                    } else if f == val_fold {
                        split.val.push(i);
                    } else {
                        split.train.push(i);
                    }
                }
                split
            }
        }
    }
}

/// Label-stratified fold assignment. Each label's members are shuffled and
/// dealt round-robin, continuing the dealing position across labels, so fold
/// sizes differ by at most one and every fold holds each label within one of
/// its proportional share.
pub fn kfold_splits(labels: &[usize], folds: usize, seed: u64) -> Result<SplitSpec> {
    if folds < 2 {
        return Err(Error::InvalidConfig(format!("{folds} folds; need at least 2")));
    }
    if folds > labels.len() {
        return Err(Error::InvalidConfig(format!("{folds} folds for {} graphs", labels.len())));
    }
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_label.entry(l).or_default().push(i);
    }
    let mut rng = rng::seeded(seed);
    let mut fold_of = vec![0; labels.len()];
    let mut position = 0;
    for members in by_label.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            fold_of[i] = position % folds;
            position += 1;
        }
    }
    Ok(SplitSpec::Folds { fold_of, folds, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_into_ten() {
        let labels: Vec<usize> = (0..10).map(|i| 1 + i % 3).collect();
        let spec = kfold_splits(&labels, 10, 4).unwrap();
        let SplitSpec::Folds { fold_of, .. } = &spec else { panic!() };
        let mut counts = [0; 10];
        fold_of.iter().for_each(|&f| counts[f] += 1);
        assert_eq!(counts, [1; 10]);
        let s = spec.split(0);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn deterministic_under_seed() {
        let labels: Vec<usize> = (0..57).map(|i| 1 + i % 4).collect();
        assert_eq!(kfold_splits(&labels, 5, 9).unwrap(), kfold_splits(&labels, 5, 9).unwrap());
        assert_ne!(kfold_splits(&labels, 5, 9).unwrap(), kfold_splits(&labels, 5, 10).unwrap());
    }

    #[test]
    fn invalid_fold_counts() {
        assert!(kfold_splits(&[1, 2, 1], 4, 0).is_err());
        assert!(kfold_splits(&[1, 2, 1], 1, 0).is_err());
    }

    #[test]
    fn contiguous_fixed_split() {
        let s = Split::contiguous(3, 2, 1);
        assert_eq!(s.train, vec![0, 1, 2]);
        assert_eq!(s.val, vec![3, 4]);
        assert_eq!(s.test, vec![5]);
    }

    proptest! {
        #[test]
        fn stratified_partition(labels in proptest::collection::vec(1usize..5, 20..200), folds in 2usize..11, seed in any::<u64>()) {
            let spec = kfold_splits(&labels, folds, seed).unwrap();
            let SplitSpec::Folds { fold_of, .. } = &spec else { unreachable!() };
            // per-fold label histogram within ±1 of proportional
            for label in 1..5 {
                let total = labels.iter().filter(|&&l| l == label).count() as f64;
                for f in 0..folds {
                    let here = labels.iter().zip(fold_of).filter(|(&l, &g)| l == label && g == f).count() as f64;
                    prop_assert!((here - total / folds as f64).abs() <= 1.0);
                }
            }
            // every fold rotation partitions the index set
            for f in 0..folds {
                let s = spec.split(f);
                let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            }
        }
    }
}
