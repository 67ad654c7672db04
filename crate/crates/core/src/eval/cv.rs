use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Disjoint held-out index sets plus any stratification warnings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Folds {
    pub folds: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

impl Folds {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Indices outside fold `i`, ascending.
    pub fn train_indices(&self, i: usize) -> Vec<usize> {
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        train
    }
}

/// Splits sample indices into `k` folds that keep class proportions: each
/// class's members are shuffled (seeded) and dealt round-robin, continuing
/// the rotation from one class to the next so fold sizes stay balanced too.
/// Per class, fold counts differ by at most one.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Folds> {
    if k < 2 {
        return Err(Error::CrossVal(format!("k must be at least 2, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::CrossVal(format!(
            "{} samples cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut warnings = Vec::new();
    let mut next = 0;
    for (class, members) in &mut by_class {
        if members.len() < k {
            warnings.push(format!(
                "class {class} has {} samples; {} folds will not contain it",
                members.len(),
                k - members.len()
            ));
        }
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(Folds { folds, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn per_fold_counts(folds: &Folds, labels: &[usize], class: usize) -> Vec<usize> {
        folds
            .folds
            .iter()
            .map(|f| f.iter().filter(|&&i| labels[i] == class).count())
            .collect()
    }

    #[test]
    fn exact_divisibility() {
        let labels: Vec<usize> = (0..60).map(|i| i % 6).collect();
        let f = stratified_kfold(&labels, 10, 4).unwrap();
        for c in 0..6 {
            assert_eq!(per_fold_counts(&f, &labels, c), vec![1; 10]);
        }
        assert!(f.warnings.is_empty());
    }

    #[test]
    fn same_seed_same_folds() {
        let labels: Vec<usize> = (0..31).map(|i| i % 3).collect();
        assert_eq!(
            stratified_kfold(&labels, 2, 8).unwrap(),
            stratified_kfold(&labels, 2, 8).unwrap()
        );
    }

    #[test]
    fn small_class_warns() {
        let labels = vec![0, 0, 0, 0, 1];
        let f = stratified_kfold(&labels, 3, 0).unwrap();
        assert_eq!(f.warnings.len(), 1);
        assert!(stratified_kfold(&labels, 1, 0).is_err());
        assert!(stratified_kfold(&labels, 6, 0).is_err());
    }

    #[test]
    fn train_indices_complement() {
        let labels: Vec<usize> = (0..20).map(|i| i % 4).collect();
        let f = stratified_kfold(&labels, 4, 1).unwrap();
        let mut all = f.train_indices(2);
        all.extend(&f.folds[2]);
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn partition_and_balance(
            labels in prop::collection::vec(0usize..16, 10..200),
            k in 2usize..10,
            seed in any::<u64>(),
        ) {
            prop_assume!(labels.len() >= k);
            let f = stratified_kfold(&labels, k, seed).unwrap();
            let mut seen: Vec<usize> = f.folds.concat();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..labels.len()).collect::<Vec<_>>());
            for c in 0..16 {
                let counts = per_fold_counts(&f, &labels, c);
                let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
                prop_assert!(hi - lo <= 1);
            }
            let sizes: Vec<usize> = f.folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
