use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SampleRecord;
use crate::error::{ensure, Result};

/// `K` disjoint lists of record indices covering the dataset, with every
/// subject confined to a single fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub folds: Vec<Vec<usize>>,
}

impl FoldSplit {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Training indices (all other folds) and test indices (fold `k`), each sorted.
    pub fn train_test(&self, k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        ensure!(k < self.folds.len(), Config, "fold {k} out of range 0..{}", self.folds.len());
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        Ok((train, self.folds[k].clone()))
    }
}

/// Shuffles subjects with `seed` and assigns each, with all its records, to
/// the fold that currently holds the fewest records (lowest index on ties).
pub fn make_folds_by_subject(subjects: &[&str], k: usize, seed: u64) -> Result<FoldSplit> {
    ensure!(k >= 1, Contract, "fold count must be positive");
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in subjects.iter().enumerate() {
        by_subject.entry(s).or_default().push(i);
    }
    ensure!(
        by_subject.len() >= k,
        Contract,
        "{} distinct subjects cannot fill {k} subject-exclusive folds",
        by_subject.len()
    );
    let mut groups: Vec<Vec<usize>> = by_subject.into_values().collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for g in groups {
        let target = (0..k).min_by_key(|&f| folds[f].len()).expect("k >= 1");
        folds[target].extend(g);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldSplit { folds })
}

pub fn make_folds(records: &[SampleRecord], k: usize, seed: u64) -> Result<FoldSplit> {
    let subjects: Vec<&str> = records.iter().map(|r| r.subject.as_str()).collect();
    make_folds_by_subject(&subjects, k, seed)
}
