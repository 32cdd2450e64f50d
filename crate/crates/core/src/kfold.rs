//! Stratified k-fold splitting.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ClassifierRecord, Label};

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Splits `labels` into `k` folds preserving class balance.
///
/// Each class is shuffled with a seeded ChaCha8 generator and dealt
/// round-robin; the dealing position carries over between classes (taken in
/// label order) so class remainders land on different folds. Every fold
/// gets `floor` or `ceil` of `n_c / k` items of each class `c`. Index lists
/// are ascending.
pub fn stratified_kfold<L: Ord + Clone + std::fmt::Debug>(labels: &[L], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("k must be at least 2, got {k}")));
    }
    let mut classes: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        classes.entry(label).or_default().push(i);
    }
    if let Some((label, members)) = classes.iter().find(|(_, m)| m.len() < k) {
        return Err(Error::InvalidInput(format!(
            "class {label:?} has {} members, fewer than k = {k}",
            members.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    let mut next = 0usize;
    for members in classes.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = next % k;
            next += 1;
        }
    }

    Ok((0..k)
        .map(|f| {
            let (validation, train) = (0..labels.len()).partition(|&i| assignment[i] == f);
            Fold { train, validation }
        })
        .collect())
}

/// [`stratified_kfold`] over the bona fide / morph labels of `records`.
pub fn stratified_kfold_records(records: &[ClassifierRecord], k: usize, seed: u64) -> Result<Vec<Fold>> {
    let labels: Vec<Label> = records.iter().map(|r| r.label).collect();
    stratified_kfold(&labels, k, seed)
}
