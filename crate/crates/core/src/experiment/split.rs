//! Stratified splitting and fold assignment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::seed::child_seed;

/// Stratified split: per class, `floor(fraction * n)` samples go to the
/// training set and the remainder to the test set. Disjoint, union equals
/// the input, deterministic in the seed.
pub fn split_dataset(
    data: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let counts = data.class_counts();
    if let Some((class, _)) = counts.iter().enumerate().find(|(_, &c)| c < 2) {
        return Err(Error::invalid(format!(
            "class {class} has fewer than 2 samples, cannot split"
        )));
    }
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in 0..data.num_classes() {
        let mut members = data.indices_of_class(class);
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, "split-class", class as u64));
        members.shuffle(&mut rng);
        let n_train = ((members.len() as f64) * fraction).floor() as usize;
        train_idx.extend(&members[..n_train]);
        test_idx.extend(&members[n_train..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((data.subset(&train_idx), data.subset(&test_idx)))
}

/// Stratified fold assignment: shuffled members of each class are dealt
/// round-robin, so fold sizes differ by at most one per class and every
/// sample lands in exactly one fold.
pub fn stratified_folds(data: &LabeledDataset, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    let counts = data.class_counts();
    if let Some((class, &c)) = counts.iter().enumerate().find(|(_, &c)| c < folds) {
        return Err(Error::invalid(format!(
            "class {class} has {c} samples, fewer than {folds} folds"
        )));
    }
    let mut assignment = vec![Vec::new(); folds];
    for class in 0..data.num_classes() {
        let mut members = data.indices_of_class(class);
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, "fold-class", class as u64));
        members.shuffle(&mut rng);
        for (i, idx) in members.into_iter().enumerate() {
            assignment[i % folds].push(idx);
        }
    }
    for fold in &mut assignment {
        fold.sort_unstable();
    }
    Ok(assignment)
}
