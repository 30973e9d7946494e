//! Stratified splits and folds over binary-labeled objects.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Indices per class, each class shuffled on its own stream.
fn shuffled_classes(labels: &[u8], seed: u64, salt: &str) -> Vec<Vec<usize>> {
    let classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng::stream(seed, &format!("{salt}/class-{c}")));
    }
    by_class
}

/// Train and test index sets (each sorted) with `round(test_fraction · n_c)`
/// test objects from every class `c`.
pub fn stratified_split(labels: &[u8], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::invalid_argument(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for members in shuffled_classes(labels, seed, "split") {
        let k = (test_fraction * members.len() as f64).round() as usize;
        test.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid_argument(format!("{} objects cannot be split {test_fraction}", labels.len())));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// `k` disjoint folds covering every object once; each class is dealt
/// round-robin, so per-class fold sizes differ by at most one.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || labels.len() < k {
        return Err(Error::invalid_argument(format!("{} objects cannot form {k} folds", labels.len())));
    }
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for members in shuffled_classes(labels, seed, "folds") {
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}
