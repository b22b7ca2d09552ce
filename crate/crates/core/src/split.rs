//! Train/validation/test partitioning.
//!
//! Items are first put into a stratified order: each class is shuffled and
//! the classes are interleaved by fractional rank, so any evenly spaced
//! subset of positions keeps the class proportions.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitPlan {
    /// Four folds; each rotation trains on two, validates on one, tests on one.
    FourFold { seed: u64 },
    /// Splits a training pool into train/validation; the test set is external.
    TrainValidation { val_fraction: f64, seed: u64 },
}

impl SplitPlan {
    pub fn four_fold(seed: u64) -> Self {
        SplitPlan::FourFold { seed }
    }

    /// The 80/20 train/validation split.
    pub fn train_validation(seed: u64) -> Self {
        SplitPlan::TrainValidation {
            val_fraction: 0.2,
            seed,
        }
    }
}

/// Item indices of one rotation. `test` is empty for [`SplitPlan::TrainValidation`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn stratified_order(labels: &[usize], n_classes: usize, min_per_class: usize, seed: u64) -> Result<Vec<usize>> {
    let mut by_class: Vec<Vec<usize>> = (0..n_classes).map(|_| Vec::new()).collect();
    for (i, &l) in labels.iter().enumerate() {
        by_class
            .get_mut(l)
            .ok_or(Error::LabelOutOfRange {
                label: l,
                classes: n_classes,
            })?
            .push(i);
    }
    if let Some((c, members)) = by_class.iter().enumerate().find(|(_, m)| m.len() < min_per_class) {
        return Err(Error::InvalidConfig(format!(
            "class {c} has {} items, need at least {min_per_class}",
            members.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    // (class, rank) ordered by (2·rank + 1) / class_size, ties by class
    let mut keyed: Vec<(usize, usize)> = by_class
        .iter()
        .enumerate()
        .flat_map(|(c, m)| (0..m.len()).map(move |r| (c, r)))
        .collect();
    keyed.sort_by(|&(ca, ra), &(cb, rb)| {
        let lhs = (2 * ra + 1) * by_class[cb].len();
        let rhs = (2 * rb + 1) * by_class[ca].len();
        match lhs.cmp(&rhs) {
            Ordering::Equal => ca.cmp(&cb),
            o => o,
        }
    });
    Ok(keyed.into_iter().map(|(c, r)| by_class[c][r]).collect())
}

/// Partitions items with the given labels. Deterministic for a fixed seed.
pub fn make_splits(labels: &[usize], n_classes: usize, plan: &SplitPlan) -> Result<Vec<Split>> {
    if n_classes == 0 {
        return Err(Error::InvalidConfig("need at least one class".into()));
    }
    match *plan {
        SplitPlan::FourFold { seed } => {
            let order = stratified_order(labels, n_classes, 4, seed)?;
            let mut folds: [Vec<usize>; 4] = Default::default();
            for (pos, &item) in order.iter().enumerate() {
                folds[pos % 4].push(item);
            }
            folds.iter_mut().for_each(|f| f.sort_unstable());
            Ok((0..4)
                .map(|r| {
                    let test = folds[r].clone();
                    let val = folds[(r + 1) % 4].clone();
                    let mut train: Vec<usize> = folds[(r + 2) % 4].iter().chain(&folds[(r + 3) % 4]).copied().collect();
                    train.sort_unstable();
                    Split { train, val, test }
                })
                .collect())
        }
        SplitPlan::TrainValidation { val_fraction, seed } => {
            if !(val_fraction > 0.0 && val_fraction < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "validation fraction {val_fraction} not in (0, 1)"
                )));
            }
            let order = stratified_order(labels, n_classes, 1, seed)?;
            if order.len() < 2 {
                return Err(Error::TooFewSamples {
                    needed: 2,
                    got: order.len(),
                });
            }
            // evenly spaced validation positions: p where floor((p+1)·f) > floor(p·f)
            let mut split = Split::default();
            for (pos, &item) in order.iter().enumerate() {
                let before = libm::floor(pos as f64 * val_fraction + 1e-9);
                let after = libm::floor((pos + 1) as f64 * val_fraction + 1e-9);
                if after > before {
                    split.val.push(item);
                } else {
                    split.train.push(item);
                }
            }
            if split.val.is_empty() {
                let moved = split.train.pop().expect("at least two items");
                split.val.push(moved);
            }
            split.train.sort_unstable();
            split.val.sort_unstable();
            Ok(alloc::vec![split])
        }
    }
}
