//! Demographic-controlled train/test partitions.
//!
//! For a group pair (g1, g2) and count grids v1, v2, each split draws z1
//! examples from the g1 pool and z2 from the g2 pool without replacement;
//! the test set is always the complement. Examples belonging to both
//! groups, or to neither, are "others": they join the train side when
//! `augment_with_others` is set, otherwise the test side.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::LabeledDataset;
use crate::seed::mix64;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("pool too small for group {group}: requested {requested}, available {available}")]
    PoolTooSmall {
        group: String,
        requested: usize,
        available: usize,
    },
    #[error("invalid window: min {0} > max {1}")]
    InvalidWindow(usize, usize),
    #[error("groups must differ")]
    IdenticalGroups,
    #[error("unknown group: {0}")]
    UnknownGroup(String),
    #[error("reps must be >= 1")]
    ZeroReps,
}

/// Grid of per-group train counts plus repetition and seeding parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub v1: Vec<usize>,
    pub v2: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub augment_with_others: bool,
    pub train_size_window: Option<(usize, usize)>,
}

/// One train/test partition. Index lists are sorted; test is always the
/// complement of train.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub z1: usize,
    pub z2: usize,
    pub rep: usize,
    pub split_seed: u64,
}

/// Enumerate all |v1|·|v2|·reps splits of `ds` for the ordered group pair.
///
/// The per-split RNG seed is `mix64([plan.seed, z1, z2, rep])`, so the
/// result is a pure function of the inputs regardless of consumption
/// order or worker count.
pub fn enumerate_splits<'a>(
    ds: &'a LabeledDataset,
    g1: &str,
    g2: &str,
    plan: &'a SplitPlan,
) -> Result<impl Iterator<Item = Split> + 'a, SplitError> {
    if g1 == g2 {
        return Err(SplitError::IdenticalGroups);
    }
    if plan.reps == 0 {
        return Err(SplitError::ZeroReps);
    }
    let gi1 = ds
        .group_index(g1)
        .ok_or_else(|| SplitError::UnknownGroup(g1.to_string()))?;
    let gi2 = ds
        .group_index(g2)
        .ok_or_else(|| SplitError::UnknownGroup(g2.to_string()))?;

    // Pools hold examples exclusively in one of the two groups; overlap
    // counts as "others" so the draw counts stay exact.
    let mut pool1 = Vec::new();
    let mut pool2 = Vec::new();
    let mut others = Vec::new();
    for (i, ex) in ds.examples.iter().enumerate() {
        match (ex.in_group(gi1), ex.in_group(gi2)) {
            (true, false) => pool1.push(i),
            (false, true) => pool2.push(i),
            _ => others.push(i),
        }
    }

    for &z1 in &plan.v1 {
        if z1 > pool1.len() {
            return Err(SplitError::PoolTooSmall {
                group: g1.to_string(),
                requested: z1,
                available: pool1.len(),
            });
        }
    }
    for &z2 in &plan.v2 {
        if z2 > pool2.len() {
            return Err(SplitError::PoolTooSmall {
                group: g2.to_string(),
                requested: z2,
                available: pool2.len(),
            });
        }
    }

    let n = ds.len();
    let iter = plan.v1.clone().into_iter().flat_map(move |z1| {
        let pool1 = pool1.clone();
        let pool2 = pool2.clone();
        let others = others.clone();
        plan.v2.clone().into_iter().flat_map(move |z2| {
            let pool1 = pool1.clone();
            let pool2 = pool2.clone();
            let others = others.clone();
            (0..plan.reps).map(move |rep| {
                let split_seed = mix64(&[plan.seed, z1 as u64, z2 as u64, rep as u64]);
                let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
                let mut train: Vec<usize> = Vec::with_capacity(z1 + z2 + others.len());
                train.extend(draw_without_replacement(&pool1, z1, &mut rng));
                train.extend(draw_without_replacement(&pool2, z2, &mut rng));
                if plan.augment_with_others {
                    train.extend_from_slice(&others);
                }
                train.sort_unstable();
                let mut in_train = vec![false; n];
                for &i in &train {
                    in_train[i] = true;
                }
                let test: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
                Split {
                    train_indices: train,
                    test_indices: test,
                    z1,
                    z2,
                    rep,
                    split_seed,
                }
            })
        })
    });
    Ok(iter)
}

fn draw_without_replacement(pool: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut shuffled = pool.to_vec();
    let (chosen, _) = shuffled.partial_shuffle(rng, k);
    chosen.to_vec()
}

/// Keep only splits whose train size falls in `[min, max]`.
pub fn filter_by_train_size<I: Iterator<Item = Split>>(
    splits: I,
    window: (usize, usize),
) -> Result<impl Iterator<Item = Split>, SplitError> {
    let (min, max) = window;
    if min > max {
        return Err(SplitError::InvalidWindow(min, max));
    }
    Ok(splits.filter(move |s| s.train_indices.len() >= min && s.train_indices.len() <= max))
}
