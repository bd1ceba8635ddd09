//! Pair sampling: each epoch the training set is shuffled twice into two
//! independent streams, which are walked in aligned mini-batches. Position
//! `k` of batch `i` in stream A is paired with position `k` of batch `i` in
//! stream B.
//!
//! Trailing samples that do not fill a batch are dropped for the epoch.
//! Self-pairs (the same index in both streams) are allowed and get `γ = 0`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::loss::gamma;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochPlan {
    seed: u64,
    batch_size: usize,
    permutation_a: Vec<usize>,
    permutation_b: Vec<usize>,
}

impl EpochPlan {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn dataset_size(&self) -> usize {
        self.permutation_a.len()
    }

    pub fn num_batches(&self) -> usize {
        self.permutation_a.len() / self.batch_size
    }

    pub fn permutation_a(&self) -> &[usize] {
        &self.permutation_a
    }

    pub fn permutation_b(&self) -> &[usize] {
        &self.permutation_b
    }

    /// Index pairs `(a, b)` of batch `batch_index`.
    pub fn batch_indices(&self, batch_index: usize) -> Result<impl Iterator<Item = (usize, usize)> + '_> {
        if batch_index >= self.num_batches() {
            return Err(Error::InvalidArgument(format!(
                "batch index {batch_index} out of range for {} batches",
                self.num_batches()
            )));
        }
        let range = batch_index * self.batch_size..(batch_index + 1) * self.batch_size;
        Ok(self.permutation_a[range.clone()].iter().copied().zip(self.permutation_b[range].iter().copied()))
    }
}

/// Two independent seeded shuffles of `0..dataset_size`.
pub fn plan_epoch(dataset_size: usize, batch_size: usize, seed: u64) -> Result<EpochPlan> {
    if dataset_size == 0 {
        return Err(Error::Empty("dataset"));
    }
    if batch_size == 0 || batch_size > dataset_size {
        return Err(Error::InvalidArgument(format!("batch size {batch_size} must be in 1..={dataset_size}")));
    }
    let shuffled = |stream: u64| {
        let mut idx: Vec<usize> = (0..dataset_size).collect();
        idx.shuffle(&mut seed::child_rng(seed, seed::stream::EPOCH, stream));
        idx
    };
    Ok(EpochPlan { seed, batch_size, permutation_a: shuffled(0), permutation_b: shuffled(1) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePair<'a> {
    pub index_a: usize,
    pub index_b: usize,
    pub sample_a: &'a LabeledSample,
    pub sample_b: &'a LabeledSample,
    pub gamma: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch<'a> {
    pairs: Vec<SamplePair<'a>>,
}

impl<'a> PairBatch<'a> {
    pub fn pairs(&self) -> &[SamplePair<'a>] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn next_pair_batch<'a>(plan: &EpochPlan, dataset: &'a Dataset, batch_index: usize) -> Result<PairBatch<'a>> {
    crate::error::ensure_same_dim(plan.dataset_size(), dataset.len())?;
    let samples = dataset.samples();
    let pairs = plan
        .batch_indices(batch_index)?
        .map(|(a, b)| SamplePair {
            index_a: a,
            index_b: b,
            sample_a: &samples[a],
            sample_b: &samples[b],
            gamma: gamma(samples[a].label, samples[b].label),
        })
        .collect();
    Ok(PairBatch { pairs })
}
