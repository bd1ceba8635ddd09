//! Set-level Euclidean Confusion and energy distance between finite sets of
//! probability vectors.
//!
//! Every expectation here is taken over independent uniform draws from each
//! set, so within-set terms include the self-pairs `(X, X)`. Evaluation is
//! brute force over all pairs; these functions serve as the oracle for the
//! sampled per-pair estimate used during training.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_dim, Error, Result};
use crate::simplex::{squared_distance, DivergenceValue, ProbVector};

/// Softmax outputs for the members of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSet {
    members: Vec<ProbVector>,
    class_id: usize,
}

impl DistributionSet {
    pub fn new(class_id: usize, members: Vec<ProbVector>) -> Result<Self> {
        let first = members.first().ok_or(Error::Empty("distribution set"))?;
        let dim = first.dim();
        for m in &members[1..] {
            ensure_same_dim(dim, m.dim())?;
        }
        Ok(Self { members, class_id })
    }

    pub fn members(&self) -> &[ProbVector] {
        &self.members
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }
}

fn mean_over_pairs(a: &DistributionSet, b: &DistributionSet, dist: impl Fn(&[f64], &[f64]) -> f64) -> Result<f64> {
    ensure_same_dim(a.dim(), b.dim())?;
    let mut total = 0.0;
    for x in &a.members {
        for y in &b.members {
            total += dist(x.as_slice(), y.as_slice());
        }
    }
    Ok(total / (a.len() * b.len()) as f64)
}

/// Mean Euclidean Confusion over all `|a|·|b|` cross pairs, i.e. `E‖X − Y‖²`.
pub fn set_euclidean_confusion(a: &DistributionSet, b: &DistributionSet) -> Result<DivergenceValue> {
    mean_over_pairs(a, b, squared_distance).map(DivergenceValue::new)
}

/// Energy distance under squared Euclidean norms:
/// `2·E‖X − Y‖² − E‖X − X′‖² − E‖Y − Y′‖²`.
///
/// Algebraically this equals `2‖mean(a) − mean(b)‖²`, so it vanishes whenever
/// the two sets share a centroid, not only when they coincide.
pub fn energy_distance_sq(a: &DistributionSet, b: &DistributionSet) -> Result<DivergenceValue> {
    let cross = set_euclidean_confusion(a, b)?.get();
    let within_a = set_euclidean_confusion(a, a)?.get();
    let within_b = set_euclidean_confusion(b, b)?.get();
    Ok(DivergenceValue::new(2.0 * cross - within_a - within_b))
}

/// Energy distance with unsquared norms, `2·E‖X − Y‖ − E‖X − X′‖ − E‖Y − Y′‖`.
///
/// Provided for reference only; none of the set-level bounds are claimed for it.
pub fn energy_distance(a: &DistributionSet, b: &DistributionSet) -> Result<DivergenceValue> {
    let norm = |x: &[f64], y: &[f64]| squared_distance(x, y).sqrt();
    let cross = mean_over_pairs(a, b, norm)?;
    let within_a = mean_over_pairs(a, a, norm)?;
    let within_b = mean_over_pairs(b, b, norm)?;
    Ok(DivergenceValue::new(2.0 * cross - within_a - within_b))
}
