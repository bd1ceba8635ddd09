//! Probability vectors on the finite simplex and pointwise divergences
//! between them.
//!
//! | Function | Definition |
//! |----------|------------|
//! | [`kl_divergence`] | Σ p log(p/q) |
//! | [`jeffreys_divergence`] | KL(p‖q) + KL(q‖p) = Σ (p − q) log(p/q) |
//! | [`total_variation`] | ½ Σ \|p − q\| |
//! | [`euclidean_confusion`] | Σ (p − q)² |
//!
//! On any finite space these satisfy
//! `euclidean_confusion ≤ 4·total_variation² ≤ jeffreys_divergence`.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_dim, Error, Result};

/// Tolerance on Σp = 1 at construction.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// A point on the (N−1)-simplex, N ≥ 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidProbVector(format!("need at least 2 entries, got {}", probs.len())));
        }
        let mut sum = 0.0;
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite { index, value });
            }
            if value < 0.0 {
                return Err(Error::InvalidProbVector(format!("negative entry {value} at index {index}")));
            }
            sum += value;
        }
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidProbVector(format!("entries sum to {sum}")));
        }
        Ok(Self(probs))
    }

    /// Normalize non-negative weights onto the simplex.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::InvalidProbVector(format!("weights sum to {total}")));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub(crate) fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        debug_assert!(probs.len() >= 2);
        Self(probs)
    }

    /// Uniform draw from the simplex (normalized unit exponentials, i.e. Dirichlet(1,…,1)).
    pub fn sample_uniform<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!("simplex dimension {dim} < 2")));
        }
        let mut draws: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draws.iter().sum();
        for d in &mut draws {
            *d /= total;
        }
        Ok(Self(draws))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A non-negative divergence value. Only the KL family may be `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DivergenceValue(f64);

impl DivergenceValue {
    pub const INFINITE: Self = Self(f64::INFINITY);

    pub(crate) fn new(value: f64) -> Self {
        debug_assert!(!value.is_nan());
        Self(value.max(0.0))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl From<DivergenceValue> for f64 {
    fn from(d: DivergenceValue) -> f64 {
        d.0
    }
}

fn check_pair(p: &ProbVector, q: &ProbVector) -> Result<()> {
    ensure_same_dim(p.dim(), q.dim())
}

/// KL(p‖q) in nats. `0·log(0/q) = 0`; `p > 0 = q` gives [`DivergenceValue::INFINITE`].
pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<DivergenceValue> {
    check_pair(p, q)?;
    let mut total = 0.0;
    for (&pu, &qu) in p.0.iter().zip(&q.0) {
        if pu == 0.0 {
            continue;
        }
        if qu == 0.0 {
            return Ok(DivergenceValue::INFINITE);
        }
        total += pu * (pu / qu).ln();
    }
    Ok(DivergenceValue::new(total))
}

/// Jeffreys (symmetric KL) divergence.
///
/// Evaluated termwise as `(p − q)·(ln p − ln q)`, each term non-negative, so
/// swapping the arguments yields the bit-identical value.
pub fn jeffreys_divergence(p: &ProbVector, q: &ProbVector) -> Result<DivergenceValue> {
    check_pair(p, q)?;
    Ok(DivergenceValue::new(jeffreys_raw(&p.0, &q.0)))
}

pub(crate) fn jeffreys_raw(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&pu, &qu) in p.iter().zip(q) {
        if pu == qu {
            continue;
        }
        if pu == 0.0 || qu == 0.0 {
            return f64::INFINITY;
        }
        total += (pu - qu) * (pu.ln() - qu.ln());
    }
    total
}

/// Total variation distance, ½‖p − q‖₁, in [0, 1].
pub fn total_variation(p: &ProbVector, q: &ProbVector) -> Result<DivergenceValue> {
    check_pair(p, q)?;
    let l1: f64 = p.0.iter().zip(&q.0).map(|(a, b)| (a - b).abs()).sum();
    Ok(DivergenceValue::new(0.5 * l1))
}

/// Euclidean Confusion, ‖p − q‖₂², in [0, 2].
pub fn euclidean_confusion(p: &ProbVector, q: &ProbVector) -> Result<DivergenceValue> {
    check_pair(p, q)?;
    Ok(DivergenceValue::new(squared_distance(&p.0, &q.0)))
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Closed-form lower bound on the Jeffreys divergence between two confident,
/// correct two-class predictions `[1−δ₁, δ₁]` and `[δ₂, 1−δ₂]`:
/// `(1 − δ₁ − δ₂)·(2·log(1 − δ₁ − δ₂) − log(δ₁·δ₂))`.
///
/// Grows without bound as `(δ₁, δ₂) → (0⁺, 0⁺)`.
pub fn jeffreys_pathology_bound(delta1: f64, delta2: f64) -> Result<f64> {
    for d in [delta1, delta2] {
        if !(d > 0.0 && d < 0.5) {
            return Err(Error::InvalidArgument(format!("delta {d} outside (0, 1/2)")));
        }
    }
    let margin = 1.0 - delta1 - delta2;
    Ok(margin * (2.0 * margin.ln() - (delta1 * delta2).ln()))
}
