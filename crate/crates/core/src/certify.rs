//! Randomized certification of the divergence inequalities:
//!
//! * pointwise: `D_EC ≤ 4·D_TV² ≤ D_J` on uniformly sampled simplex pairs;
//! * set-level: `½·D_EN² ≤ D_EC(A, B)` and
//!   `D_EC(A, A) + D_EC(B, B) ≤ 2·D_EC(A, B)` on random finite sets.
//!
//! All four are theorems, so any reported violation indicates a bug.
//! Comparisons allow a relative rounding slack of [`ROUNDING_SLACK`].

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointset::{energy_distance_sq, set_euclidean_confusion, DistributionSet};
use crate::seed;
use crate::simplex::{euclidean_confusion, jeffreys_divergence, total_variation, ProbVector};

pub const ROUNDING_SLACK: f64 = 1e-12;
pub const PAIR_DIMS: [usize; 4] = [2, 5, 50, 200];
pub const SET_DIMS: [usize; 3] = [2, 5, 50];
pub const MAX_SET_SIZE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyConfig {
    pub seed: u64,
    /// Random simplex pairs per dimension.
    pub pair_trials: usize,
    /// Random set pairs per dimension.
    pub set_trials: usize,
}

impl CertifyConfig {
    /// `trials` simplex pairs and `max(1, trials/10)` set pairs per dimension.
    pub fn from_trials(seed: u64, trials: usize) -> Result<Self> {
        if trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        Ok(Self { seed, pair_trials: trials, set_trials: (trials / 10).max(1) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub dim: usize,
    pub trials: usize,
    pub violations: usize,
    /// Largest observed `lhs / rhs`; ≤ 1 when the inequality holds.
    pub tightest_ratio: f64,
    /// First violating input, printed to full precision.
    pub counterexample: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub config: CertifyConfig,
    pub checks: Vec<CheckResult>,
}

impl CertifyReport {
    pub fn total_violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }

    pub fn passed(&self) -> bool {
        self.total_violations() == 0
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<44} N={:<4} trials={:<7} violations={:<3} tightest_ratio={:.17}",
                c.name, c.dim, c.trials, c.violations, c.tightest_ratio
            );
            if let Some(ce) = &c.counterexample {
                let _ = writeln!(out, "  counterexample: {ce}");
            }
        }
        let _ = writeln!(out, "total violations: {}", self.total_violations());
        out
    }
}

struct Tally {
    result: CheckResult,
}

impl Tally {
    fn new(name: &str, dim: usize) -> Self {
        Self {
            result: CheckResult {
                name: name.to_string(),
                dim,
                trials: 0,
                violations: 0,
                tightest_ratio: 0.0,
                counterexample: None,
            },
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64, describe: impl FnOnce() -> String) {
        let r = &mut self.result;
        r.trials += 1;
        if rhs > 0.0 {
            r.tightest_ratio = r.tightest_ratio.max(lhs / rhs);
        }
        let holds = lhs <= rhs + ROUNDING_SLACK * rhs.abs();
        if !holds {
            r.violations += 1;
            if r.counterexample.is_none() {
                r.counterexample = Some(format!("lhs={lhs:?} rhs={rhs:?} {}", describe()));
            }
        }
    }
}

fn random_set(rng: &mut impl Rng, class_id: usize, dim: usize) -> Result<DistributionSet> {
    let size = rng.random_range(1..=MAX_SET_SIZE);
    let members = (0..size).map(|_| ProbVector::sample_uniform(dim, rng)).collect::<Result<Vec<_>>>()?;
    DistributionSet::new(class_id, members)
}

fn describe_sets(a: &DistributionSet, b: &DistributionSet) -> String {
    let dump =
        |s: &DistributionSet| s.members().iter().map(|m| format!("{:?}", m.as_slice())).collect::<Vec<_>>().join(";");
    format!("A=[{}] B=[{}]", dump(a), dump(b))
}

pub fn run(cfg: &CertifyConfig) -> Result<CertifyReport> {
    if cfg.pair_trials == 0 || cfg.set_trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let mut checks = Vec::new();
    for (k, &dim) in PAIR_DIMS.iter().enumerate() {
        let mut rng = seed::child_rng(cfg.seed, seed::stream::CERTIFY, k as u64);
        let mut ec_tv = Tally::new("ec <= 4*tv^2", dim);
        let mut tv_j = Tally::new("4*tv^2 <= jeffreys", dim);
        let mut ec_j = Tally::new("ec <= jeffreys", dim);
        for _ in 0..cfg.pair_trials {
            let p = ProbVector::sample_uniform(dim, &mut rng)?;
            let q = ProbVector::sample_uniform(dim, &mut rng)?;
            let ec = euclidean_confusion(&p, &q)?.get();
            let tv = total_variation(&p, &q)?.get();
            let j = jeffreys_divergence(&p, &q)?.get();
            let describe = || format!("p={:?} q={:?}", p.as_slice(), q.as_slice());
            ec_tv.record(ec, 4.0 * tv * tv, describe);
            tv_j.record(4.0 * tv * tv, j, describe);
            ec_j.record(ec, j, describe);
        }
        checks.extend([ec_tv.result, tv_j.result, ec_j.result]);
    }
    for (k, &dim) in SET_DIMS.iter().enumerate() {
        let mut rng = seed::child_rng(cfg.seed, seed::stream::CERTIFY, 100 + k as u64);
        let mut energy_bound = Tally::new("0.5*energy^2 <= set_ec(a,b)", dim);
        let mut within_bound = Tally::new("set_ec(a,a)+set_ec(b,b) <= 2*set_ec(a,b)", dim);
        for _ in 0..cfg.set_trials {
            let a = random_set(&mut rng, 0, dim)?;
            let b = random_set(&mut rng, 1, dim)?;
            let cross = set_euclidean_confusion(&a, &b)?.get();
            let within = set_euclidean_confusion(&a, &a)?.get() + set_euclidean_confusion(&b, &b)?.get();
            let energy = energy_distance_sq(&a, &b)?.get();
            energy_bound.record(0.5 * energy, cross, || describe_sets(&a, &b));
            within_bound.record(within, 2.0 * cross, || describe_sets(&a, &b));
        }
        checks.extend([energy_bound.result, within_bound.result]);
    }
    Ok(CertifyReport { config: cfg.clone(), checks })
}
