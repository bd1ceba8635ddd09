//! Analytic-vs-numeric gradient checks over random networks and loss heads.
//!
//! Each case draws a random network, a pair of inputs and one of three loss
//! heads, then compares every entry of the backpropagated parameter gradient
//! against a central finite difference of the scalar loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{confusion_logit_grads, ConfusionMetric};
use crate::seed;
use crate::simplex::squared_distance;
use crate::tensor::{
    backward, cross_entropy, cross_entropy_logit_grad, forward, softmax, Activation, GradientBuffer, NetworkParams,
};

pub const FD_STEP: f64 = 1e-5;
pub const ABS_TOL: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossHead {
    CrossEntropy,
    Confusion,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: usize,
    pub case_seed: u64,
    pub head: LossHead,
    pub params: usize,
    pub max_abs_error: f64,
    /// `|analytic − numeric| / max(|analytic|, |numeric|)` at the worst entry.
    pub worst_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub cases: Vec<CaseResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }

    /// The case with the largest relative error.
    pub fn worst(&self) -> Option<&CaseResult> {
        self.cases.iter().max_by(|a, b| a.worst_rel_error.total_cmp(&b.worst_rel_error))
    }
}

struct Case {
    net: NetworkParams,
    x1: Vec<f64>,
    x2: Vec<f64>,
    y1: usize,
    y2: usize,
    head: LossHead,
    lambda: f64,
}

impl Case {
    fn draw(rng: &mut impl Rng, head: LossHead, activation: Activation) -> Result<Self> {
        let input = rng.random_range(2..=6);
        let classes = rng.random_range(2..=5);
        let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(3..=8)).collect();
        let mut net = NetworkParams::init(input, &hidden, classes, activation, rng)?;
        let flat: Vec<f64> = net.to_flat().into_iter().map(|v| v + rng.random_range(-0.2..0.2)).collect();
        net.set_flat(&flat)?;
        let mut draw_x = || (0..input).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
        let (x1, x2) = (draw_x(), draw_x());
        let y1 = rng.random_range(0..classes);
        // confusion terms need differing labels to be active
        let y2 = (y1 + rng.random_range(1..classes)) % classes;
        Ok(Self { net, x1, x2, y1, y2, head, lambda: rng.random_range(0.5..20.0) })
    }

    fn loss(&self, net: &NetworkParams) -> Result<f64> {
        let p1 = softmax(&forward(net, &self.x1)?.0)?;
        let p2 = softmax(&forward(net, &self.x2)?.0)?;
        let ce = || -> Result<f64> { Ok(cross_entropy(&p1, self.y1)? + cross_entropy(&p2, self.y2)?) };
        let conf = || self.lambda * squared_distance(p1.as_slice(), p2.as_slice());
        Ok(match self.head {
            LossHead::CrossEntropy => ce()?,
            LossHead::Confusion => conf(),
            LossHead::Combined => ce()? + conf(),
        })
    }

    fn analytic(&self) -> Result<Vec<f64>> {
        let (z1, c1) = forward(&self.net, &self.x1)?;
        let (z2, c2) = forward(&self.net, &self.x2)?;
        let (p1, p2) = (softmax(&z1)?, softmax(&z2)?);
        let mut g1 = vec![0.0; p1.dim()];
        let mut g2 = vec![0.0; p2.dim()];
        if self.head != LossHead::Confusion {
            g1 = cross_entropy_logit_grad(&p1, self.y1)?;
            g2 = cross_entropy_logit_grad(&p2, self.y2)?;
        }
        if self.head != LossHead::CrossEntropy {
            let (h1, h2) = confusion_logit_grads(&p1, &p2, ConfusionMetric::EuclideanConfusion, self.lambda)?;
            g1.iter_mut().zip(&h1).for_each(|(a, b)| *a += b);
            g2.iter_mut().zip(&h2).for_each(|(a, b)| *a += b);
        }
        let mut grads = GradientBuffer::zeros_like(&self.net);
        backward(&self.net, &c1, &g1, &mut grads)?;
        backward(&self.net, &c2, &g2, &mut grads)?;
        Ok(grads.to_flat())
    }
}

fn check_case(case_index: usize, case_seed: u64) -> Result<CaseResult> {
    let mut rng = seed::rng(case_seed);
    let head = [LossHead::CrossEntropy, LossHead::Confusion, LossHead::Combined][case_index % 3];
    let activation = if (case_index / 3).is_multiple_of(2) { Activation::Tanh } else { Activation::Relu };
    let case = Case::draw(&mut rng, head, activation)?;
    let analytic = case.analytic()?;
    let base = case.net.to_flat();
    let mut probe = case.net.clone();
    let mut max_abs: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    let mut passed = true;
    for i in 0..base.len() {
        let mut shifted = base.clone();
        shifted[i] = base[i] + FD_STEP;
        probe.set_flat(&shifted)?;
        let up = case.loss(&probe)?;
        shifted[i] = base[i] - FD_STEP;
        probe.set_flat(&shifted)?;
        let down = case.loss(&probe)?;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let err = (numeric - analytic[i]).abs();
        let scale = numeric.abs().max(analytic[i].abs());
        max_abs = max_abs.max(err);
        if scale > 0.0 {
            worst_rel = worst_rel.max(err / scale);
        }
        if err > ABS_TOL.max(REL_TOL * scale) {
            passed = false;
        }
    }
    Ok(CaseResult {
        case: case_index,
        case_seed,
        head,
        params: base.len(),
        max_abs_error: max_abs,
        worst_rel_error: worst_rel,
        passed,
    })
}

/// Run `cases` checks; heads rotate CE → confusion → combined.
pub fn run(seed_value: u64, cases: usize) -> Result<GradcheckReport> {
    if cases == 0 {
        return Err(Error::InvalidArgument("cases must be at least 1".into()));
    }
    let cases = (0..cases)
        .map(|i| check_case(i, seed::derive(seed_value, seed::stream::GRADCHECK, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradcheckReport { seed: seed_value, cases })
}
