//! The pairwise confusion loss:
//!
//! ```text
//! L_pair = CE(p1, y1) + CE(p2, y2) + λ·γ(y1, y2)·D(p1, p2)
//! ```
//!
//! where `γ` is 1 for differently-labeled pairs and `D` is the Euclidean
//! Confusion (or, for demonstrating why it is not used, the Jeffreys
//! divergence).

use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_dim, Error, Result};
use crate::simplex::{jeffreys_raw, squared_distance, ProbVector};
use crate::tensor::{cross_entropy, cross_entropy_logit_grad, softmax_backward};

/// Probability clamp applied before logs in the Jeffreys confusion term.
pub const JEFFREYS_PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfusionMetric {
    /// ‖p1 − p2‖², bounded in [0, 2].
    #[serde(rename = "ec")]
    EuclideanConfusion,
    /// Symmetric KL; unbounded as predictions sharpen.
    Jeffreys,
}

impl std::str::FromStr for ConfusionMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ec" | "euclidean" | "euclidean_confusion" => Ok(Self::EuclideanConfusion),
            "jeffreys" => Ok(Self::Jeffreys),
            other => Err(Error::InvalidArgument(format!("unknown confusion metric `{other}`"))),
        }
    }
}

impl std::fmt::Display for ConfusionMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::EuclideanConfusion => "ec",
            Self::Jeffreys => "jeffreys",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairLossConfig {
    lambda: f64,
    metric: ConfusionMetric,
}

impl PairLossConfig {
    pub fn new(lambda: f64, metric: ConfusionMetric) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self { lambda, metric })
    }

    pub fn euclidean(lambda: f64) -> Result<Self> {
        Self::new(lambda, ConfusionMetric::EuclideanConfusion)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn metric(&self) -> ConfusionMetric {
        self.metric
    }
}

/// 1 when the labels differ, 0 otherwise.
pub fn gamma(label1: usize, label2: usize) -> u8 {
    u8::from(label1 != label2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairLossParts {
    pub ce1: f64,
    pub ce2: f64,
    /// Unweighted confusion `D(p1, p2)`, reported regardless of γ and λ.
    pub confusion: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairLoss {
    pub total: f64,
    pub parts: PairLossParts,
}

pub(crate) fn confusion_value(metric: ConfusionMetric, p1: &[f64], p2: &[f64]) -> f64 {
    match metric {
        ConfusionMetric::EuclideanConfusion => squared_distance(p1, p2),
        ConfusionMetric::Jeffreys => {
            let c1: Vec<f64> = p1.iter().map(|v| v.max(JEFFREYS_PROB_FLOOR)).collect();
            let c2: Vec<f64> = p2.iter().map(|v| v.max(JEFFREYS_PROB_FLOOR)).collect();
            jeffreys_raw(&c1, &c2)
        }
    }
}

/// ∂D/∂p1; by symmetry ∂D/∂p2 is `confusion_grad(metric, p2, p1)`.
pub(crate) fn confusion_grad(metric: ConfusionMetric, p1: &[f64], p2: &[f64]) -> Vec<f64> {
    match metric {
        ConfusionMetric::EuclideanConfusion => p1.iter().zip(p2).map(|(a, b)| 2.0 * (a - b)).collect(),
        ConfusionMetric::Jeffreys => p1
            .iter()
            .zip(p2)
            .map(|(&a, &b)| {
                if a < JEFFREYS_PROB_FLOOR {
                    return 0.0;
                }
                let b = b.max(JEFFREYS_PROB_FLOOR);
                (a.ln() - b.ln()) + 1.0 - b / a
            })
            .collect(),
    }
}

fn check_inputs(p1: &ProbVector, y1: usize, p2: &ProbVector, y2: usize) -> Result<()> {
    ensure_same_dim(p1.dim(), p2.dim())?;
    for y in [y1, y2] {
        if y >= p1.dim() {
            return Err(Error::LabelOutOfRange { label: y, num_classes: p1.dim() });
        }
    }
    Ok(())
}

pub fn pair_loss(p1: &ProbVector, y1: usize, p2: &ProbVector, y2: usize, cfg: &PairLossConfig) -> Result<PairLoss> {
    check_inputs(p1, y1, p2, y2)?;
    let ce1 = cross_entropy(p1, y1)?;
    let ce2 = cross_entropy(p2, y2)?;
    let confusion = confusion_value(cfg.metric, p1.as_slice(), p2.as_slice());
    let weight = cfg.lambda * f64::from(gamma(y1, y2));
    let total = if weight == 0.0 { ce1 + ce2 } else { ce1 + ce2 + weight * confusion };
    Ok(PairLoss { total, parts: PairLossParts { ce1, ce2, confusion } })
}

/// `(∂L/∂p1, ∂L/∂p2)` treating each probability entry as a free variable.
pub fn pair_loss_grad(
    p1: &ProbVector,
    y1: usize,
    p2: &ProbVector,
    y2: usize,
    cfg: &PairLossConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_inputs(p1, y1, p2, y2)?;
    let ce_grad = |p: &ProbVector, y: usize| {
        let mut g = vec![0.0; p.dim()];
        let py = p.as_slice()[y];
        if py >= crate::tensor::CE_PROB_FLOOR {
            g[y] = -1.0 / py;
        }
        g
    };
    let mut g1 = ce_grad(p1, y1);
    let mut g2 = ce_grad(p2, y2);
    let weight = cfg.lambda * f64::from(gamma(y1, y2));
    if weight != 0.0 {
        let c1 = confusion_grad(cfg.metric, p1.as_slice(), p2.as_slice());
        let c2 = confusion_grad(cfg.metric, p2.as_slice(), p1.as_slice());
        g1.iter_mut().zip(&c1).for_each(|(g, c)| *g += weight * c);
        g2.iter_mut().zip(&c2).for_each(|(g, c)| *g += weight * c);
    }
    Ok((g1, g2))
}

/// Logit-space gradient of the weighted confusion term `w·D(p1, p2)` alone.
pub fn confusion_logit_grads(
    p1: &ProbVector,
    p2: &ProbVector,
    metric: ConfusionMetric,
    weight: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    ensure_same_dim(p1.dim(), p2.dim())?;
    let scaled = |a: &ProbVector, b: &ProbVector| -> Vec<f64> {
        confusion_grad(metric, a.as_slice(), b.as_slice()).into_iter().map(|c| weight * c).collect()
    };
    Ok((softmax_backward(p1, &scaled(p1, p2))?, softmax_backward(p2, &scaled(p2, p1))?))
}

/// Gradients of the pair loss with respect to each branch's logits.
///
/// Cross-entropy uses the fused `p − e_y` form; the confusion term is chained
/// through the softmax Jacobian and skipped entirely when `λ·γ = 0`, so a
/// `λ = 0` run performs exactly the floating-point work of plain
/// cross-entropy training.
pub fn pair_logit_grads(
    p1: &ProbVector,
    y1: usize,
    p2: &ProbVector,
    y2: usize,
    cfg: &PairLossConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_inputs(p1, y1, p2, y2)?;
    let mut g1 = cross_entropy_logit_grad(p1, y1)?;
    let mut g2 = cross_entropy_logit_grad(p2, y2)?;
    let weight = cfg.lambda * f64::from(gamma(y1, y2));
    if weight != 0.0 {
        let (z1, z2) = confusion_logit_grads(p1, p2, cfg.metric, weight)?;
        g1.iter_mut().zip(&z1).for_each(|(g, c)| *g += c);
        g2.iter_mut().zip(&z2).for_each(|(g, c)| *g += c);
    }
    Ok((g1, g2))
}
