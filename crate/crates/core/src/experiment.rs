//! Baseline-versus-PC experiments over several seeds.
//!
//! Every trial trains two arms on the same data, initialization and epoch
//! plans: a baseline with `λ = 0` and a PC arm with the configured λ and
//! confusion metric. Trials run in parallel and are merged in index order,
//! so the result depends only on the configuration.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{generate, load_csv, Dataset, SynthSpec};
use crate::error::{Error, Result};
use crate::loss::ConfusionMetric;
use crate::metrics::{compare, evaluate_split, ClassStats, ComparisonReport, MetricsReport};
use crate::seed;
use crate::tensor::Activation;
use crate::trainer::{default_lambda, train, LrSchedule, TrainConfig, TrainTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Regenerated per trial; the spec's own seed is replaced by a trial seed.
    Synth(SynthSpec),
    /// Fixed across trials.
    Csv { train: PathBuf, eval: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Shared by both arms. `lambda` and `seed` are overridden per arm and trial.
    pub train: TrainConfig,
    /// PC weight; `None` means `default_lambda(N)`.
    pub pc_lambda: Option<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    /// The default confusable synthetic setup (20 classes in 5 clusters).
    pub fn confusable() -> Self {
        Self {
            data: DataSource::Synth(SynthSpec::default()),
            train: TrainConfig {
                lambda: 0.0,
                metric: ConfusionMetric::EuclideanConfusion,
                epochs: 30,
                batch_size: 20,
                lr_initial: 0.02,
                lr_schedule: LrSchedule::LinearDecay,
                seed: 0,
                hidden_sizes: vec![128],
                activation: Activation::Relu,
            },
            pc_lambda: None,
            trials: 10,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if let Some(l) = self.pc_lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidArgument(format!("lambda must be finite and non-negative, got {l}")));
            }
        }
        if let DataSource::Synth(spec) = &self.data {
            spec.validate()?;
        }
        self.train.validate()
    }

    fn load(&self, trial: usize) -> Result<(Dataset, Dataset)> {
        match &self.data {
            DataSource::Synth(spec) => {
                let spec =
                    SynthSpec { seed: seed::derive(self.seed, seed::stream::DATA, trial as u64), ..spec.clone() };
                generate(&spec)
            }
            DataSource::Csv { train, eval } => Ok((load_csv(train)?, load_csv(eval)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ArmOutcome {
    Completed { train_top1: f64, report: MetricsReport, trace: TrainTrace },
    Aborted { epoch: usize, batch: usize },
}

impl ArmOutcome {
    pub fn completed(&self) -> Option<(f64, &MetricsReport, &TrainTrace)> {
        match self {
            Self::Completed { train_top1, report, trace } => Some((*train_top1, report, trace)),
            Self::Aborted { .. } => None,
        }
    }

    pub fn is_aborted(&self) -> bool {
        matches!(self, Self::Aborted { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub train_seed: u64,
    pub baseline: ArmOutcome,
    pub pc: ArmOutcome,
}

impl TrialResult {
    /// The PC arm aborted, or its end-of-epoch confusion rose at every epoch
    /// of the final half of training.
    pub fn shows_divergence(&self) -> bool {
        match &self.pc {
            ArmOutcome::Aborted { .. } => true,
            ArmOutcome::Completed { trace, .. } => strictly_rising_final_half(trace),
        }
    }
}

/// `end_confusion` strictly increases across epochs `⌊E/2⌋ .. E`.
pub fn strictly_rising_final_half(trace: &TrainTrace) -> bool {
    let tail = &trace.epochs[trace.epochs.len() / 2..];
    tail.len() >= 2 && tail.windows(2).all(|w| w[1].end_confusion > w[0].end_confusion)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentStatus {
    Normal,
    /// A Jeffreys-metric PC run diverged or aborted in at least one trial.
    Pathology,
    /// A Jeffreys-metric run that showed no divergence; never reported as normal.
    Unconfirmed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub completed: usize,
    pub aborted: usize,
    pub mean_train_top1: f64,
    pub mean_eval_top1: f64,
    /// Percentage points.
    pub mean_gap: f64,
    pub mean_class_std: f64,
    /// Largest `end_confusion` seen in any epoch of any completed run.
    pub max_end_confusion: f64,
    /// Averages of the completed runs' eval reports.
    pub mean_report: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub lambda: f64,
    pub metric: ConfusionMetric,
    pub baseline: ArmSummary,
    pub pc: ArmSummary,
    /// `pc − baseline` on the mean reports.
    pub comparison: Option<ComparisonReport>,
    /// Mean over paired trials of `gap_baseline − gap_pc`, in percentage points.
    pub gap_shrinkage_mean: f64,
    /// Standard error of that mean (sample std / √n).
    pub gap_shrinkage_se: f64,
    pub paired_trials: usize,
    pub divergent_trials: usize,
    pub status: ExperimentStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub summary: ExperimentSummary,
}

impl ExperimentResult {
    pub fn any_aborted(&self) -> bool {
        self.trials.iter().any(|t| t.baseline.is_aborted() || t.pc.is_aborted())
    }
}

fn run_arm(train_set: &Dataset, eval_set: &Dataset, cfg: &TrainConfig) -> Result<ArmOutcome> {
    match train(train_set, eval_set, cfg) {
        Ok((params, trace)) => {
            let report = evaluate_split(&params, train_set, eval_set)?;
            let train_top1 = trace.last().map_or(0.0, |r| r.train_accuracy);
            Ok(ArmOutcome::Completed { train_top1, report, trace })
        }
        Err(Error::NonFiniteLoss { epoch, batch }) => Ok(ArmOutcome::Aborted { epoch, batch }),
        Err(e) => Err(e),
    }
}

fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialResult> {
    let (train_set, eval_set) = cfg.load(trial)?;
    let train_seed = seed::derive(cfg.seed, seed::stream::TRIAL, trial as u64);
    let lambda = cfg.pc_lambda.unwrap_or_else(|| default_lambda(train_set.num_classes()));
    let baseline_cfg =
        TrainConfig { lambda: 0.0, metric: ConfusionMetric::EuclideanConfusion, seed: train_seed, ..cfg.train.clone() };
    let pc_cfg = TrainConfig { lambda, seed: train_seed, ..cfg.train.clone() };
    Ok(TrialResult {
        trial,
        train_seed,
        baseline: run_arm(&train_set, &eval_set, &baseline_cfg)?,
        pc: run_arm(&train_set, &eval_set, &pc_cfg)?,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn summarize_arm(arms: &[&ArmOutcome]) -> ArmSummary {
    let done: Vec<_> = arms.iter().filter_map(|a| a.completed()).collect();
    let mean_report = done.first().map(|(_, first, _)| {
        let stat = |f: fn(&ClassStats) -> f64| mean(done.iter().map(|(_, r, _)| f(&r.class_stats)));
        let mut r = MetricsReport::from_summary(
            first.num_classes,
            mean(done.iter().map(|(_, r, _)| r.top1)),
            ClassStats {
                best: stat(|s| s.best),
                worst: stat(|s| s.worst),
                mean: stat(|s| s.mean),
                std: stat(|s| s.std),
            },
        );
        r.samples = first.samples;
        r.delta_gap = Some(mean(done.iter().map(|(_, r, _)| r.delta_gap.unwrap_or(f64::NAN))));
        r.fp_rate = mean(done.iter().map(|(_, r, _)| r.fp_rate));
        r.fn_rate = mean(done.iter().map(|(_, r, _)| r.fn_rate));
        r
    });
    ArmSummary {
        completed: done.len(),
        aborted: arms.len() - done.len(),
        mean_train_top1: mean(done.iter().map(|(t, _, _)| *t)),
        mean_eval_top1: mean(done.iter().map(|(_, r, _)| r.top1)),
        mean_gap: mean(done.iter().map(|(_, r, _)| r.delta_gap.unwrap_or(f64::NAN))),
        mean_class_std: mean(done.iter().map(|(_, r, _)| r.class_stats.std)),
        max_end_confusion: done
            .iter()
            .flat_map(|(_, _, t)| t.epochs.iter().map(|e| e.end_confusion))
            .fold(0.0, f64::max),
        mean_report,
    }
}

fn summarize(cfg: &ExperimentConfig, lambda: f64, trials: &[TrialResult]) -> Result<ExperimentSummary> {
    let baseline = summarize_arm(&trials.iter().map(|t| &t.baseline).collect::<Vec<_>>());
    let pc = summarize_arm(&trials.iter().map(|t| &t.pc).collect::<Vec<_>>());
    let comparison = match (&baseline.mean_report, &pc.mean_report) {
        (Some(a), Some(b)) => Some(compare(a, b)?),
        _ => None,
    };
    let shrinkage: Vec<f64> = trials
        .iter()
        .filter_map(|t| {
            let (_, a, _) = t.baseline.completed()?;
            let (_, b, _) = t.pc.completed()?;
            Some(a.delta_gap? - b.delta_gap?)
        })
        .collect();
    let n = shrinkage.len();
    let shrink_mean = mean(shrinkage.iter().copied());
    let shrink_se = if n < 2 {
        f64::NAN
    } else {
        let var = shrinkage.iter().map(|s| (s - shrink_mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    let divergent = trials.iter().filter(|t| t.shows_divergence()).count();
    // Under EC the confusion term is bounded by 2, so a rising trace is
    // ordinary learning rather than divergence.
    let status = match (cfg.train.metric, lambda > 0.0) {
        (ConfusionMetric::Jeffreys, true) if divergent > 0 => ExperimentStatus::Pathology,
        (ConfusionMetric::Jeffreys, true) => ExperimentStatus::Unconfirmed,
        _ => ExperimentStatus::Normal,
    };
    Ok(ExperimentSummary {
        lambda,
        metric: cfg.train.metric,
        baseline,
        pc,
        comparison,
        gap_shrinkage_mean: shrink_mean,
        gap_shrinkage_se: shrink_se,
        paired_trials: n,
        divergent_trials: divergent,
        status,
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let trials = (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, t)).collect::<Result<Vec<_>>>()?;
    let lambda = match (cfg.pc_lambda, &cfg.data) {
        (Some(l), _) => l,
        (None, DataSource::Synth(spec)) => default_lambda(spec.num_classes()),
        (None, DataSource::Csv { .. }) => default_lambda(cfg.load(0)?.0.num_classes()),
    };
    let summary = summarize(cfg, lambda, &trials)?;
    Ok(ExperimentResult { config: cfg.clone(), trials, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::EpochRecord;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::confusable();
        cfg.data = DataSource::Synth(SynthSpec {
            num_clusters: 2,
            subclasses_per_cluster: 2,
            dim: 4,
            samples_per_class: 12,
            ..SynthSpec::default()
        });
        cfg.train.epochs = 4;
        cfg.train.batch_size = 6;
        cfg.train.hidden_sizes = vec![8];
        cfg.trials = 3;
        cfg
    }

    fn trace_of(values: &[f64]) -> TrainTrace {
        let epochs = values
            .iter()
            .enumerate()
            .map(|(epoch, &c)| EpochRecord {
                epoch,
                train_accuracy: 0.0,
                eval_accuracy: 0.0,
                mean_ce: 0.0,
                mean_confusion: 0.0,
                end_confusion: c,
                lr: 0.0,
            })
            .collect();
        TrainTrace { epochs }
    }

    #[test]
    fn rising_tail_detection() {
        assert!(strictly_rising_final_half(&trace_of(&[5.0, 0.0, 1.0, 2.0])));
        assert!(!strictly_rising_final_half(&trace_of(&[0.0, 1.0, 2.0, 2.0])));
        assert!(!strictly_rising_final_half(&trace_of(&[1.0])));
    }

    #[test]
    fn deterministic_and_in_order() {
        let cfg = small();
        let a = run(&cfg).unwrap();
        assert_eq!(a, run(&cfg).unwrap());
        assert_eq!(a.trials.iter().map(|t| t.trial).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(a.summary.lambda, default_lambda(4));
        assert_eq!(a.summary.paired_trials, 3);
        assert_eq!(a.summary.status, ExperimentStatus::Normal);
    }

    #[test]
    fn zero_lambda_arms_coincide() {
        let cfg = ExperimentConfig { pc_lambda: Some(0.0), ..small() };
        let r = run(&cfg).unwrap();
        for t in &r.trials {
            assert_eq!(t.baseline, t.pc);
        }
        let c = r.summary.comparison.unwrap();
        assert_eq!((c.top1, c.delta_gap, c.class_std), (0.0, Some(0.0), 0.0));
        assert_eq!(r.summary.gap_shrinkage_mean, 0.0);
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(run(&ExperimentConfig { trials: 0, ..small() }).is_err());
    }
}
