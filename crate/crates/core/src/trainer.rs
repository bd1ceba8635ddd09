//! SGD training with the pairwise confusion loss.
//!
//! Each step takes one [`PairBatch`], runs both members of every pair
//! through the same parameters (the two Siamese branches share weights),
//! sums the pair losses, averages gradients over the pair count and applies
//! a plain SGD update. Evaluation uses a single branch.

use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{ensure_same_dim, Error, Result};
use crate::loss::{pair_logit_grads, pair_loss, ConfusionMetric, PairLossConfig, JEFFREYS_PROB_FLOOR};
use crate::metrics::accuracy;
use crate::sampler::{next_pair_batch, plan_epoch, EpochPlan, PairBatch};
use crate::seed;
use crate::simplex::squared_distance;
use crate::tensor::{backward, forward, softmax, Activation, GradientBuffer, NetworkParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// `lr₀·(1 − step/total)`.
    LinearDecay,
    /// `lr₀·ratio^⌊step/step_every⌋`.
    StepDecay { step_every: usize, ratio: f64 },
}

impl std::fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LrSchedule::LinearDecay => f.write_str("linear"),
            LrSchedule::StepDecay { step_every, ratio } => write!(f, "step:{step_every}:{ratio}"),
        }
    }
}

impl std::str::FromStr for LrSchedule {
    type Err = Error;
    /// `linear` or `step:<every>:<ratio>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad lr schedule `{s}`"));
        if s == "linear" {
            return Ok(Self::LinearDecay);
        }
        let rest = s.strip_prefix("step:").ok_or_else(bad)?;
        let (every, ratio) = rest.split_once(':').ok_or_else(bad)?;
        Ok(Self::StepDecay {
            step_every: every.trim().parse().map_err(|_| bad())?,
            ratio: ratio.trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub metric: ConfusionMetric,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            metric: ConfusionMetric::EuclideanConfusion,
            epochs: 50,
            batch_size: 32,
            lr_initial: 0.1,
            lr_schedule: LrSchedule::LinearDecay,
            seed: 0,
            hidden_sizes: vec![64],
            activation: Activation::Relu,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        self.loss_config()?;
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr_initial >= 0.0 && self.lr_initial.is_finite()) {
            return bad(format!("lr must be finite and >= 0, got {}", self.lr_initial));
        }
        if let LrSchedule::StepDecay { step_every, ratio } = self.lr_schedule {
            if step_every == 0 || !(ratio > 0.0 && ratio <= 1.0) {
                return bad(format!("step decay needs step_every > 0 and ratio in (0, 1], got {step_every}, {ratio}"));
            }
        }
        if self.hidden_sizes.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        Ok(())
    }

    pub fn loss_config(&self) -> Result<PairLossConfig> {
        PairLossConfig::new(self.lambda, self.metric)
    }

    /// Seeded initial parameters.
    pub fn init_params(&self, input_dim: usize, num_classes: usize) -> Result<NetworkParams> {
        NetworkParams::init(
            input_dim,
            &self.hidden_sizes,
            num_classes,
            self.activation,
            &mut seed::child_rng(self.seed, seed::stream::INIT, 0),
        )
    }

    /// The pairing plan for `epoch`.
    pub fn epoch_plan(&self, epoch: usize, dataset_size: usize) -> Result<EpochPlan> {
        plan_epoch(dataset_size, self.batch_size, seed::derive(self.seed, seed::stream::EPOCH, epoch as u64))
    }
}

/// Learning rate for `global_step` of `total_steps`.
pub fn lr_at(cfg: &TrainConfig, global_step: usize, total_steps: usize) -> Result<f64> {
    if global_step > total_steps {
        return Err(Error::InvalidArgument(format!("step {global_step} beyond total {total_steps}")));
    }
    Ok(match cfg.lr_schedule {
        LrSchedule::LinearDecay => {
            if total_steps == 0 {
                cfg.lr_initial
            } else {
                (cfg.lr_initial * (1.0 - global_step as f64 / total_steps as f64)).max(0.0)
            }
        }
        LrSchedule::StepDecay { step_every, ratio } => {
            cfg.lr_initial * ratio.powi((global_step / step_every.max(1)) as i32)
        }
    })
}

/// `0.1·N`: the middle of the empirically good `[0.05N, 0.15N]` range.
pub fn default_lambda(num_classes: usize) -> f64 {
    0.1 * num_classes as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_accuracy: f64,
    pub eval_accuracy: f64,
    /// Mean per-sample cross-entropy over both branches.
    pub mean_ce: f64,
    /// Mean unweighted confusion over the epoch's sampled γ = 1 pairs.
    pub mean_confusion: f64,
    /// Mean confusion over every differently-labelled pair of training
    /// samples, measured with the end-of-epoch parameters.
    pub end_confusion: f64,
    /// Learning rate at the epoch's first step.
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_accuracy,eval_accuracy,mean_ce,mean_confusion,end_confusion,lr\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch, r.train_accuracy, r.eval_accuracy, r.mean_ce, r.mean_confusion, r.end_confusion, r.lr
            ));
        }
        out
    }
}

/// Loss totals for one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    pub pairs: usize,
    pub loss: f64,
    pub ce_sum: f64,
    pub confusion_sum: f64,
    pub active_pairs: usize,
}

/// Accumulate the summed (not averaged) gradient of every pair loss in
/// `batch` into `grads`. Both branches write into the same buffer.
pub fn accumulate_batch_gradient(
    params: &NetworkParams,
    batch: &PairBatch<'_>,
    loss_cfg: &PairLossConfig,
    grads: &mut GradientBuffer,
) -> Result<BatchStats> {
    let mut stats = BatchStats { pairs: batch.len(), ..BatchStats::default() };
    for pair in batch.pairs() {
        let (z1, cache1) = forward(params, &pair.sample_a.features)?;
        let (z2, cache2) = forward(params, &pair.sample_b.features)?;
        let p1 = softmax(&z1)?;
        let p2 = softmax(&z2)?;
        let (ya, yb) = (pair.sample_a.label, pair.sample_b.label);
        let loss = pair_loss(&p1, ya, &p2, yb, loss_cfg)?;
        stats.loss += loss.total;
        stats.ce_sum += loss.parts.ce1 + loss.parts.ce2;
        if pair.gamma == 1 {
            stats.active_pairs += 1;
            stats.confusion_sum += loss.parts.confusion;
        }
        let (g1, g2) = pair_logit_grads(&p1, ya, &p2, yb, loss_cfg)?;
        backward(params, &cache1, &g1, grads)?;
        backward(params, &cache2, &g2, grads)?;
    }
    Ok(stats)
}

/// Mean `D(p_i, p_j)` over ordered pairs of samples with different labels;
/// 0 when every sample shares one label.
pub fn dataset_confusion(params: &NetworkParams, dataset: &Dataset, metric: ConfusionMetric) -> Result<f64> {
    let probs = dataset
        .samples()
        .iter()
        .map(|s| Ok(softmax(&forward(params, &s.features)?.0)?.into_inner()))
        .collect::<Result<Vec<_>>>()?;
    // Jeffreys is Σ (p − q)(ln p − ln q); taking logs once per sample keeps the
    // quadratic loop multiply-only.
    let logs: Vec<Vec<f64>> = match metric {
        ConfusionMetric::EuclideanConfusion => Vec::new(),
        ConfusionMetric::Jeffreys => {
            probs.iter().map(|p| p.iter().map(|v| v.max(JEFFREYS_PROB_FLOOR).ln()).collect()).collect()
        }
    };
    let samples = dataset.samples();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            if samples[i].label == samples[j].label {
                continue;
            }
            sum += match metric {
                ConfusionMetric::EuclideanConfusion => squared_distance(&probs[i], &probs[j]),
                ConfusionMetric::Jeffreys => probs[i]
                    .iter()
                    .zip(&probs[j])
                    .zip(logs[i].iter().zip(&logs[j]))
                    .map(|((p, q), (lp, lq))| (p.max(JEFFREYS_PROB_FLOOR) - q.max(JEFFREYS_PROB_FLOOR)) * (lp - lq))
                    .sum(),
            };
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Train a fresh network initialized from `cfg.seed`.
pub fn train(
    dataset_train: &Dataset,
    dataset_eval: &Dataset,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, TrainTrace)> {
    cfg.validate()?;
    let params = cfg.init_params(dataset_train.dim(), dataset_train.num_classes())?;
    train_from(params, dataset_train, dataset_eval, cfg)
}

/// Train starting from `params`.
pub fn train_from(
    mut params: NetworkParams,
    dataset_train: &Dataset,
    dataset_eval: &Dataset,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, TrainTrace)> {
    cfg.validate()?;
    ensure_same_dim(dataset_train.dim(), dataset_eval.dim())?;
    ensure_same_dim(dataset_train.num_classes(), dataset_eval.num_classes())?;
    ensure_same_dim(params.input_dim(), dataset_train.dim())?;
    ensure_same_dim(params.num_classes(), dataset_train.num_classes())?;
    if cfg.batch_size > dataset_train.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {} exceeds training set size {}",
            cfg.batch_size,
            dataset_train.len()
        )));
    }
    let loss_cfg = cfg.loss_config()?;
    let num_batches = dataset_train.len() / cfg.batch_size;
    let total_steps = cfg.epochs * num_batches;
    let mut grads = GradientBuffer::zeros_like(&params);
    let mut trace = TrainTrace::default();
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let plan = cfg.epoch_plan(epoch, dataset_train.len())?;
        let epoch_lr = lr_at(cfg, step, total_steps)?;
        let mut ce_sum = 0.0;
        let mut confusion_sum = 0.0;
        let mut pairs = 0;
        let mut active = 0;
        for batch_index in 0..num_batches {
            let abort = || Error::NonFiniteLoss { epoch, batch: batch_index };
            let batch = next_pair_batch(&plan, dataset_train, batch_index)?;
            grads.zero();
            let stats = accumulate_batch_gradient(&params, &batch, &loss_cfg, &mut grads).map_err(|e| match e {
                Error::NonFinite { .. } => abort(),
                other => other,
            })?;
            if !stats.loss.is_finite() || !grads.all_finite() {
                return Err(abort());
            }
            grads.scale(1.0 / stats.pairs as f64);
            params.sgd_step(&grads, lr_at(cfg, step, total_steps)?)?;
            step += 1;
            ce_sum += stats.ce_sum;
            confusion_sum += stats.confusion_sum;
            pairs += stats.pairs;
            active += stats.active_pairs;
        }
        let record = EpochRecord {
            epoch,
            train_accuracy: accuracy(&params, dataset_train)?,
            eval_accuracy: accuracy(&params, dataset_eval)?,
            mean_ce: ce_sum / (2 * pairs) as f64,
            mean_confusion: if active == 0 { 0.0 } else { confusion_sum / active as f64 },
            end_confusion: dataset_confusion(&params, dataset_train, cfg.metric)?,
            lr: epoch_lr,
        };
        trace.epochs.push(record);
    }
    Ok((params, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::LabeledSample;
    use crate::loss::pair_loss_grad;
    use crate::tensor::softmax_backward;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn toy_separable(seed_value: u64, per_class: usize) -> Dataset {
        let mut rng = seed::rng(seed_value);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut samples = Vec::new();
        for label in 0..2 {
            let cx = if label == 0 { -2.0 } else { 2.0 };
            for _ in 0..per_class {
                samples
                    .push(LabeledSample { features: vec![cx + noise.sample(&mut rng), noise.sample(&mut rng)], label });
            }
        }
        Dataset::new(samples, 2).unwrap()
    }

    #[test]
    fn lr_schedule_examples() {
        let cfg = TrainConfig { lr_initial: 0.1, ..TrainConfig::default() };
        assert_eq!(lr_at(&cfg, 0, 100).unwrap(), 0.1);
        assert_eq!(lr_at(&cfg, 100, 100).unwrap(), 0.0);
        assert!((lr_at(&cfg, 50, 100).unwrap() - 0.05).abs() < 1e-15);
        assert!(lr_at(&cfg, 101, 100).is_err());
        let step = TrainConfig {
            lr_initial: 0.01,
            lr_schedule: LrSchedule::StepDecay { step_every: 30000, ratio: 0.96 },
            ..TrainConfig::default()
        };
        assert!((lr_at(&step, 60000, 300000).unwrap() - 0.01 * 0.9216).abs() < 1e-15);
        assert_eq!(lr_at(&step, 29999, 300000).unwrap(), 0.01);
    }

    #[test]
    fn schedule_parses() {
        assert_eq!("linear".parse::<LrSchedule>().unwrap(), LrSchedule::LinearDecay);
        assert_eq!(
            "step:30000:0.96".parse::<LrSchedule>().unwrap(),
            LrSchedule::StepDecay { step_every: 30000, ratio: 0.96 }
        );
        assert!("cosine".parse::<LrSchedule>().is_err());
    }

    #[test]
    fn default_lambda_examples() {
        assert!((default_lambda(200) - 20.0).abs() < 1e-12);
        assert!((default_lambda(2) - 0.2).abs() < 1e-15);
        assert!((default_lambda(100) - 10.0).abs() < 1e-12);
        assert!((default_lambda(20) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lambda: -1.0, ..TrainConfig::default() }.validate().is_err());
        let bad_ratio = LrSchedule::StepDecay { step_every: 10, ratio: 1.5 };
        assert!(TrainConfig { lr_schedule: bad_ratio, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn zero_lr_leaves_params_unchanged() {
        let data = toy_separable(1, 20);
        let cfg = TrainConfig { lr_initial: 0.0, lambda: 0.5, epochs: 3, batch_size: 8, ..TrainConfig::default() };
        let init = cfg.init_params(2, 2).unwrap();
        let (trained, trace) = train(&data, &data, &cfg).unwrap();
        assert_eq!(trained, init);
        assert_eq!(trace.epochs.len(), 3);
    }

    #[test]
    fn separable_toy_reaches_full_train_accuracy() {
        let data = toy_separable(2, 50);
        let cfg = TrainConfig { epochs: 50, batch_size: 10, hidden_sizes: vec![8], ..TrainConfig::default() };
        let (_, trace) = train(&data, &data, &cfg).unwrap();
        assert_eq!(trace.last().unwrap().train_accuracy, 1.0);
    }

    #[test]
    fn identical_configs_give_identical_traces() {
        let data = toy_separable(3, 15);
        let cfg = TrainConfig { lambda: 0.2, epochs: 4, batch_size: 6, ..TrainConfig::default() };
        let a = train(&data, &data, &cfg).unwrap();
        let b = train(&data, &data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn siamese_branches_share_one_gradient() {
        let mut rng = seed::rng(12);
        let samples: Vec<LabeledSample> = (0..12)
            .map(|i| LabeledSample { features: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(), label: i % 3 })
            .collect();
        let data = Dataset::new(samples, 3).unwrap();
        let cfg = TrainConfig {
            lambda: 4.0,
            batch_size: 6,
            hidden_sizes: vec![5],
            activation: Activation::Tanh,
            ..TrainConfig::default()
        };
        let params = cfg.init_params(3, 3).unwrap();
        let plan = cfg.epoch_plan(0, data.len()).unwrap();
        let batch = next_pair_batch(&plan, &data, 0).unwrap();
        let loss_cfg = cfg.loss_config().unwrap();

        let mut combined = GradientBuffer::zeros_like(&params);
        accumulate_batch_gradient(&params, &batch, &loss_cfg, &mut combined).unwrap();

        // Hand assembly: separate buffers per branch, probability-space gradients.
        let mut branch_a = GradientBuffer::zeros_like(&params);
        let mut branch_b = GradientBuffer::zeros_like(&params);
        for pair in batch.pairs() {
            let (z1, c1) = forward(&params, &pair.sample_a.features).unwrap();
            let (z2, c2) = forward(&params, &pair.sample_b.features).unwrap();
            let (p1, p2) = (softmax(&z1).unwrap(), softmax(&z2).unwrap());
            let (gp1, gp2) = pair_loss_grad(&p1, pair.sample_a.label, &p2, pair.sample_b.label, &loss_cfg).unwrap();
            backward(&params, &c1, &softmax_backward(&p1, &gp1).unwrap(), &mut branch_a).unwrap();
            backward(&params, &c2, &softmax_backward(&p2, &gp2).unwrap(), &mut branch_b).unwrap();
        }
        branch_a.accumulate(&branch_b).unwrap();
        assert!(batch.pairs().iter().any(|p| p.gamma == 1));
        for (x, y) in combined.to_flat().iter().zip(branch_a.to_flat()) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn dataset_confusion_matches_pairwise_loop() {
        let data = toy_separable(5, 6);
        let cfg = TrainConfig { hidden_sizes: vec![4], ..TrainConfig::default() };
        let params = cfg.init_params(2, 2).unwrap();
        for metric in [ConfusionMetric::EuclideanConfusion, ConfusionMetric::Jeffreys] {
            let mut sum = 0.0;
            let mut count = 0;
            for a in data.samples() {
                for b in data.samples() {
                    if a.label != b.label {
                        let pa = softmax(&forward(&params, &a.features).unwrap().0).unwrap();
                        let pb = softmax(&forward(&params, &b.features).unwrap().0).unwrap();
                        sum += crate::loss::confusion_value(metric, pa.as_slice(), pb.as_slice());
                        count += 1;
                    }
                }
            }
            let got = dataset_confusion(&params, &data, metric).unwrap();
            assert!((got - sum / count as f64).abs() < 1e-12, "{metric}: {got}");
        }
    }

    #[test]
    fn mismatched_datasets_rejected() {
        let a = toy_separable(1, 5);
        let b = Dataset::new(vec![LabeledSample { features: vec![0.0; 3], label: 0 }], 2).unwrap();
        assert!(train(&a, &b, &TrainConfig { batch_size: 2, ..TrainConfig::default() }).is_err());
        assert!(train(&a, &a, &TrainConfig { batch_size: 11, ..TrainConfig::default() }).is_err());
    }
}
