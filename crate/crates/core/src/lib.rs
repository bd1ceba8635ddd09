//! Pairwise Confusion training in pure Rust.
//!
//! The crate covers three layers:
//!
//! * divergences on the probability simplex ([`simplex`]) and their
//!   set-level lifts ([`pointset`]), with randomized certification of the
//!   inequalities linking them ([`certify`]);
//! * a small fully connected network with reverse-mode gradients
//!   ([`tensor`]), the pair loss ([`loss`]), the pair sampler ([`sampler`])
//!   and an SGD trainer ([`trainer`]);
//! * synthetic confusable datasets ([`datasets`]), evaluation reports
//!   ([`metrics`]) and a baseline-versus-PC harness ([`experiment`]).
//!
//! All numerics are `f64` and all randomness derives from explicit seeds.

pub mod certify;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod pointset;
pub mod sampler;
pub mod seed;
pub mod simplex;
pub mod tensor;
pub mod trainer;

pub use datasets::{Dataset, LabeledSample, SynthSpec};
pub use error::{Error, Result};
pub use experiment::{DataSource, ExperimentConfig, ExperimentResult, ExperimentStatus};
pub use loss::{ConfusionMetric, PairLossConfig};
pub use metrics::{ComparisonReport, MetricsReport};
pub use pointset::DistributionSet;
pub use sampler::{EpochPlan, PairBatch};
pub use simplex::{DivergenceValue, ProbVector};
pub use tensor::{Activation, NetworkParams};
pub use trainer::{LrSchedule, TrainConfig, TrainTrace};
