//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Later keys win, and
//! command-line flags are applied after the file.

use std::path::{Path, PathBuf};

use pairconf::experiment::{DataSource, ExperimentConfig};
use pairconf::{Activation, ConfusionMetric, LrSchedule, SynthSpec};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value for `{key}`: {message}")]
    Value { line: usize, key: String, message: String },
}

/// Split `text` into `(line, key, value)` entries.
pub fn parse(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
        }
        out.push((i + 1, key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value { line, key: key.into(), message: e.to_string() })
}

fn synth<'a>(cfg: &'a mut ExperimentConfig, line: usize, key: &str) -> Result<&'a mut SynthSpec, ConfigError> {
    match &mut cfg.data {
        DataSource::Synth(spec) => Ok(spec),
        DataSource::Csv { .. } => Err(ConfigError::Value {
            line,
            key: key.into(),
            message: "only applies to synthetic data (data = synth)".into(),
        }),
    }
}

fn csv_paths(cfg: &mut ExperimentConfig) -> (&mut PathBuf, &mut PathBuf) {
    if !matches!(cfg.data, DataSource::Csv { .. }) {
        cfg.data = DataSource::Csv { train: PathBuf::new(), eval: PathBuf::new() };
    }
    match &mut cfg.data {
        DataSource::Csv { train, eval } => (train, eval),
        DataSource::Synth(_) => unreachable!(),
    }
}

/// Apply one entry. Relative CSV paths resolve against `base_dir`.
pub fn apply(
    cfg: &mut ExperimentConfig,
    line: usize,
    key: &str,
    value: &str,
    base_dir: &Path,
) -> Result<(), ConfigError> {
    let bad = |message: String| ConfigError::Value { line, key: key.into(), message };
    match key {
        "seed" => cfg.seed = num(line, key, value)?,
        "trials" => cfg.trials = num(line, key, value)?,
        "lambda" => {
            cfg.pc_lambda = if value == "default" { None } else { Some(num(line, key, value)?) };
        }
        "metric" => cfg.train.metric = value.parse::<ConfusionMetric>().map_err(|e| bad(e.to_string()))?,
        "epochs" => cfg.train.epochs = num(line, key, value)?,
        "batch_size" => cfg.train.batch_size = num(line, key, value)?,
        "lr" => cfg.train.lr_initial = num(line, key, value)?,
        "lr_schedule" => cfg.train.lr_schedule = value.parse::<LrSchedule>().map_err(|e| bad(e.to_string()))?,
        "activation" => cfg.train.activation = value.parse::<Activation>().map_err(|e| bad(e.to_string()))?,
        "hidden" => {
            cfg.train.hidden_sizes = if value.is_empty() {
                Vec::new()
            } else {
                value.split(',').map(|h| num(line, key, h.trim())).collect::<Result<_, _>>()?
            };
        }
        "data" => match value {
            "synth" => {
                if !matches!(cfg.data, DataSource::Synth(_)) {
                    cfg.data = DataSource::Synth(SynthSpec::default());
                }
            }
            "csv" => {
                csv_paths(cfg);
            }
            other => return Err(bad(format!("expected `synth` or `csv`, got `{other}`"))),
        },
        "train_csv" => *csv_paths(cfg).0 = base_dir.join(value),
        "eval_csv" => *csv_paths(cfg).1 = base_dir.join(value),
        "num_clusters" => synth(cfg, line, key)?.num_clusters = num(line, key, value)?,
        "subclasses_per_cluster" => synth(cfg, line, key)?.subclasses_per_cluster = num(line, key, value)?,
        "dim" => synth(cfg, line, key)?.dim = num(line, key, value)?,
        "samples_per_class" => synth(cfg, line, key)?.samples_per_class = num(line, key, value)?,
        "cluster_separation" => synth(cfg, line, key)?.cluster_separation = num(line, key, value)?,
        "subclass_separation" => synth(cfg, line, key)?.subclass_separation = num(line, key, value)?,
        "noise" => synth(cfg, line, key)?.noise = num(line, key, value)?,
        _ => return Err(ConfigError::UnknownKey { line, key: key.into() }),
    }
    Ok(())
}

pub fn apply_text(cfg: &mut ExperimentConfig, text: &str, base_dir: &Path) -> Result<(), ConfigError> {
    for (line, key, value) in parse(text)? {
        apply(cfg, line, &key, &value, base_dir)?;
    }
    Ok(())
}

/// The effective configuration in the same `key = value` format.
pub fn render(cfg: &ExperimentConfig) -> String {
    let t = &cfg.train;
    let hidden = t.hidden_sizes.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(",");
    let lambda = cfg.pc_lambda.map_or_else(|| "default".to_string(), |l| l.to_string());
    let mut lines = vec![
        format!("seed = {}", cfg.seed),
        format!("trials = {}", cfg.trials),
        format!("lambda = {lambda}"),
        format!("metric = {}", t.metric),
        format!("epochs = {}", t.epochs),
        format!("batch_size = {}", t.batch_size),
        format!("lr = {}", t.lr_initial),
        format!("lr_schedule = {}", t.lr_schedule),
        format!("hidden = {hidden}"),
        format!("activation = {}", t.activation),
    ];
    match &cfg.data {
        DataSource::Synth(s) => lines.extend([
            "data = synth".to_string(),
            format!("num_clusters = {}", s.num_clusters),
            format!("subclasses_per_cluster = {}", s.subclasses_per_cluster),
            format!("dim = {}", s.dim),
            format!("samples_per_class = {}", s.samples_per_class),
            format!("cluster_separation = {}", s.cluster_separation),
            format!("subclass_separation = {}", s.subclass_separation),
            format!("noise = {}", s.noise),
        ]),
        DataSource::Csv { train, eval } => lines.extend([
            "data = csv".to_string(),
            format!("train_csv = {}", train.display()),
            format!("eval_csv = {}", eval.display()),
        ]),
    }
    lines.join("\n") + "\n"
}
