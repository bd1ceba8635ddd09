//! Labeled feature datasets: a synthetic generator with tunable inter-class
//! similarity, and CSV ingestion.
//!
//! The generator is a three-level Gaussian hierarchy. Cluster centers are
//! drawn at scale `cluster_separation`; each cluster holds
//! `subclasses_per_cluster` classes whose centers sit at scale
//! `subclass_separation` around it; samples add isotropic noise at scale
//! `noise`. Classes sharing a cluster are the hard-to-separate ones.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// A set of samples sharing feature dimension and class count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>, num_classes: usize) -> Result<Self> {
        let dim = samples.first().ok_or(Error::Empty("dataset"))?.features.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("samples have no features".into()));
        }
        for s in &samples {
            crate::error::ensure_same_dim(dim, s.features.len())?;
            if s.label >= num_classes {
                return Err(Error::LabelOutOfRange { label: s.label, num_classes });
            }
            if let Some(index) = s.features.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index, value: s.features[index] });
            }
        }
        Ok(Self { samples, dim, num_classes })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Write as CSV: header `f0,…,f{d−1},label`, one sample per row.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = (0..self.dim).map(|i| format!("f{i}")).collect();
        writeln!(out, "{},label", header.join(","))?;
        for s in &self.samples {
            for v in &s.features {
                // shortest round-trip representation
                write!(out, "{v:?},")?;
            }
            writeln!(out, "{}", s.label)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_clusters: usize,
    pub subclasses_per_cluster: usize,
    pub dim: usize,
    /// Samples per class, split between train and eval.
    pub samples_per_class: usize,
    pub cluster_separation: f64,
    pub subclass_separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// 20 confusable classes in 5 clusters of 4.
    fn default() -> Self {
        Self {
            num_clusters: 5,
            subclasses_per_cluster: 4,
            dim: 16,
            samples_per_class: 30,
            cluster_separation: 10.0,
            subclass_separation: 1.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn num_classes(&self) -> usize {
        self.num_clusters * self.subclasses_per_cluster
    }

    pub fn cluster_of(&self, class: usize) -> usize {
        class / self.subclasses_per_cluster
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.num_clusters == 0 || self.subclasses_per_cluster == 0 || self.dim == 0 {
            return bad("cluster count, subclass count and dim must be positive".into());
        }
        if self.num_classes() < 2 {
            return bad("need at least 2 classes".into());
        }
        if self.samples_per_class < 2 {
            return bad(format!("samples_per_class = {} cannot be split into train and eval", self.samples_per_class));
        }
        for (name, v) in [
            ("cluster_separation", self.cluster_separation),
            ("subclass_separation", self.subclass_separation),
            ("noise", self.noise),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.subclass_separation >= self.cluster_separation {
            return bad("subclass_separation must be below cluster_separation".into());
        }
        Ok(())
    }
}

/// Generated class centers, exposed for oracle checks.
#[derive(Debug, Clone)]
pub struct SynthCenters {
    pub clusters: Vec<Vec<f64>>,
    pub classes: Vec<Vec<f64>>,
}

fn gaussian_vec(center: &[f64], scale: f64, rng: &mut impl rand::Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, scale).expect("positive scale");
    center.iter().map(|c| c + normal.sample(rng)).collect()
}

/// Generate `(train, eval)`. Each class contributes `⌈n/2⌉` train and `⌊n/2⌋`
/// eval samples; both splits list samples class by class.
pub fn generate(spec: &SynthSpec) -> Result<(Dataset, Dataset)> {
    generate_with_centers(spec).map(|(train, eval, _)| (train, eval))
}

pub fn generate_with_centers(spec: &SynthSpec) -> Result<(Dataset, Dataset, SynthCenters)> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let origin = vec![0.0; spec.dim];
    let clusters: Vec<Vec<f64>> =
        (0..spec.num_clusters).map(|_| gaussian_vec(&origin, spec.cluster_separation, &mut rng)).collect();
    let classes: Vec<Vec<f64>> = clusters
        .iter()
        .flat_map(|c| {
            (0..spec.subclasses_per_cluster)
                .map(|_| gaussian_vec(c, spec.subclass_separation, &mut rng))
                .collect::<Vec<_>>()
        })
        .collect();
    let n_train = spec.samples_per_class.div_ceil(2);
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for (label, center) in classes.iter().enumerate() {
        let mut draws: Vec<LabeledSample> = (0..spec.samples_per_class)
            .map(|_| LabeledSample { features: gaussian_vec(center, spec.noise, &mut rng), label })
            .collect();
        draws.shuffle(&mut rng);
        eval.extend(draws.split_off(n_train));
        train.extend(draws);
    }
    let n = spec.num_classes();
    Ok((Dataset::new(train, n)?, Dataset::new(eval, n)?, SynthCenters { clusters, classes }))
}

/// Read a dataset from CSV: `d` float columns then an integer label column.
///
/// A single header line is skipped if its first record does not parse as
/// numbers. Class count is `max label + 1`.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file)
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut samples = Vec::new();
    let mut width: Option<usize> = None;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        if record.len() < 2 {
            return Err(Error::Parse { line, message: "need at least one feature and a label".into() });
        }
        let parsed = parse_row(&record);
        let (features, label) = match parsed {
            Ok(row) => row,
            Err(_) if i == 0 => continue, // header
            Err(message) => return Err(Error::Parse { line, message }),
        };
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse { line, message: format!("expected {w} columns, found {}", record.len()) })
            }
            Some(_) => {}
        }
        samples.push(LabeledSample { features, label });
    }
    if samples.is_empty() {
        return Err(Error::Empty("CSV dataset"));
    }
    let num_classes = samples.iter().map(|s| s.label).max().unwrap() + 1;
    Dataset::new(samples, num_classes.max(2))
}

fn parse_row(record: &csv::StringRecord) -> std::result::Result<(Vec<f64>, usize), String> {
    let n = record.len();
    let features = record
        .iter()
        .take(n - 1)
        .map(|f| {
            let v: f64 = f.parse().map_err(|_| format!("bad feature `{f}`"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("non-finite feature `{f}`"))
            }
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let raw = &record[n - 1];
    let label = raw.parse::<usize>().map_err(|_| format!("bad label `{raw}`"))?;
    Ok((features, label))
}
