use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use pairconf::certify::{self, CertifyConfig};
use pairconf::datasets::{generate, load_csv};
use pairconf::experiment::{self, ArmOutcome, DataSource, ExperimentConfig, ExperimentStatus};
use pairconf::metrics::CSV_HEADER;
use pairconf::{gradcheck, ConfusionMetric};

mod config;
mod output;

use output::OutDir;

/// Pairwise Confusion training, divergence certification and experiments.
#[derive(Parser, Debug)]
#[command(name = "pairconf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fuzz the divergence and energy-distance inequalities.
    Certify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random simplex pairs per dimension; set pairs are a tenth of this.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Compare backpropagated gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random cases.
        #[arg(long, alias = "cases", default_value_t = 50)]
        trials: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train baseline and PC arms over several seeds and compare them.
    Experiment(ExperimentArgs),
    /// Write a synthetic train/eval CSV pair.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "pairconf-out")]
        out_dir: PathBuf,
    },
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Flat `key = value` file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// `ec` or `jeffreys`.
    #[arg(long)]
    metric: Option<ConfusionMetric>,
    #[arg(long, default_value = "pairconf-out")]
    out_dir: PathBuf,
}

/// Exit status 2: the invocation or configuration is unusable.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

/// Core errors describe bad inputs, except numeric blow-ups during training.
fn classify(e: pairconf::Error) -> anyhow::Error {
    match e {
        pairconf::Error::NonFinite { .. } | pairconf::Error::NonFiniteLoss { .. } => e.into(),
        other => usage(other.to_string()),
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::confusable();
    if let Some(path) = path {
        let text =
            std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config::apply_text(&mut cfg, &text, base).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    Ok(cfg)
}

fn cmd_certify(seed: u64, trials: usize, out_dir: Option<&Path>) -> anyhow::Result<bool> {
    let start = Instant::now();
    let cfg = CertifyConfig::from_trials(seed, trials).map_err(classify)?;
    let report = certify::run(&cfg).map_err(classify)?;
    print!("{}", report.render());
    if let Some(dir) = out_dir {
        let mut out = OutDir::create(dir)?;
        out.write("certify.json", &serde_json::to_string(&report)?)?;
        let mut csv = String::from("check,dim,trials,violations,tightest_ratio\n");
        for c in &report.checks {
            csv.push_str(&format!("{},{},{},{},{:?}\n", c.name, c.dim, c.trials, c.violations, c.tightest_ratio));
        }
        out.write("certify.csv", &csv)?;
        let effective =
            format!("seed = {}\npair_trials = {}\nset_trials = {}\n", cfg.seed, cfg.pair_trials, cfg.set_trials);
        out.finish("certify", &effective, start.elapsed())?;
    }
    Ok(report.passed())
}

fn cmd_gradcheck(seed: u64, cases: usize, out_dir: Option<&Path>) -> anyhow::Result<bool> {
    let start = Instant::now();
    let report = gradcheck::run(seed, cases).map_err(classify)?;
    let passed = report.cases.iter().filter(|c| c.passed).count();
    println!("cases passed: {passed}/{}", report.cases.len());
    if let Some(w) = report.worst() {
        println!(
            "worst relative error: {:e} (case {}, case seed {}, head {:?}, max abs error {:e})",
            w.worst_rel_error, w.case, w.case_seed, w.head, w.max_abs_error
        );
    }
    for c in report.cases.iter().filter(|c| !c.passed) {
        println!("FAILED case {} (case seed {}): worst relative error {:e}", c.case, c.case_seed, c.worst_rel_error);
    }
    if let Some(dir) = out_dir {
        let mut out = OutDir::create(dir)?;
        out.write("gradcheck.json", &serde_json::to_string(&report)?)?;
        let mut csv = String::from("case,case_seed,head,params,max_abs_error,worst_rel_error,passed\n");
        for c in &report.cases {
            csv.push_str(&format!(
                "{},{},{:?},{},{:?},{:?},{}\n",
                c.case, c.case_seed, c.head, c.params, c.max_abs_error, c.worst_rel_error, c.passed
            ));
        }
        out.write("gradcheck.csv", &csv)?;
        out.finish("gradcheck", &format!("seed = {seed}\ncases = {cases}\n"), start.elapsed())?;
    }
    Ok(report.passed())
}

fn summary_rows(result: &experiment::ExperimentResult) -> String {
    let mut csv = format!("trial,arm,status,abort_epoch,abort_batch,train_top1,{CSV_HEADER}\n");
    for t in &result.trials {
        for (arm, outcome) in [("baseline", &t.baseline), ("pc", &t.pc)] {
            match outcome {
                ArmOutcome::Completed { train_top1, report, .. } => {
                    csv.push_str(&format!("{},{arm},completed,,,{train_top1},{}\n", t.trial, report.csv_row()));
                }
                ArmOutcome::Aborted { epoch, batch } => {
                    let blanks = ",".repeat(CSV_HEADER.matches(',').count());
                    csv.push_str(&format!("{},{arm},aborted,{epoch},{batch},,{blanks}\n", t.trial));
                }
            }
        }
    }
    csv
}

fn cmd_experiment(args: &ExperimentArgs) -> anyhow::Result<bool> {
    let start = Instant::now();
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = args.lambda {
        cfg.pc_lambda = Some(v);
    }
    if let Some(v) = args.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.train.lr_initial = v;
    }
    if let Some(v) = args.metric {
        cfg.train.metric = v;
    }
    cfg.validate().map_err(classify)?;
    if let DataSource::Csv { train, eval } = &cfg.data {
        for p in [train, eval] {
            load_csv(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
        }
    }

    let result = experiment::run(&cfg).map_err(classify)?;
    let s = &result.summary;
    println!("lambda = {}  metric = {}  trials = {}", s.lambda, s.metric, cfg.trials);
    for (name, arm) in [("baseline", &s.baseline), ("pc", &s.pc)] {
        println!(
            "{name:<8} completed={} aborted={} train_top1={:.4} eval_top1={:.4} gap_pp={:.3} class_std_pp={:.3} max_confusion={:.4}",
            arm.completed, arm.aborted, arm.mean_train_top1, arm.mean_eval_top1, arm.mean_gap, arm.mean_class_std,
            arm.max_end_confusion
        );
    }
    println!(
        "gap shrinkage = {:.3} pp (se {:.3}, {} paired trials); divergent trials = {}; status = {:?}",
        s.gap_shrinkage_mean, s.gap_shrinkage_se, s.paired_trials, s.divergent_trials, s.status
    );

    let mut out = OutDir::create(&args.out_dir)?;
    out.write("experiment.json", &serde_json::to_string(&result)?)?;
    if let Some(r) = &s.baseline.mean_report {
        out.write("baseline_report.json", &r.to_json())?;
    }
    if let Some(r) = &s.pc.mean_report {
        out.write("pc_report.json", &r.to_json())?;
    }
    if let Some(c) = &s.comparison {
        out.write("comparison.json", &c.to_json())?;
    }
    out.write("summary.csv", &summary_rows(&result))?;
    for t in &result.trials {
        for (arm, outcome) in [("baseline", &t.baseline), ("pc", &t.pc)] {
            if let Some((_, _, trace)) = outcome.completed() {
                out.write(&format!("traces/trial{}_{arm}.csv", t.trial), &trace.to_csv())?;
            }
        }
    }
    let manifest = out.finish("experiment", &config::render(&cfg), start.elapsed())?;
    println!("manifest: {}", manifest.display());

    if result.any_aborted() {
        eprintln!("training aborted on a non-finite loss in at least one run");
        return Ok(false);
    }
    if s.status == ExperimentStatus::Unconfirmed {
        eprintln!("jeffreys-metric run showed no divergence; refusing to report it as normal");
        return Ok(false);
    }
    Ok(true)
}

fn cmd_generate(config_path: Option<&Path>, seed: Option<u64>, out_dir: &Path) -> anyhow::Result<bool> {
    let start = Instant::now();
    let mut cfg = load_config(config_path)?;
    if let Some(v) = seed {
        cfg.seed = v;
    }
    let DataSource::Synth(spec) = &cfg.data else {
        return Err(usage("generate needs synthetic data settings (data = synth)"));
    };
    let spec = pairconf::SynthSpec { seed: cfg.seed, ..spec.clone() };
    let (train, eval) = generate(&spec).map_err(classify)?;
    let mut out = OutDir::create(out_dir)?;
    for (name, data) in [("train.csv", &train), ("eval.csv", &eval)] {
        data.write_csv(out.path(name)).with_context(|| format!("writing {name}"))?;
        out.record(name);
    }
    println!("wrote {} train and {} eval samples to {}", train.len(), eval.len(), out_dir.display());
    out.finish("generate", &config::render(&cfg), start.elapsed())?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Certify { seed, trials, out_dir } => cmd_certify(*seed, *trials, out_dir.as_deref()),
        Command::Gradcheck { seed, trials, out_dir } => cmd_gradcheck(*seed, *trials, out_dir.as_deref()),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Generate { config, seed, out_dir } => cmd_generate(config.as_deref(), *seed, out_dir),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
