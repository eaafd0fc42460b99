use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::{Table, Value};

use sma_core::config::{apply_overrides, parse_value, ExperimentConfig};
use sma_core::ingest::{binarize, load_movielens, read_split, split_train_test, write_split, Format};
use sma_core::metrics::evaluate_top_n;
use sma_core::model::{rmse, FactorModel};
use sma_core::runner::{run_experiment, run_single, run_sparsity_sweep, run_stability, ExperimentResult};
use sma_core::trainer::run_seeds;
use sma_core::{Error, Result, Task};

#[derive(Parser)]
#[command(
    name = "sma",
    version,
    about = "Stable matrix approximation for collaborative filtering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded train/test split as train.tsv and test.tsv.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "ml100k")]
        format: Format,
        #[arg(long, default_value_t = 0.9)]
        ratio: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train one model and save it with its report.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: u64,
        /// Train on a split written by `sma split` instead of splitting the data.
        #[arg(long)]
        split_dir: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score a saved model on a saved split and print the metrics as JSON.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        split_dir: PathBuf,
        #[arg(long, default_value = "rating", value_parser = parse_task)]
        task: Task,
    },
    /// Run every configured seed (and sweep point) and aggregate.
    Experiment {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Replace the configured seeds with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Sweep one parameter over a list of values.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Parameter name, e.g. `K`, `rank`, `gamma` or `train_fraction`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Estimate stability over repeated random splits.
    Stability {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    trainer: Option<String>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    mu1: Option<f64>,
    #[arg(long)]
    mu2: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Any other config key, as `key=value` or `section.key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    match s {
        "rating" => Ok(Task::Rating),
        "topn" => Ok(Task::Topn),
        _ => Err(format!("unknown task `{s}` (rating, topn)")),
    }
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, Value)>> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        push(
            "data.path",
            self.data.as_ref().map(|p| Value::String(p.display().to_string())),
        );
        push("data.format", self.format.clone().map(Value::String));
        push("experiment.trainer", self.trainer.clone().map(Value::String));
        push("train.rank", self.rank.map(|v| Value::Integer(v as i64)));
        push("train.lr", self.lr.map(Value::Float));
        push("train.mu1", self.mu1.map(Value::Float));
        push("train.mu2", self.mu2.map(Value::Float));
        push("train.max_epochs", self.max_epochs.map(|v| Value::Integer(v as i64)));
        push("sma_rating.K", self.k.map(|v| Value::Integer(v as i64)));
        push("sma_rating.p", self.p.map(Value::Float));
        push("topn.loss", self.loss.clone().map(Value::String));
        push("topn.gamma", self.gamma.map(Value::Float));
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::config(kv.as_str(), "expected KEY=VALUE"))?;
            out.push((k.trim().to_string(), parse_value(v.trim())));
        }
        Ok(out)
    }

    fn load(&self, extra: Vec<(String, Value)>) -> Result<ExperimentConfig> {
        let mut doc: Table = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                text.parse()
                    .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?
            }
            None => Table::new(),
        };
        let mut overrides = self.overrides()?;
        overrides.extend(extra);
        apply_overrides(&mut doc, &overrides)?;
        if !doc.contains_key("data") {
            return Err(Error::config("data.path", "give --config or --data"));
        }
        ExperimentConfig::from_table(doc)
    }
}

fn seed_override(seed: Option<u64>) -> Vec<(String, Value)> {
    seed.map(|s| {
        vec![(
            "experiment.seeds".to_string(),
            Value::Array(vec![Value::Integer(s as i64)]),
        )]
    })
    .unwrap_or_default()
}

fn print_result(result: &ExperimentResult) {
    for point in &result.points {
        for (metric, s) in &point.aggregate.metrics {
            if metric.starts_with("test_") {
                println!("{}\t{}\t{:.6} ± {:.6} (n={})", point.label, metric, s.mean, s.std, s.n);
            }
        }
        for seed in &point.aggregate.failed_seeds {
            println!("{}\tseed {} failed", point.label, seed);
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split {
            data,
            format,
            ratio,
            seed,
            out_dir,
        } => {
            let matrix = load_movielens(&data, format)?;
            let (split_seed, _) = run_seeds(seed);
            let split = split_train_test(&matrix, ratio, split_seed)?;
            write_split(&out_dir, &split)?;
            println!(
                "train {} / test {} ratings written to {}",
                split.train.len(),
                split.test.len(),
                out_dir.display()
            );
        }
        Command::Train {
            cfg,
            seed,
            split_dir,
            out_dir,
        } => {
            let cfg = cfg.load(Vec::new())?;
            let (model, report) = match split_dir {
                Some(dir) => {
                    let split = read_split(dir)?;
                    let (_, train_seed) = run_seeds(seed);
                    let (model, mut report) = cfg
                        .trainer
                        .with_seed(train_seed)
                        .train(&split.train, Some(&split.test))?;
                    report.seed = seed;
                    (model, report)
                }
                None => run_single(&sma_core::runner::load_data(&cfg)?, &cfg, seed)?,
            };
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            model.save(out_dir.join(format!("model_{seed}.txt")))?;
            report.write_json(&out_dir.join(format!("run_{seed}.json")))?;
            report.write_epochs_csv(&out_dir.join(format!("run_{seed}.csv")))?;
            write_text(&out_dir.join("config.toml"), &cfg.to_toml_string())?;
            for (k, v) in &report.final_metrics {
                println!("{k}\t{v:.6}");
            }
        }
        Command::Evaluate { model, split_dir, task } => {
            let model = FactorModel::load(&model)?;
            let split = read_split(split_dir)?;
            if model.num_users() != split.train.num_users() || model.num_items() != split.train.num_items() {
                return Err(Error::InvalidArgument("model dimensions do not match the split".into()));
            }
            let mut metrics = serde_json::Map::new();
            match task {
                Task::Rating => {
                    metrics.insert("train_rmse".into(), rmse(&model, split.train.entries())?.into());
                    metrics.insert("test_rmse".into(), rmse(&model, split.test.entries())?.into());
                }
                Task::Topn => {
                    let train = binarize(&split.train).items_by_user();
                    let test = split.test.items_by_user();
                    for r in evaluate_top_n(&model, Some(&train), &test, &[1, 5, 10, 20])? {
                        metrics.insert(format!("test_precision@{}", r.n), r.precision_at.into());
                        metrics.insert(format!("test_ndcg@{}", r.n), r.ndcg_at.into());
                    }
                }
            }
            println!("{}", serde_json::Value::Object(metrics));
        }
        Command::Experiment { cfg, seed, out_dir } => {
            let cfg = cfg.load(seed_override(seed))?;
            let result = run_experiment(&cfg, Some(&out_dir))?;
            print_result(&result);
        }
        Command::Sweep {
            cfg,
            param,
            values,
            seed,
            out_dir,
        } => {
            let base = cfg.load(seed_override(seed))?;
            let result = if matches!(param.as_str(), "train_fraction" | "data.train_fraction") {
                let fractions = values
                    .iter()
                    .map(|v| {
                        v.parse::<f64>()
                            .map_err(|_| Error::config("train_fraction", format!("`{v}` is not a number")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                run_sparsity_sweep(&base, &fractions, Some(&out_dir))?
            } else {
                let sweep = Value::Table(Table::from_iter([
                    ("param".to_string(), Value::String(param.clone())),
                    (
                        "values".to_string(),
                        Value::Array(values.iter().map(|v| parse_value(v)).collect()),
                    ),
                ]));
                run_experiment(&base.with_override("experiment.sweep", sweep)?, Some(&out_dir))?
            };
            print_result(&result);
        }
        Command::Stability {
            cfg,
            epsilon,
            runs,
            seed,
            out_dir,
        } => {
            let mut extra = seed_override(seed);
            if let Some(e) = epsilon {
                extra.push(("stability.epsilon".into(), Value::Float(e)));
            }
            if let Some(n) = runs {
                extra.push(("stability.n_runs".into(), Value::Integer(n as i64)));
            }
            let cfg = cfg.load(extra)?;
            for (label, est) in run_stability(&cfg, Some(&out_dir))? {
                println!(
                    "{label}\tepsilon {}\tprobability {:.4} ({}/{}, {} diverged)",
                    est.epsilon, est.probability, est.successes, est.n_runs, est.diverged_runs
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
