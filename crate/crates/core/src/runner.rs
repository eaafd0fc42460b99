//! Seeded end-to-end pipelines: split, train, evaluate, persist, aggregate.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! config.toml                  resolved config, overrides included
//! <point>/run_<seed>.json      one report per run
//! <point>/run_<seed>.csv       per-epoch rows
//! <point>/run_<seed>.err       error text for a failed run
//! <point>/aggregate.json       mean and std of every final metric
//! summary.csv                  point,param,value,metric,mean,std,n
//! timings.csv                  point,seed,wall_time_secs
//! ```
//!
//! `<point>` is the trainer name, or `param=value` for sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Sweep};
use crate::error::{Error, Result};
use crate::ingest::{load_movielens, split_train_test, subsample, SparseRatingMatrix, SplitPair};
use crate::metrics::{stability_estimate, StabilityEstimate, StabilityOptions};
use crate::model::FactorModel;
use crate::report::RunReport;
use crate::seed::{derive_seed, stream};
use crate::trainer::run_seeds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation (`n − 1` denominator); 0 for a single run.
    pub std: f64,
    pub n: usize,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(MetricSummary { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub point: String,
    pub trainer: String,
    pub param: Option<String>,
    pub value: Option<serde_json::Value>,
    pub seeds: Vec<u64>,
    pub failed_seeds: Vec<u64>,
    pub metrics: BTreeMap<String, MetricSummary>,
}

/// Mean and std of every final metric present in the reports.
pub fn aggregate_metrics<'a>(reports: impl IntoIterator<Item = &'a RunReport>) -> BTreeMap<String, MetricSummary> {
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for (k, v) in &r.final_metrics {
            values.entry(k.clone()).or_default().push(*v);
        }
    }
    values
        .into_iter()
        .filter_map(|(k, v)| MetricSummary::from_values(&v).map(|s| (k, s)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub result: std::result::Result<RunReport, String>,
}

impl RunOutcome {
    pub fn report(&self) -> Option<&RunReport> {
        self.result.as_ref().ok()
    }
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub label: String,
    pub config: ExperimentConfig,
    pub runs: Vec<RunOutcome>,
    pub aggregate: Aggregate,
}

impl PointResult {
    pub fn reports(&self) -> impl Iterator<Item = &RunReport> {
        self.runs.iter().filter_map(RunOutcome::report)
    }

    /// Final metric of every successful run, in seed order.
    pub fn metric_values(&self, key: &str) -> Vec<f64> {
        self.reports().filter_map(|r| r.metric(key)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub points: Vec<PointResult>,
}

/// Loads the dataset a config points at.
pub fn load_data(cfg: &ExperimentConfig) -> Result<SparseRatingMatrix> {
    load_movielens(&cfg.data.path, cfg.data.format)
}

/// The split for one run seed, with the training side subsampled when the
/// config asks for it. The test side is never touched.
pub fn prepare_split(data: &SparseRatingMatrix, cfg: &ExperimentConfig, seed: u64) -> Result<SplitPair> {
    let (split_seed, _) = run_seeds(seed);
    let mut split = split_train_test(data, cfg.data.ratio, split_seed)?;
    if cfg.data.train_fraction < 1.0 {
        split.train = subsample(
            &split.train,
            cfg.data.train_fraction,
            derive_seed(split_seed, stream::SUBSAMPLE),
        )?;
    }
    Ok(split)
}

/// Split, train and evaluate one seed.
pub fn run_single(data: &SparseRatingMatrix, cfg: &ExperimentConfig, seed: u64) -> Result<(FactorModel, RunReport)> {
    let split = prepare_split(data, cfg, seed)?;
    let (_, train_seed) = run_seeds(seed);
    let (model, mut report) = cfg
        .trainer
        .with_seed(train_seed)
        .train(&split.train, Some(&split.test))?;
    report.seed = seed;
    Ok((model, report))
}

fn point_dir(out: &Path, cfg: &ExperimentConfig, label: &str) -> PathBuf {
    if cfg.sweep.is_some() {
        out.join(sanitize(label))
    } else {
        out.to_path_buf()
    }
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "=._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Runs every seed of every sweep point. A failing run is recorded and the
/// others continue; data and config errors abort before any training.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentResult> {
    let points = cfg.sweep_points()?;
    let mut datasets: Vec<(PathBuf, SparseRatingMatrix)> = Vec::new();
    for (_, _, p) in &points {
        if !datasets.iter().any(|(path, _)| *path == p.data.path) {
            datasets.push((p.data.path.clone(), load_data(p)?));
        }
    }
    let data_for = |p: &ExperimentConfig| &datasets.iter().find(|(path, _)| *path == p.data.path).unwrap().1;

    let jobs: Vec<(usize, u64)> = points
        .iter()
        .enumerate()
        .flat_map(|(i, (_, _, p))| p.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let outcomes: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let (label, _, p) = &points[i];
            info!("{label}: seed {seed}");
            let result = run_single(data_for(p), p, seed).map(|(_, r)| r).map_err(|e| {
                warn!("{label}: seed {seed} failed: {e}");
                e.to_string()
            });
            RunOutcome { seed, result }
        })
        .collect();

    let mut outcomes = outcomes.into_iter();
    let mut results = Vec::with_capacity(points.len());
    for (label, value, p) in points {
        let runs: Vec<RunOutcome> = outcomes.by_ref().take(p.seeds.len()).collect();
        let aggregate = Aggregate {
            point: label.clone(),
            trainer: p.trainer.name().to_string(),
            param: cfg.sweep.as_ref().map(|s| s.param.clone()),
            value: value.as_ref().and_then(|v| serde_json::to_value(v).ok()),
            seeds: runs.iter().filter(|r| r.result.is_ok()).map(|r| r.seed).collect(),
            failed_seeds: runs.iter().filter(|r| r.result.is_err()).map(|r| r.seed).collect(),
            metrics: aggregate_metrics(runs.iter().filter_map(RunOutcome::report)),
        };
        results.push(PointResult {
            label,
            config: p,
            runs,
            aggregate,
        });
    }
    let result = ExperimentResult { points: results };
    if let Some(out) = out_dir {
        persist(cfg, &result, out)?;
    }
    Ok(result)
}

fn persist(cfg: &ExperimentConfig, result: &ExperimentResult, out: &Path) -> Result<()> {
    create_dir(out)?;
    write_file(&out.join("config.toml"), &cfg.to_toml_string())?;
    let mut summary = String::from("point,param,value,metric,mean,std,n\n");
    let mut timings = String::from("point,seed,wall_time_secs\n");
    for point in &result.points {
        let dir = point_dir(out, cfg, &point.label);
        create_dir(&dir)?;
        for run in &point.runs {
            match &run.result {
                Ok(report) => {
                    report.write_json(&dir.join(format!("run_{}.json", run.seed)))?;
                    report.write_epochs_csv(&dir.join(format!("run_{}.csv", run.seed)))?;
                    let _ = writeln!(timings, "{},{},{}", point.label, run.seed, report.wall_time_secs);
                }
                Err(e) => write_file(&dir.join(format!("run_{}.err", run.seed)), &format!("{e}\n"))?,
            }
        }
        let json = serde_json::to_string_pretty(&point.aggregate).map_err(|e| Error::Report(e.to_string()))?;
        write_file(&dir.join("aggregate.json"), &(json + "\n"))?;
        let value = point.aggregate.value.as_ref().map(|v| match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        });
        for (metric, s) in &point.aggregate.metrics {
            let _ = writeln!(
                summary,
                "{},{},{},{},{},{},{}",
                point.label,
                point.aggregate.param.as_deref().unwrap_or(""),
                value.as_deref().unwrap_or("").replace(',', ";"),
                metric,
                s.mean,
                s.std,
                s.n
            );
        }
    }
    write_file(&out.join("summary.csv"), &summary)?;
    write_file(&out.join("timings.csv"), &timings)
}

/// Repeats the experiment with the training side subsampled to each
/// fraction; the test side of every split stays whole.
pub fn run_sparsity_sweep(
    cfg: &ExperimentConfig,
    fractions: &[f64],
    out_dir: Option<&Path>,
) -> Result<ExperimentResult> {
    if fractions.is_empty() {
        return Err(Error::config("train_fraction", "at least one fraction is required"));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::config("train_fraction", format!("{f} is outside (0, 1]")));
    }
    let mut swept = cfg.clone();
    let sweep = Sweep {
        param: "data.train_fraction".into(),
        values: fractions.iter().map(|&f| toml::Value::Float(f)).collect(),
    };
    let mut source = cfg.source.clone();
    crate::config::set_key(
        &mut source,
        "experiment.sweep",
        toml::Value::try_from(&sweep).map_err(|e| Error::config("sweep", e.to_string()))?,
    )?;
    swept.sweep = Some(sweep);
    swept.source = source;
    run_experiment(&swept, out_dir)
}

/// Stability estimate for every sweep point (or the single config), seeded
/// from the first configured seed.
pub fn run_stability(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Vec<(String, StabilityEstimate)>> {
    let data = load_data(cfg)?;
    let mut out = Vec::new();
    for (label, _, p) in cfg.sweep_points()? {
        let opts = StabilityOptions {
            epsilon: p.stability.epsilon,
            n_runs: p.stability.n_runs,
            seed: p.seeds[0],
            ratio: p.data.ratio,
            fixed_seed: p.stability.fixed_seed,
        };
        info!("{label}: {} stability runs", opts.n_runs);
        out.push((label, stability_estimate(&data, &p.trainer, &opts)?));
    }
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_file(&dir.join("config.toml"), &cfg.to_toml_string())?;
        let mut table = String::from("point,epsilon,probability,successes,n_runs,diverged_runs\n");
        for (label, est) in &out {
            est.write_csv(&dir.join(format!("stability_{}.csv", sanitize(label))))?;
            let _ = writeln!(
                table,
                "{},{},{},{},{},{}",
                label, est.epsilon, est.probability, est.successes, est.n_runs, est.diverged_runs
            );
        }
        write_file(&dir.join("stability.csv"), &table)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn summary_of_known_values() {
        let s = MetricSummary::from_values(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert_relative_eq!(s.std, 2.5f64.sqrt(), max_relative = 1e-15);
        assert_eq!(MetricSummary::from_values(&[7.0]).unwrap().std, 0.0);
        assert!(MetricSummary::from_values(&[]).is_none());
    }

    #[test]
    fn aggregates_per_metric() {
        let mut a = RunReport::new("rsvd", crate::report::Task::Rating, 1, serde_json::Value::Null);
        a.final_metrics.insert("test_rmse".into(), 1.0);
        let mut b = a.clone();
        b.final_metrics.insert("test_rmse".into(), 3.0);
        b.final_metrics.insert("train_rmse".into(), 0.5);
        let agg = aggregate_metrics([&a, &b]);
        assert_eq!(agg["test_rmse"].mean, 2.0);
        assert_eq!(agg["test_rmse"].n, 2);
        assert_eq!(agg["train_rmse"].n, 1);
    }

    #[test]
    fn labels_are_file_safe() {
        assert_eq!(sanitize("lambdas=0.5_0.5"), "lambdas=0.5_0.5");
        assert_eq!(sanitize("a/b c"), "a_b_c");
    }
}
