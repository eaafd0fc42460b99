use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Rating,
    Topn,
}

impl Task {
    /// Key of the metric compared between train and test for this task.
    pub fn gap_metric(self) -> &'static str {
        match self {
            Task::Rating => "rmse",
            Task::Topn => "precision@10",
        }
    }
}

/// One row of the per-epoch trajectory.
///
/// For rating trainers `train`/`test` are RMSE. For top-N trainers `train` is
/// the weighted surrogate loss over the full grid and `test` is Precision@10
/// (filled on evaluation epochs only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train: f64,
    #[serde(default)]
    pub test: Option<f64>,
    #[serde(default)]
    pub subset_size: Option<usize>,
    #[serde(default)]
    pub subset_fraction: Option<f64>,
    #[serde(default)]
    pub train_precision10: Option<f64>,
}

impl EpochRow {
    pub fn new(epoch: usize, train: f64) -> Self {
        EpochRow {
            epoch,
            train,
            test: None,
            subset_size: None,
            subset_fraction: None,
            train_precision10: None,
        }
    }
}

/// Everything one training run produced. The wall time is kept out of the
/// serialized form so persisted reports depend only on the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub trainer: String,
    pub task: Task,
    pub seed: u64,
    pub config: serde_json::Value,
    pub epochs: Vec<EpochRow>,
    pub final_metrics: BTreeMap<String, f64>,
    pub converged_epoch: Option<usize>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl PartialEq for RunReport {
    fn eq(&self, other: &Self) -> bool {
        self.trainer == other.trainer
            && self.task == other.task
            && self.seed == other.seed
            && self.config == other.config
            && self.epochs == other.epochs
            && self.final_metrics == other.final_metrics
            && self.converged_epoch == other.converged_epoch
            && self.warnings == other.warnings
    }
}

impl RunReport {
    pub fn new(trainer: impl Into<String>, task: Task, seed: u64, config: serde_json::Value) -> Self {
        RunReport {
            trainer: trainer.into(),
            task,
            seed,
            config,
            epochs: Vec::new(),
            final_metrics: BTreeMap::new(),
            converged_epoch: None,
            warnings: Vec::new(),
            wall_time_secs: 0.0,
        }
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.final_metrics.get(key).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// Per-epoch CSV: `epoch,train,test,subset_size,subset_fraction,train_precision10`.
    pub fn write_epochs_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "epoch,train,test,subset_size,subset_fraction,train_precision10").map_err(io)?;
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        for row in &self.epochs {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                row.epoch,
                row.train,
                opt(row.test),
                opt(row.subset_size),
                opt(row.subset_fraction),
                opt(row.train_precision10)
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Reads rows written by [`RunReport::write_epochs_csv`].
pub fn read_epochs_csv(path: &Path) -> Result<Vec<EpochRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate().skip(1) {
        let line = line.map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::Parse {
            line: idx + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad("expected 6 columns"));
        }
        fn opt<T: std::str::FromStr>(s: &str) -> std::result::Result<Option<T>, ()> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| ())
            }
        }
        rows.push(EpochRow {
            epoch: f[0].parse().map_err(|_| bad("epoch"))?,
            train: f[1].parse().map_err(|_| bad("train"))?,
            test: opt(f[2]).map_err(|_| bad("test"))?,
            subset_size: opt(f[3]).map_err(|_| bad("subset_size"))?,
            subset_fraction: opt(f[4]).map_err(|_| bad("subset_fraction"))?,
            train_precision10: opt(f[5]).map_err(|_| bad("train_precision10"))?,
        });
    }
    Ok(rows)
}
