//! Experiment configuration files.
//!
//! A config is a TOML document with one table per concern:
//!
//! ```toml
//! [data]
//! path = "data/ml-100k/u.data"
//! format = "ml100k"          # "ml1m" or "ml10m"
//! ratio = 0.9                # training share of each split
//! train_fraction = 1.0       # optional subsampling of the training side
//!
//! [experiment]
//! task = "rating"            # "rating" or "topn"; inferred from trainer if absent
//! trainer = "sma_rating"     # rsvd | sma_rating | wma | sma_topn_boundary | sma_topn_random
//! seeds = [1, 2, 3, 4, 5]    # or: master_seed = 7, runs = 5
//! sweep = { param = "K", values = [1, 2, 3, 4, 5] }
//!
//! [train]                    # rank, lr, mu1, mu2, max_epochs, conv_eps, init_scale, clamp, center
//! [sma_rating]               # K, p, lambdas, form
//! [topn]                     # loss, w_pos, w_neg, gamma, lambda0, lambda1, eval_every
//! [stability]                # epsilon, n_runs, fixed_seed
//! ```
//!
//! Omitted keys take the trainer's defaults. Any key can be overridden with
//! `section.key=value` (or just `key=value` for unambiguous names), which is
//! what CLI flags and sweeps do.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::ingest::Format;
use crate::model::TrainConfig;
use crate::rating_sma::{ObjectiveForm, SmaRatingConfig};
use crate::report::Task;
use crate::seed::derive_seed;
use crate::topn::{SmaTopnConfig, SurrogateLoss, TopnMode, WeightScheme};
use crate::trainer::Trainer;

/// Key names and the table each one lives in.
const KEYS: &[(&str, &str)] = &[
    ("path", "data"),
    ("format", "data"),
    ("ratio", "data"),
    ("train_fraction", "data"),
    ("task", "experiment"),
    ("trainer", "experiment"),
    ("seeds", "experiment"),
    ("master_seed", "experiment"),
    ("runs", "experiment"),
    ("sweep", "experiment"),
    ("rank", "train"),
    ("lr", "train"),
    ("mu1", "train"),
    ("mu2", "train"),
    ("max_epochs", "train"),
    ("conv_eps", "train"),
    ("init_scale", "train"),
    ("clamp", "train"),
    ("center", "train"),
    ("K", "sma_rating"),
    ("p", "sma_rating"),
    ("lambdas", "sma_rating"),
    ("form", "sma_rating"),
    ("loss", "topn"),
    ("w_pos", "topn"),
    ("w_neg", "topn"),
    ("gamma", "topn"),
    ("lambda0", "topn"),
    ("lambda1", "topn"),
    ("eval_every", "topn"),
    ("epsilon", "stability"),
    ("n_runs", "stability"),
    ("fixed_seed", "stability"),
];

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    data: RawData,
    #[serde(default)]
    experiment: RawExperiment,
    #[serde(default)]
    train: RawTrain,
    sma_rating: Option<RawSmaRating>,
    topn: Option<RawTopn>,
    #[serde(default)]
    stability: RawStability,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    path: PathBuf,
    format: Option<String>,
    ratio: Option<f64>,
    train_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    task: Option<String>,
    trainer: Option<String>,
    seeds: Option<Vec<u64>>,
    master_seed: Option<u64>,
    runs: Option<usize>,
    sweep: Option<Sweep>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    rank: Option<usize>,
    lr: Option<f64>,
    mu1: Option<f64>,
    mu2: Option<f64>,
    max_epochs: Option<usize>,
    conv_eps: Option<f64>,
    init_scale: Option<f64>,
    /// `[lo, hi]`, or `false` to disable clamping.
    clamp: Option<Value>,
    center: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSmaRating {
    #[serde(rename = "K")]
    k: Option<usize>,
    p: Option<f64>,
    lambdas: Option<Vec<f64>>,
    form: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopn {
    loss: Option<String>,
    w_pos: Option<f64>,
    w_neg: Option<f64>,
    gamma: Option<f64>,
    lambda0: Option<f64>,
    lambda1: Option<f64>,
    eval_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStability {
    epsilon: Option<f64>,
    n_runs: Option<usize>,
    fixed_seed: Option<bool>,
}

/// A grid sweep over one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub path: PathBuf,
    pub format: Format,
    pub ratio: f64,
    pub train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub epsilon: f64,
    pub n_runs: usize,
    pub fixed_seed: bool,
}

/// A fully resolved and validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub task: Task,
    pub trainer: Trainer,
    pub seeds: Vec<u64>,
    pub sweep: Option<Sweep>,
    pub stability: StabilityConfig,
    /// The document this config was resolved from, overrides included.
    pub source: Table,
}

fn task_of(trainer: &str) -> Result<Task> {
    match trainer {
        "rsvd" | "sma_rating" => Ok(Task::Rating),
        "wma" | "sma_topn_boundary" | "sma_topn_random" => Ok(Task::Topn),
        other => Err(Error::config(
            "experiment.trainer",
            format!("unknown trainer `{other}`"),
        )),
    }
}

/// Maps `key` or `section.key` to `(section, key)`.
pub fn qualify(key: &str) -> Result<(String, String)> {
    if let Some((section, k)) = key.split_once('.') {
        if KEYS.iter().any(|&(name, s)| name == k && s == section) {
            return Ok((section.to_string(), k.to_string()));
        }
        return Err(Error::config(key, "unknown configuration key"));
    }
    match KEYS.iter().find(|&&(name, _)| name == key) {
        Some(&(name, section)) => Ok((section.to_string(), name.to_string())),
        None => Err(Error::config(key, "unknown configuration key")),
    }
}

/// Sets `key` in `doc`, creating the section when needed.
pub fn set_key(doc: &mut Table, key: &str, value: Value) -> Result<()> {
    let (section, k) = qualify(key)?;
    let table = doc.entry(section.clone()).or_insert_with(|| Value::Table(Table::new()));
    match table {
        Value::Table(t) => {
            t.insert(k, value);
            Ok(())
        }
        _ => Err(Error::config(section, "expected a table")),
    }
}

/// Parses a CLI override value: TOML syntax first, bare string otherwise.
pub fn parse_value(s: &str) -> Value {
    format!("v = {s}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(s.to_string()))
}

/// Applies `key=value` overrides.
pub fn apply_overrides(doc: &mut Table, overrides: &[(String, Value)]) -> Result<()> {
    for (k, v) in overrides {
        set_key(doc, k, v.clone())?;
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config(toml_field(&e), e.message().to_string()))?;
        Self::from_table(doc)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Resolves a document. Relative data paths stay relative to the
    /// working directory.
    pub fn from_table(doc: Table) -> Result<Self> {
        let raw: RawConfig = RawConfig::deserialize(Value::Table(doc.clone()))
            .map_err(|e| Error::config(toml_field(&e), e.message().to_string()))?;
        resolve(raw, doc)
    }

    /// A copy with `key` set to `value`, re-validated.
    pub fn with_override(&self, key: &str, value: Value) -> Result<Self> {
        let mut doc = self.source.clone();
        set_key(&mut doc, key, value)?;
        Self::from_table(doc)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.source).unwrap_or_default()
    }

    /// The configs of every sweep point, with the point label and value.
    pub fn sweep_points(&self) -> Result<Vec<(String, Option<Value>, ExperimentConfig)>> {
        match &self.sweep {
            None => Ok(vec![(self.trainer.name().to_string(), None, self.clone())]),
            Some(sweep) => {
                let mut points = Vec::with_capacity(sweep.values.len());
                for v in &sweep.values {
                    let mut doc = self.source.clone();
                    if let Some(Value::Table(exp)) = doc.get_mut("experiment") {
                        exp.remove("sweep");
                    }
                    set_key(&mut doc, &sweep.param, v.clone())?;
                    let cfg = Self::from_table(doc)?;
                    let label = format!("{}={}", sweep.param, value_label(v));
                    points.push((label, Some(v.clone()), cfg));
                }
                Ok(points)
            }
        }
    }
}

/// Compact text of a sweep value, usable in file names.
pub fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(a) => a.iter().map(value_label).collect::<Vec<_>>().join("_"),
        other => other.to_string(),
    }
}

fn toml_field(e: &toml::de::Error) -> String {
    // serde reports "unknown field `x`" / "missing field `x`"; name it
    let msg = e.message();
    match (msg.find('`'), msg[msg.find('`').map_or(0, |i| i + 1)..].find('`')) {
        (Some(a), Some(b)) => msg[a + 1..a + 1 + b].to_string(),
        _ => "config".to_string(),
    }
}

fn parse_clamp(v: &Value) -> Result<Option<(f64, f64)>> {
    let num = |x: &Value| x.as_float().or_else(|| x.as_integer().map(|i| i as f64));
    match v {
        Value::Boolean(false) => Ok(None),
        Value::Array(a) if a.len() == 2 => match (num(&a[0]), num(&a[1])) {
            (Some(lo), Some(hi)) => Ok(Some((lo, hi))),
            _ => Err(Error::config("train.clamp", "expected two numbers")),
        },
        _ => Err(Error::config("train.clamp", "expected [lo, hi] or false")),
    }
}

fn resolve(raw: RawConfig, source: Table) -> Result<ExperimentConfig> {
    let trainer_name = raw.experiment.trainer.clone().unwrap_or_else(|| "rsvd".to_string());
    let task = task_of(&trainer_name)?;
    if let Some(t) = &raw.experiment.task {
        let declared = match t.as_str() {
            "rating" => Task::Rating,
            "topn" => Task::Topn,
            other => return Err(Error::config("experiment.task", format!("unknown task `{other}`"))),
        };
        if declared != task {
            return Err(Error::config(
                "experiment.trainer",
                format!("trainer `{trainer_name}` does not belong to task `{t}`"),
            ));
        }
    }
    match task {
        Task::Rating if raw.topn.is_some() => {
            return Err(Error::config("topn", "top-N settings given for a rating trainer"));
        }
        Task::Topn if raw.sma_rating.is_some() => {
            return Err(Error::config(
                "sma_rating",
                "rating SMA settings given for a top-N trainer",
            ));
        }
        _ => {}
    }

    let format = match &raw.data.format {
        Some(f) => f
            .parse::<Format>()
            .map_err(|e| Error::config("data.format", e.to_string()))?,
        None => Format::Ml100k,
    };
    let data = DataConfig {
        path: raw.data.path.clone(),
        format,
        ratio: raw.data.ratio.unwrap_or(0.9),
        train_fraction: raw.data.train_fraction.unwrap_or(1.0),
    };
    if !(data.ratio > 0.0 && data.ratio < 1.0) {
        return Err(Error::config("data.ratio", "must lie in (0, 1)"));
    }
    if !(data.train_fraction > 0.0 && data.train_fraction <= 1.0) {
        return Err(Error::config("data.train_fraction", "must lie in (0, 1]"));
    }

    let defaults = match task {
        Task::Rating => TrainConfig::default(),
        Task::Topn => SmaTopnConfig::default().base,
    };
    let t = &raw.train;
    let base = TrainConfig {
        rank: t.rank.unwrap_or(defaults.rank),
        lr: t.lr.unwrap_or(defaults.lr),
        mu_user: t.mu1.unwrap_or(defaults.mu_user),
        mu_item: t.mu2.or(t.mu1).unwrap_or(defaults.mu_item),
        max_epochs: t.max_epochs.unwrap_or(defaults.max_epochs),
        conv_eps: t.conv_eps.unwrap_or(defaults.conv_eps),
        seed: 0,
        init_scale: t.init_scale.unwrap_or(defaults.init_scale),
        clamp: match &t.clamp {
            Some(v) => parse_clamp(v)?,
            None => match task {
                Task::Rating => Some(format.rating_range()),
                Task::Topn => None,
            },
        },
        center: t.center.unwrap_or(defaults.center),
    };
    base.validate().map_err(|e| prefix(e, "train"))?;

    let trainer = match trainer_name.as_str() {
        "rsvd" => Trainer::Rsvd(base),
        "sma_rating" => {
            let s = raw.sma_rating.unwrap_or_default();
            let d = SmaRatingConfig::default();
            let form = match s.form.as_deref() {
                None | Some("squared") => ObjectiveForm::Squared,
                Some("root") => ObjectiveForm::Root,
                Some(other) => return Err(Error::config("sma_rating.form", format!("unknown form `{other}`"))),
            };
            let cfg = SmaRatingConfig {
                base,
                subsets: s.k.unwrap_or(d.subsets),
                p: s.p.unwrap_or(d.p),
                lambdas: s.lambdas,
                form,
                baseline: None,
            };
            cfg.validate().map_err(|e| prefix(e, "sma_rating"))?;
            Trainer::SmaRating(cfg)
        }
        mode => {
            let s = raw.topn.unwrap_or_default();
            let d = SmaTopnConfig::default();
            let loss = match &s.loss {
                Some(l) => l.parse::<SurrogateLoss>().map_err(|e| prefix(e, "topn"))?,
                None => d.loss,
            };
            let cfg = SmaTopnConfig {
                base,
                loss,
                weights: WeightScheme {
                    positive: s.w_pos.unwrap_or(d.weights.positive),
                    negative: s.w_neg.unwrap_or(d.weights.negative),
                },
                gamma: s.gamma.unwrap_or(d.gamma),
                lambda0: s.lambda0.unwrap_or(d.lambda0),
                lambda1: s.lambda1.unwrap_or(d.lambda1),
                mode: mode.parse::<TopnMode>()?,
                eval_every: s.eval_every.unwrap_or(10),
            };
            cfg.validate().map_err(|e| prefix(e, "topn"))?;
            Trainer::Topn(cfg)
        }
    };

    let e = &raw.experiment;
    let seeds = match (&e.seeds, e.master_seed) {
        (Some(_), Some(_)) => {
            return Err(Error::config(
                "experiment.seeds",
                "give either seeds or master_seed, not both",
            ));
        }
        (Some(s), None) => s.clone(),
        (None, Some(master)) => {
            let runs = e.runs.unwrap_or(1);
            (0..runs as u64).map(|i| derive_seed(master, i)).collect()
        }
        (None, None) => vec![0],
    };
    if seeds.is_empty() {
        return Err(Error::config("experiment.seeds", "at least one seed is required"));
    }
    if let Some(sweep) = &e.sweep {
        qualify(&sweep.param)
            .map_err(|_| Error::config("experiment.sweep.param", format!("unknown parameter `{}`", sweep.param)))?;
        if sweep.values.is_empty() {
            return Err(Error::config(
                "experiment.sweep.values",
                "at least one value is required",
            ));
        }
    }

    let s = &raw.stability;
    let stability = StabilityConfig {
        epsilon: s.epsilon.unwrap_or(0.05),
        n_runs: s.n_runs.unwrap_or(500),
        fixed_seed: s.fixed_seed.unwrap_or(false),
    };
    if !(stability.epsilon >= 0.0) {
        return Err(Error::config("stability.epsilon", "must be non-negative"));
    }

    Ok(ExperimentConfig {
        data,
        task,
        trainer,
        seeds,
        sweep: e.sweep.clone(),
        stability,
        source,
    })
}

fn prefix(e: Error, section: &str) -> Error {
    match e {
        Error::Config { field, message } if !field.contains('.') => Error::Config {
            field: format!("{section}.{field}"),
            message,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMA: &str = r#"
[data]
path = "u.data"

[experiment]
trainer = "sma_rating"
seeds = [1, 2]

[train]
rank = 8

[sma_rating]
K = 2
"#;

    fn field_of(e: Error) -> String {
        match e {
            Error::Config { field, .. } => field,
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn resolves_defaults() {
        let cfg = ExperimentConfig::from_toml_str(SMA).unwrap();
        assert_eq!(cfg.task, Task::Rating);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.data.ratio, 0.9);
        match &cfg.trainer {
            Trainer::SmaRating(c) => {
                assert_eq!(c.subsets, 2);
                assert_eq!(c.p, 0.8);
                assert_eq!(c.base.rank, 8);
                assert_eq!(c.base.mu_item, 0.06);
                assert_eq!(c.base.clamp, Some((1.0, 5.0)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn topn_defaults() {
        let cfg = ExperimentConfig::from_toml_str("[data]\npath='x'\n[experiment]\ntrainer='wma'\n").unwrap();
        match &cfg.trainer {
            Trainer::Topn(c) => {
                assert_eq!(c.base.rank, 100);
                assert_eq!(c.base.clamp, None);
                assert_eq!(c.mode, TopnMode::Wma);
                assert_eq!(c.weights.negative, 0.03);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn named_field_errors() {
        let bad = SMA.replace("K = 2", "K = 0");
        assert_eq!(
            field_of(ExperimentConfig::from_toml_str(&bad).unwrap_err()),
            "sma_rating.K"
        );
        let bad = SMA.replace("rank = 8", "rank = 8\nlr = -1.0");
        assert_eq!(field_of(ExperimentConfig::from_toml_str(&bad).unwrap_err()), "train.lr");
        let bad = SMA.replace("rank = 8", "rnak = 8");
        assert_eq!(field_of(ExperimentConfig::from_toml_str(&bad).unwrap_err()), "rnak");
        let bad = SMA.replace("seeds = [1, 2]", "seeds = []");
        assert_eq!(
            field_of(ExperimentConfig::from_toml_str(&bad).unwrap_err()),
            "experiment.seeds"
        );
        let bad = SMA.replace("[sma_rating]", "[topn]\n[x]");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = format!("{SMA}\n[topn]\ngamma = 0.3\n");
        assert_eq!(field_of(ExperimentConfig::from_toml_str(&bad).unwrap_err()), "topn");
    }

    #[test]
    fn overrides_and_sweeps() {
        let cfg = ExperimentConfig::from_toml_str(SMA).unwrap();
        let c2 = cfg.with_override("K", parse_value("3")).unwrap();
        assert!(matches!(&c2.trainer, Trainer::SmaRating(c) if c.subsets == 3));
        let c3 = cfg.with_override("trainer", parse_value("rsvd")).unwrap();
        assert_eq!(c3.trainer.name(), "rsvd");
        assert!(cfg.with_override("nonsense", parse_value("1")).is_err());

        let swept = SMA.replace(
            "seeds = [1, 2]",
            "seeds = [1]\nsweep = { param = \"K\", values = [1, 2, 3] }",
        );
        let cfg = ExperimentConfig::from_toml_str(&swept).unwrap();
        let points = cfg.sweep_points().unwrap();
        assert_eq!(points.len(), 3);
        assert_eq!(points[2].0, "K=3");
        assert!(points.iter().all(|p| p.2.sweep.is_none()));
    }

    #[test]
    fn master_seed_derivation() {
        let text = SMA.replace("seeds = [1, 2]", "master_seed = 9\nruns = 3");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.seeds, (0..3).map(|i| derive_seed(9, i)).collect::<Vec<_>>());
    }

    #[test]
    fn override_value_parsing() {
        assert_eq!(parse_value("3"), Value::Integer(3));
        assert_eq!(parse_value("0.5"), Value::Float(0.5));
        assert_eq!(parse_value("exp"), Value::String("exp".into()));
        assert_eq!(
            parse_value("[1, 5]"),
            Value::Array(vec![Value::Integer(1), Value::Integer(5)])
        );
    }
}
