//! Factor model, prediction, RMSE and the regularized-SVD SGD trainer.
//!
//! The rating-task SGD loop here is shared with the stable rating trainer,
//! which only changes the per-entry residual weights.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Entry, SparseRatingMatrix};
use crate::report::{EpochRow, RunReport, Task};
use crate::seed::{derive_seed, rng_from_seed, stream};

/// Low-rank model `R̂ = U Vᵀ (+ offset)`, factors stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    m: usize,
    n: usize,
    rank: usize,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
    clamp: Option<(f64, f64)>,
    offset: f64,
    seed: u64,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = c * 4;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in chunks * 4..a.len() {
        s += a[k] * b[k];
    }
    s
}

impl FactorModel {
    pub fn zeros(m: usize, n: usize, rank: usize) -> Self {
        FactorModel {
            m,
            n,
            rank,
            user_factors: vec![0.0; m * rank],
            item_factors: vec![0.0; n * rank],
            clamp: None,
            offset: 0.0,
            seed: 0,
        }
    }

    /// Builds a model from row-major factor matrices.
    pub fn from_factors(
        m: usize,
        n: usize,
        rank: usize,
        user_factors: Vec<f64>,
        item_factors: Vec<f64>,
    ) -> Result<Self> {
        if user_factors.len() != m * rank || item_factors.len() != n * rank {
            return Err(Error::InvalidArgument(format!(
                "factor sizes {}/{} do not match {m}x{rank} and {n}x{rank}",
                user_factors.len(),
                item_factors.len()
            )));
        }
        Ok(FactorModel {
            m,
            n,
            rank,
            user_factors,
            item_factors,
            clamp: None,
            offset: 0.0,
            seed: 0,
        })
    }

    pub fn with_clamp(mut self, clamp: Option<(f64, f64)>) -> Self {
        self.clamp = clamp;
        self
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn num_users(&self) -> usize {
        self.m
    }

    pub fn num_items(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn clamp(&self) -> Option<(f64, f64)> {
        self.clamp
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn user_factors(&self) -> &[f64] {
        &self.user_factors
    }

    pub fn item_factors(&self) -> &[f64] {
        &self.item_factors
    }

    pub fn user_row(&self, i: usize) -> &[f64] {
        &self.user_factors[i * self.rank..(i + 1) * self.rank]
    }

    pub fn item_row(&self, j: usize) -> &[f64] {
        &self.item_factors[j * self.rank..(j + 1) * self.rank]
    }

    /// Mutable user row `i` and item row `j` at once.
    pub(crate) fn rows_mut(&mut self, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
        let r = self.rank;
        (
            &mut self.user_factors[i * r..(i + 1) * r],
            &mut self.item_factors[j * r..(j + 1) * r],
        )
    }

    pub(crate) fn factors_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.user_factors, &mut self.item_factors)
    }

    /// Unclamped score `U_i · V_j + offset`. Panics when out of bounds.
    #[inline]
    pub fn score(&self, i: usize, j: usize) -> f64 {
        dot(self.user_row(i), self.item_row(j)) + self.offset
    }

    #[inline]
    fn clamped(&self, x: f64) -> f64 {
        match self.clamp {
            Some((lo, hi)) => x.clamp(lo, hi),
            None => x,
        }
    }

    /// Prediction for `(i, j)`, clipped to the clamp range when one is set.
    pub fn predict(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.m || j >= self.n {
            return Err(Error::IndexOutOfBounds {
                user: i,
                item: j,
                m: self.m,
                n: self.n,
            });
        }
        Ok(self.clamped(self.score(i, j)))
    }

    #[inline]
    pub(crate) fn predict_entry(&self, e: &Entry) -> f64 {
        self.clamped(self.score(e.user as usize, e.item as usize))
    }

    pub fn is_finite(&self) -> bool {
        self.user_factors
            .iter()
            .chain(&self.item_factors)
            .all(|x| x.is_finite())
    }

    pub fn user_norm_sq(&self) -> f64 {
        self.user_factors.iter().map(|x| x * x).sum()
    }

    pub fn item_norm_sq(&self) -> f64 {
        self.item_factors.iter().map(|x| x * x).sum()
    }

    /// Text serialization, format version 1:
    ///
    /// ```text
    /// sma-model 1
    /// m <m> n <n> rank <r>
    /// clamp <lo> <hi>        (or `clamp none`)
    /// offset <x>
    /// seed <s>
    /// U
    /// <m rows of r values>
    /// V
    /// <n rows of r values>
    /// ```
    ///
    /// Floats use Rust's shortest round-trip representation, so save/load is
    /// exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "sma-model 1");
        let _ = writeln!(out, "m {} n {} rank {}", self.m, self.n, self.rank);
        match self.clamp {
            Some((lo, hi)) => {
                let _ = writeln!(out, "clamp {lo} {hi}");
            }
            None => {
                let _ = writeln!(out, "clamp none");
            }
        }
        let _ = writeln!(out, "offset {}", self.offset);
        let _ = writeln!(out, "seed {}", self.seed);
        for (tag, data, rows) in [("U", &self.user_factors, self.m), ("V", &self.item_factors, self.n)] {
            let _ = writeln!(out, "{tag}");
            for row in 0..rows {
                let vals: Vec<String> = data[row * self.rank..(row + 1) * self.rank]
                    .iter()
                    .map(|x| x.to_string())
                    .collect();
                let _ = writeln!(out, "{}", vals.join(" "));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::ModelFormat(m.to_string());
        let mut lines = text.lines();
        let mut next = || lines.next().ok_or_else(|| bad("unexpected end of file"));
        if next()?.trim() != "sma-model 1" {
            return Err(bad("missing `sma-model 1` header"));
        }
        let dims: Vec<&str> = next()?.split_whitespace().collect();
        if dims.len() != 6 || dims[0] != "m" || dims[2] != "n" || dims[4] != "rank" {
            return Err(bad("malformed dimension line"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad dimension"));
        let (m, n, rank) = (num(dims[1])?, num(dims[3])?, num(dims[5])?);
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let clamp_line: Vec<&str> = next()?.split_whitespace().collect();
        let clamp = match clamp_line.as_slice() {
            ["clamp", "none"] => None,
            ["clamp", lo, hi] => Some((float(lo)?, float(hi)?)),
            _ => return Err(bad("malformed clamp line")),
        };
        let offset = match next()?.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["offset", x] => float(x)?,
            _ => return Err(bad("malformed offset line")),
        };
        let seed = match next()?.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["seed", s] => s.parse::<u64>().map_err(|_| bad("bad seed"))?,
            _ => return Err(bad("malformed seed line")),
        };
        let mut read_block = |tag: &str, rows: usize| -> Result<Vec<f64>> {
            if next()?.trim() != tag {
                return Err(bad("missing factor block tag"));
            }
            let mut data = Vec::with_capacity(rows * rank);
            for _ in 0..rows {
                let line = next()?;
                let before = data.len();
                for tok in line.split_whitespace() {
                    data.push(float(tok)?);
                }
                if data.len() - before != rank {
                    return Err(bad("factor row has wrong length"));
                }
            }
            Ok(data)
        };
        let user_factors = read_block("U", m)?;
        let item_factors = read_block("V", n)?;
        Ok(FactorModel {
            m,
            n,
            rank,
            user_factors,
            item_factors,
            clamp,
            offset,
            seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Factors drawn i.i.d. uniform on `[-scale, scale)`; `scale = 0` gives the
/// zero model.
pub fn init_model(m: usize, n: usize, rank: usize, seed: u64, scale: f64) -> FactorModel {
    let mut rng = rng_from_seed(seed);
    let scale = scale.abs();
    let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale).collect() };
    let user_factors = draw(m * rank);
    let item_factors = draw(n * rank);
    FactorModel {
        m,
        n,
        rank,
        user_factors,
        item_factors,
        clamp: None,
        offset: 0.0,
        seed,
    }
}

pub fn rmse(model: &FactorModel, entries: &[Entry]) -> Result<f64> {
    if entries.is_empty() {
        return Err(Error::EmptySet("entry set"));
    }
    let sse: f64 = entries
        .iter()
        .map(|e| {
            let r = e.value - model.predict_entry(e);
            r * r
        })
        .sum();
    Ok((sse / entries.len() as f64).sqrt())
}

/// Hyperparameters shared by every SGD trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub rank: usize,
    pub lr: f64,
    pub mu_user: f64,
    pub mu_item: f64,
    pub max_epochs: usize,
    pub conv_eps: f64,
    pub seed: u64,
    pub init_scale: f64,
    /// Rating-task prediction range, applied at evaluation time only.
    pub clamp: Option<(f64, f64)>,
    /// Fit around the training mean instead of zero.
    pub center: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rank: 20,
            lr: 0.001,
            mu_user: 0.06,
            mu_item: 0.06,
            max_epochs: 250,
            conv_eps: 1e-4,
            seed: 0,
            init_scale: 0.01,
            clamp: Some((1.0, 5.0)),
            center: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::config("rank", "must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be positive"));
        }
        if !(self.mu_user >= 0.0) {
            return Err(Error::config("mu1", "must be non-negative"));
        }
        if !(self.mu_item >= 0.0) {
            return Err(Error::config("mu2", "must be non-negative"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be at least 1"));
        }
        if !(self.conv_eps >= 0.0) {
            return Err(Error::config("conv_eps", "must be non-negative"));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::config("init_scale", "must be non-negative"));
        }
        if let Some((lo, hi)) = self.clamp {
            if !(lo < hi) {
                return Err(Error::config("clamp", "lower bound must be below upper bound"));
            }
        }
        Ok(())
    }

    pub(crate) fn init(&self, m: usize, n: usize) -> FactorModel {
        init_model(m, n, self.rank, self.seed, self.init_scale).with_clamp(self.clamp)
    }
}

/// Per-entry objective `w (R_ij - u·v)² + μ₁‖u‖² + μ₂‖v‖²`.
pub fn entry_objective(u: &[f64], v: &[f64], value: f64, weight: f64, mu_user: f64, mu_item: f64) -> f64 {
    let e = value - dot(u, v);
    weight * e * e + mu_user * dot(u, u) + mu_item * dot(v, v)
}

/// Analytic gradient of [`entry_objective`] with respect to `u` and `v`.
pub fn entry_gradient(
    u: &[f64],
    v: &[f64],
    value: f64,
    weight: f64,
    mu_user: f64,
    mu_item: f64,
) -> (Vec<f64>, Vec<f64>) {
    let e = value - dot(u, v);
    let gu = u
        .iter()
        .zip(v)
        .map(|(&uk, &vk)| -2.0 * weight * e * vk + 2.0 * mu_user * uk)
        .collect();
    let gv = u
        .iter()
        .zip(v)
        .map(|(&uk, &vk)| -2.0 * weight * e * uk + 2.0 * mu_item * vk)
        .collect();
    (gu, gv)
}

/// One SGD update for a single entry given its (weighted) residual. This is
/// a step of `-lr/2` along [`entry_gradient`].
#[inline]
pub(crate) fn sgd_step(u: &mut [f64], v: &mut [f64], residual: f64, lr: f64, mu_user: f64, mu_item: f64) {
    for (uk, vk) in u.iter_mut().zip(v.iter_mut()) {
        let (a, b) = (*uk, *vk);
        *uk = a + lr * (residual * b - mu_user * a);
        *vk = b + lr * (residual * a - mu_item * b);
    }
}

pub(crate) type WeightFn<'a> = Box<dyn FnMut(&FactorModel) -> Result<Vec<f64>> + 'a>;

/// Per-entry residual weights fed to the rating SGD loop.
pub(crate) enum EntryWeights<'a> {
    Unit,
    Fixed(&'a [f64]),
    /// Recomputed from the model at the start of every epoch.
    PerEpoch(WeightFn<'a>),
}

pub(crate) struct RatingRun<'a> {
    pub trainer: &'a str,
    pub cfg: &'a TrainConfig,
    pub config_echo: serde_json::Value,
    pub initial: Option<FactorModel>,
}

/// Stop rule on the epoch-to-epoch change of a training metric.
///
/// Small random factors start near a saddle where the metric barely moves
/// for several epochs, so the check is armed only after some epoch changes
/// the metric by at least `eps`. `eps = 0` never stops early.
#[derive(Debug, Clone)]
pub(crate) struct ConvergenceCheck {
    eps: f64,
    prev: Option<f64>,
    armed: bool,
}

impl ConvergenceCheck {
    pub(crate) fn new(eps: f64) -> Self {
        Self {
            eps,
            prev: None,
            armed: false,
        }
    }

    pub(crate) fn with_start(eps: f64, start: f64) -> Self {
        Self {
            eps,
            prev: Some(start),
            armed: false,
        }
    }

    /// Records the metric after an epoch; true when training should stop.
    pub(crate) fn step(&mut self, value: f64) -> bool {
        let prev = self.prev.replace(value);
        let Some(prev) = prev else { return false };
        let delta = (prev - value).abs();
        if !self.armed {
            self.armed = delta >= self.eps;
            return false;
        }
        delta < self.eps
    }
}

pub(crate) fn run_rating_sgd(
    run: RatingRun<'_>,
    train: &SparseRatingMatrix,
    test: Option<&SparseRatingMatrix>,
    mut weights: EntryWeights<'_>,
) -> Result<(FactorModel, RunReport)> {
    let cfg = run.cfg;
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySet("training set"));
    }
    let start = Instant::now();
    let mut model = match run.initial {
        Some(m) => m,
        None => cfg.init(train.num_users(), train.num_items()),
    };
    if cfg.center {
        model = model.with_offset(train.mean_value());
    }
    let mut report = RunReport::new(run.trainer, Task::Rating, cfg.seed, run.config_echo);
    let mut rng = rng_from_seed(derive_seed(cfg.seed, stream::SHUFFLE));
    let entries = train.entries();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    let mut conv = ConvergenceCheck::new(cfg.conv_eps);
    let mut epoch_weights: Vec<f64>;

    for epoch in 1..=cfg.max_epochs {
        let w: Option<&[f64]> = match &mut weights {
            EntryWeights::Unit => None,
            EntryWeights::Fixed(w) => Some(w),
            EntryWeights::PerEpoch(f) => {
                epoch_weights = f(&model)?;
                Some(&epoch_weights)
            }
        };
        order.shuffle(&mut rng);
        let offset = model.offset();
        for &idx in &order {
            let e = entries[idx];
            let (u, v) = model.rows_mut(e.user as usize, e.item as usize);
            let mut residual = e.value - offset - dot(u, v);
            if let Some(w) = w {
                residual *= w[idx];
            }
            sgd_step(u, v, residual, cfg.lr, cfg.mu_user, cfg.mu_item);
        }

        let train_rmse = rmse(&model, entries)?;
        if !train_rmse.is_finite() || !model.is_finite() {
            return Err(Error::Diverged {
                trainer: run.trainer.to_string(),
                epoch,
                value: train_rmse,
            });
        }
        let mut row = EpochRow::new(epoch, train_rmse);
        if let Some(test) = test {
            row.test = Some(rmse(&model, test.entries())?);
        }
        report.epochs.push(row);
        if conv.step(train_rmse) {
            report.converged_epoch = Some(epoch);
            break;
        }
    }

    report.final_metrics.insert("train_rmse".into(), rmse(&model, entries)?);
    if let Some(test) = test {
        report
            .final_metrics
            .insert("test_rmse".into(), rmse(&model, test.entries())?);
    }
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok((model, report))
}

/// Regularized SVD: SGD on squared error with L2 penalties over the observed
/// entries, visiting them in a freshly shuffled order every epoch.
pub fn train_rsvd(
    train: &SparseRatingMatrix,
    cfg: &TrainConfig,
    test: Option<&SparseRatingMatrix>,
) -> Result<(FactorModel, RunReport)> {
    let echo = serde_json::json!({ "trainer": "rsvd", "train": cfg });
    run_rating_sgd(
        RatingRun {
            trainer: "rsvd",
            cfg,
            config_echo: echo,
            initial: None,
        },
        train,
        test,
        EntryWeights::Unit,
    )
}

/// Same as [`train_rsvd`] but starting from the given model.
pub fn train_rsvd_from(
    initial: FactorModel,
    train: &SparseRatingMatrix,
    cfg: &TrainConfig,
    test: Option<&SparseRatingMatrix>,
) -> Result<(FactorModel, RunReport)> {
    let echo = serde_json::json!({ "trainer": "rsvd", "train": cfg });
    run_rating_sgd(
        RatingRun {
            trainer: "rsvd",
            cfg,
            config_echo: echo,
            initial: Some(initial),
        },
        train,
        test,
        EntryWeights::Unit,
    )
}
