//! Stable top-N trainer over the full binary grid.
//!
//! Observed training cells are positives (`+1`), every other cell of the
//! `m x n` grid is a negative (`-1`). One epoch is one pass over all `m·n`
//! cells in a seeded shuffled order. Each cell's surrogate-loss derivative is
//! scaled by `W_ij·(λ₀ + [(i,j) ∈ Ω′]·λ₁·|grid|/|Ω′|)`; the extra subset
//! `Ω′` is refreshed before every epoch from the previous epoch's model.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SparseRatingMatrix;
use crate::metrics::evaluate_top_n;
use crate::model::{dot, ConvergenceCheck, FactorModel, TrainConfig};
use crate::report::{EpochRow, RunReport, Task};
use crate::seed::{derive_seed, rng_from_seed, stream};

/// Upper bound applied to the exponent `-r̂·r` of the exponential loss.
pub const EXP_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurrogateLoss {
    /// `(r̂ − r)²`
    Mse,
    /// `ln(1 + exp(−r̂·r))`
    Log,
    /// `exp(−r̂·r)`
    Exp,
}

impl SurrogateLoss {
    /// Loss value and derivative with respect to the prediction.
    #[inline]
    pub fn eval(self, pred: f64, label: f64) -> (f64, f64) {
        match self {
            SurrogateLoss::Mse => {
                let d = pred - label;
                (d * d, 2.0 * d)
            }
            SurrogateLoss::Log => {
                let z = -pred * label;
                // softplus(z) and its derivative sigmoid(z), both overflow-free
                let value = z.max(0.0) + (-z.abs()).exp().ln_1p();
                let sigma = if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let ez = z.exp();
                    ez / (1.0 + ez)
                };
                (value, -label * sigma)
            }
            SurrogateLoss::Exp => {
                let e = (-pred * label).min(EXP_CLAMP).exp();
                (e, -label * e)
            }
        }
    }
}

impl FromStr for SurrogateLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(SurrogateLoss::Mse),
            "log" => Ok(SurrogateLoss::Log),
            "exp" => Ok(SurrogateLoss::Exp),
            other => Err(Error::config(
                "loss",
                format!("unknown surrogate `{other}` (mse, log, exp)"),
            )),
        }
    }
}

impl fmt::Display for SurrogateLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurrogateLoss::Mse => "mse",
            SurrogateLoss::Log => "log",
            SurrogateLoss::Exp => "exp",
        })
    }
}

/// Free-function form of [`SurrogateLoss::eval`].
pub fn surrogate(loss: SurrogateLoss, pred: f64, label: f64) -> (f64, f64) {
    loss.eval(pred, label)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub positive: f64,
    pub negative: f64,
}

impl WeightScheme {
    #[inline]
    pub fn weight(&self, label: f64) -> f64 {
        if label > 0.0 {
            self.positive
        } else {
            self.negative
        }
    }
}

impl Default for WeightScheme {
    fn default() -> Self {
        WeightScheme {
            positive: 1.0,
            negative: 0.03,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopnMode {
    /// `Ω′` = cells whose prediction lies in `[−γ, γ]`.
    SmaBoundary,
    /// `Ω′` = uniform random cells, as many in expectation as the boundary
    /// rule would pick from the same model.
    SmaRandom,
    /// No extra subset: plain weighted matrix approximation.
    Wma,
}

impl FromStr for TopnMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sma_boundary" | "sma_topn_boundary" | "boundary" => Ok(TopnMode::SmaBoundary),
            "sma_random" | "sma_topn_random" | "random" => Ok(TopnMode::SmaRandom),
            "wma" => Ok(TopnMode::Wma),
            other => Err(Error::config("mode", format!("unknown top-N mode `{other}`"))),
        }
    }
}

impl TopnMode {
    pub fn trainer_name(self) -> &'static str {
        match self {
            TopnMode::SmaBoundary => "sma_topn_boundary",
            TopnMode::SmaRandom => "sma_topn_random",
            TopnMode::Wma => "wma",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmaTopnConfig {
    pub base: TrainConfig,
    pub loss: SurrogateLoss,
    pub weights: WeightScheme,
    pub gamma: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub mode: TopnMode,
    /// Evaluate Precision@10 every this many epochs (0 = final model only).
    pub eval_every: usize,
}

impl Default for SmaTopnConfig {
    fn default() -> Self {
        SmaTopnConfig {
            base: TrainConfig {
                rank: 100,
                lr: 0.001,
                mu_user: 0.001,
                mu_item: 0.001,
                max_epochs: 2000,
                conv_eps: 1e-4,
                seed: 0,
                init_scale: 0.01,
                clamp: None,
                center: false,
            },
            loss: SurrogateLoss::Exp,
            weights: WeightScheme::default(),
            gamma: 0.3,
            lambda0: 1.0,
            lambda1: 1.0,
            mode: TopnMode::SmaBoundary,
            eval_every: 0,
        }
    }
}

impl SmaTopnConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.base.center {
            return Err(Error::config("center", "not supported for top-N training"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("gamma", "must be finite and non-negative"));
        }
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(Error::config("lambda0", "must be positive"));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(Error::config("lambda1", "must be non-negative"));
        }
        if !(self.weights.positive > 0.0 && self.weights.negative > 0.0) {
            return Err(Error::config("w_pos/w_neg", "weights must be positive"));
        }
        Ok(())
    }
}

/// One grid cell with its ±1 label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub user: u32,
    pub item: u32,
    pub label: f64,
}

/// Every cell of the training grid, row-major, observed cells labelled `+1`.
pub fn grid_cells(train_binary: &SparseRatingMatrix) -> impl Iterator<Item = Cell> {
    let n = train_binary.num_items();
    let mask = train_binary.observed_mask();
    (0..mask.len()).map(move |c| Cell {
        user: (c / n) as u32,
        item: (c % n) as u32,
        label: if mask[c] { 1.0 } else { -1.0 },
    })
}

/// `(1/|S|) Σ W_ij·L(R̂_ij, R_ij)` over the given cells.
pub fn weighted_loss(
    model: &FactorModel,
    cells: impl IntoIterator<Item = Cell>,
    weights: &WeightScheme,
    loss: SurrogateLoss,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in cells {
        let pred = model.score(c.user as usize, c.item as usize);
        sum += weights.weight(c.label) * loss.eval(pred, c.label).0;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptySet("cell set"));
    }
    Ok(sum / count as f64)
}

/// Row-major indices `i·n + j` of all cells with prediction in `[−γ, γ]`.
pub fn select_boundary_set(model: &FactorModel, gamma: f64) -> Vec<usize> {
    let n = model.num_items();
    let mut out = Vec::new();
    for i in 0..model.num_users() {
        for j in 0..n {
            if model.score(i, j).abs() <= gamma {
                out.push(i * n + j);
            }
        }
    }
    out
}

/// Result of one read-only pass over the grid.
struct GridPass {
    /// Mean weighted surrogate loss over the grid.
    loss: f64,
    boundary: usize,
}

fn grid_pass(model: &FactorModel, mask: &[bool], cfg: &SmaTopnConfig, in_boundary: &mut [bool]) -> GridPass {
    let n = model.num_items();
    let mut sum = 0.0;
    let mut boundary = 0;
    for i in 0..model.num_users() {
        let u = model.user_row(i);
        for j in 0..n {
            let c = i * n + j;
            let pred = dot(u, model.item_row(j));
            let label = if mask[c] { 1.0 } else { -1.0 };
            sum += cfg.weights.weight(label) * cfg.loss.eval(pred, label).0;
            let inside = pred.abs() <= cfg.gamma;
            in_boundary[c] = inside;
            boundary += inside as usize;
        }
    }
    GridPass {
        loss: sum / mask.len() as f64,
        boundary,
    }
}

pub fn train_sma_topn(
    train_binary: &SparseRatingMatrix,
    cfg: &SmaTopnConfig,
    test: Option<&SparseRatingMatrix>,
) -> Result<(FactorModel, RunReport)> {
    cfg.validate()?;
    if train_binary.is_empty() {
        return Err(Error::EmptySet("training set"));
    }
    if train_binary.entries().iter().any(|e| e.value != 1.0) {
        return Err(Error::InvalidArgument(
            "top-N training expects binarized data (+1 values)".into(),
        ));
    }
    let start = Instant::now();
    let trainer = cfg.mode.trainer_name();
    let base = &cfg.base;
    let (m, n) = (train_binary.num_users(), train_binary.num_items());
    let grid = m * n;
    let mut model = base.init(m, n);
    let mask = train_binary.observed_mask();
    let mut in_subset = vec![false; grid];
    let mut order: Vec<u32> = (0..grid as u32).collect();
    let mut shuffle_rng = rng_from_seed(derive_seed(base.seed, stream::SHUFFLE));
    let mut subset_rng = rng_from_seed(derive_seed(base.seed, stream::SUBSET));

    let echo = serde_json::json!({ "trainer": trainer, "topn": cfg });
    let mut report = RunReport::new(trainer, Task::Topn, base.seed, echo);
    let train_items = train_binary.items_by_user();
    let test_items = test.map(|t| t.items_by_user());
    let mut empty_subset_epochs = 0usize;

    let mut pass = grid_pass(&model, &mask, cfg, &mut in_subset);
    let mut conv = ConvergenceCheck::with_start(base.conv_eps, pass.loss);
    for epoch in 1..=base.max_epochs {
        let subset_size = match cfg.mode {
            TopnMode::Wma => 0,
            TopnMode::SmaBoundary => pass.boundary,
            TopnMode::SmaRandom => {
                let q = pass.boundary as f64 / grid as f64;
                let mut size = 0;
                for flag in in_subset.iter_mut() {
                    *flag = subset_rng.gen::<f64>() < q;
                    size += *flag as usize;
                }
                size
            }
        };
        let subset_boost = if cfg.mode == TopnMode::Wma {
            0.0
        } else if subset_size == 0 {
            empty_subset_epochs += 1;
            0.0
        } else {
            cfg.lambda1 * grid as f64 / subset_size as f64
        };
        let use_subset = cfg.mode != TopnMode::Wma;

        order.shuffle(&mut shuffle_rng);
        let (lr, mu_u, mu_v) = (base.lr, base.mu_user, base.mu_item);
        {
            let rank = base.rank;
            let (uf, vf) = model.factors_mut();
            for &c in &order {
                let c = c as usize;
                let (i, j) = (c / n, c % n);
                let u = &mut uf[i * rank..(i + 1) * rank];
                let v = &mut vf[j * rank..(j + 1) * rank];
                let label = if mask[c] { 1.0 } else { -1.0 };
                let mut scale = cfg.lambda0;
                if use_subset && in_subset[c] {
                    scale += subset_boost;
                }
                let g = cfg.weights.weight(label) * scale * cfg.loss.eval(dot(u, v), label).1;
                for (uk, vk) in u.iter_mut().zip(v.iter_mut()) {
                    let (a, b) = (*uk, *vk);
                    *uk = a - lr * (g * b + mu_u * a);
                    *vk = b - lr * (g * a + mu_v * b);
                }
            }
        }

        pass = grid_pass(&model, &mask, cfg, &mut in_subset);
        if !pass.loss.is_finite() || !model.is_finite() {
            return Err(Error::Diverged {
                trainer: trainer.to_string(),
                epoch,
                value: pass.loss,
            });
        }
        let mut row = EpochRow::new(epoch, pass.loss);
        if use_subset {
            row.subset_size = Some(subset_size);
            row.subset_fraction = Some(subset_size as f64 / grid as f64);
        }
        if cfg.eval_every > 0 && epoch % cfg.eval_every == 0 {
            if let Some(test_items) = &test_items {
                row.test = Some(evaluate_top_n(&model, Some(&train_items), test_items, &[10])?[0].precision_at);
            }
            row.train_precision10 = Some(evaluate_top_n(&model, None, &train_items, &[10])?[0].precision_at);
        }
        report.epochs.push(row);
        if conv.step(pass.loss) {
            report.converged_epoch = Some(epoch);
            break;
        }
    }
    if empty_subset_epochs > 0 {
        let msg = format!("Ω′ was empty in {empty_subset_epochs} epoch(s); the λ₁ term was skipped there");
        warn!("{msg}");
        report.warnings.push(msg);
    }

    report.final_metrics.insert("train_loss".into(), pass.loss);
    let train_eval = evaluate_top_n(&model, None, &train_items, &[10])?;
    report
        .final_metrics
        .insert("train_precision@10".into(), train_eval[0].precision_at);
    if let Some(test_items) = &test_items {
        let ns = [1, 5, 10, 20];
        for res in evaluate_top_n(&model, Some(&train_items), test_items, &ns)? {
            report
                .final_metrics
                .insert(format!("test_precision@{}", res.n), res.precision_at);
            report.final_metrics.insert(format!("test_ndcg@{}", res.n), res.ndcg_at);
        }
    }
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok((model, report))
}
