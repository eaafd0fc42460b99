//! Stable rating-prediction trainer.
//!
//! A baseline model ranks the training entries by residual. Entries predicted
//! at least as well as the baseline RMSE are sampled into `Ω′` with
//! probability `p`, the rest with `1 - p`. `Ω′` is dealt into `K` parts
//! `ω_k`, and each hard set `Ω_k = Ω − ω_k` contributes its own MSE term to
//! the objective:
//!
//! ```text
//! λ₀·MSE_Ω + Σ_k λ_k·MSE_{Ω_k} + μ₁‖U‖² + μ₂‖V‖²
//! ```
//!
//! SGD visits each observed entry once per epoch with its residual scaled by
//! `(λ₀ + Σ_{k: e ∈ Ω_k} λ_k·|Ω|/|Ω_k|) / Σλ`, so that `λ_{k≥1} = 0` is
//! exactly the regularized-SVD update.

use std::fmt::Write as _;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SparseRatingMatrix;
use crate::model::{rmse, run_rating_sgd, train_rsvd, EntryWeights, FactorModel, RatingRun, TrainConfig};
use crate::report::RunReport;
use crate::seed::{derive_seed, rng_from_seed, stream};

const NO_PART: u32 = u32::MAX;

/// `Ω′` as sorted indices into the training entries, plus the baseline RMSE
/// `D_Ω` the selection was made against.
#[derive(Debug, Clone, PartialEq)]
pub struct EasySelection {
    pub members: Vec<usize>,
    pub baseline_rmse: f64,
    pub seed: u64,
}

pub fn select_easy_entries(
    train: &SparseRatingMatrix,
    baseline: &FactorModel,
    p: f64,
    seed: u64,
) -> Result<EasySelection> {
    if train.is_empty() {
        return Err(Error::EmptySet("training set"));
    }
    if !(p > 0.5 && p <= 1.0) {
        return Err(Error::config("p", format!("must lie in (0.5, 1], got {p}")));
    }
    let entries = train.entries();
    let d_omega = rmse(baseline, entries)?;
    let mut rng = rng_from_seed(seed);
    let members = entries
        .iter()
        .enumerate()
        .filter_map(|(idx, e)| {
            // ρ on (0, 1] so that p = 1 keeps every easy entry and no hard one
            let rho = 1.0 - rng.gen::<f64>();
            let easy = (e.value - baseline.predict_entry(e)).abs() <= d_omega;
            let threshold = if easy { p } else { 1.0 - p };
            (rho <= threshold).then_some(idx)
        })
        .collect();
    Ok(EasySelection {
        members,
        baseline_rmse: d_omega,
        seed,
    })
}

/// Partition of `Ω′` into parts `ω_k` and the derived hard sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetPlan {
    omega_size: usize,
    omega_prime: Vec<usize>,
    parts: Vec<Vec<usize>>,
    part_of: Vec<u32>,
    lambdas: Vec<f64>,
    seed: u64,
    baseline_rmse: Option<f64>,
    warnings: Vec<String>,
}

/// Deals a seeded shuffle of `Ω′` round-robin into `k` parts. Parts left empty
/// (`|Ω′| < k`) are dropped together with their λ.
pub fn build_plan(
    train: &SparseRatingMatrix,
    omega_prime: &[usize],
    k: usize,
    lambdas: &[f64],
    seed: u64,
) -> Result<SubsetPlan> {
    let omega_size = train.len();
    if k == 0 {
        return Err(Error::config("K", "subset count must be at least 1"));
    }
    if lambdas.len() != k + 1 {
        return Err(Error::config(
            "lambdas",
            format!("expected {} weights (λ₀..λ_K), got {}", k + 1, lambdas.len()),
        ));
    }
    if lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) || !(lambdas[0] > 0.0) {
        return Err(Error::config("lambdas", "weights must be finite, λ₀ > 0 and λ_k ≥ 0"));
    }
    let mut sorted = omega_prime.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != omega_prime.len() || sorted.last().is_some_and(|&i| i >= omega_size) {
        return Err(Error::InvalidArgument("Ω′ must be a set of valid entry indices".into()));
    }

    let mut shuffled = sorted.clone();
    shuffled.shuffle(&mut rng_from_seed(seed));
    let mut parts = vec![Vec::new(); k];
    for (t, idx) in shuffled.into_iter().enumerate() {
        parts[t % k].push(idx);
    }
    let mut warnings = Vec::new();
    let mut kept_lambdas = vec![lambdas[0]];
    let mut kept_parts = Vec::with_capacity(k);
    for (part, &lambda) in parts.into_iter().zip(&lambdas[1..]) {
        if part.is_empty() {
            continue;
        }
        kept_parts.push(part);
        kept_lambdas.push(lambda);
    }
    if kept_parts.len() < k {
        let msg = format!(
            "|Ω′| = {} is smaller than K = {k}; using {} non-empty parts",
            sorted.len(),
            kept_parts.len()
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    let mut part_of = vec![NO_PART; omega_size];
    for (p, part) in kept_parts.iter_mut().enumerate() {
        part.sort_unstable();
        for &idx in part.iter() {
            part_of[idx] = p as u32;
        }
    }
    for (k, part) in kept_parts.iter().enumerate() {
        if part.len() == omega_size {
            let msg = format!("hard set Ω_{} is empty; its term contributes 0", k + 1);
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(SubsetPlan {
        omega_size,
        omega_prime: sorted,
        parts: kept_parts,
        part_of,
        lambdas: kept_lambdas,
        seed,
        baseline_rmse: None,
        warnings,
    })
}

impl SubsetPlan {
    pub fn omega_size(&self) -> usize {
        self.omega_size
    }

    pub fn omega_prime(&self) -> &[usize] {
        &self.omega_prime
    }

    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }

    /// Part `ω_{k+1}` (zero-based `k`).
    pub fn part(&self, k: usize) -> &[usize] {
        &self.parts[k]
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn baseline_rmse(&self) -> Option<f64> {
        self.baseline_rmse
    }

    pub fn hard_set_len(&self, k: usize) -> usize {
        self.omega_size - self.parts[k].len()
    }

    pub fn in_hard_set(&self, k: usize, idx: usize) -> bool {
        self.part_of[idx] != k as u32
    }

    /// `Ω_{k+1} = Ω − ω_{k+1}` as sorted entry indices.
    pub fn hard_set(&self, k: usize) -> Vec<usize> {
        (0..self.omega_size).filter(|&i| self.in_hard_set(k, i)).collect()
    }

    /// Objective weight of each entry: `λ₀/|Ω| + Σ_{k: e ∈ Ω_k} λ_k/|Ω_k|`.
    pub fn entry_weights(&self) -> Vec<f64> {
        let n = self.omega_size as f64;
        let per_part: Vec<f64> = (0..self.num_parts())
            .map(|k| match self.hard_set_len(k) {
                0 => 0.0,
                len => self.lambdas[k + 1] / len as f64,
            })
            .collect();
        let all: f64 = per_part.iter().sum();
        self.part_of
            .iter()
            .map(|&p| {
                let excluded = if p == NO_PART { 0.0 } else { per_part[p as usize] };
                self.lambdas[0] / n + (all - excluded)
            })
            .collect()
    }

    /// Residual multipliers used by SGD, normalized by `Σλ`. `ratios[k]`
    /// scales the k-th hard-set term (1 for the squared form, `D_Ω/D_{Ω_k}`
    /// for the root form).
    fn training_weights_scaled(&self, ratios: &[f64]) -> Vec<f64> {
        let n = self.omega_size as f64;
        let total: f64 = self.lambdas.iter().sum();
        let terms: Vec<f64> = (0..self.num_parts())
            .map(|k| match self.hard_set_len(k) {
                0 => 0.0,
                len => self.lambdas[k + 1] * (n / len as f64) * ratios[k],
            })
            .collect();
        self.part_of
            .iter()
            .map(|&p| {
                let mut w = self.lambdas[0];
                for (k, t) in terms.iter().enumerate() {
                    if p != k as u32 {
                        w += t;
                    }
                }
                w / total
            })
            .collect()
    }

    pub fn training_weights(&self) -> Vec<f64> {
        self.training_weights_scaled(&vec![1.0; self.num_parts()])
    }

    /// Audit listing: part sizes, λ vector, baseline RMSE and seed.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# subset plan");
        let _ = writeln!(out, "omega_size {}", self.omega_size);
        let _ = writeln!(out, "omega_prime_size {}", self.omega_prime.len());
        match self.baseline_rmse {
            Some(d) => {
                let _ = writeln!(out, "baseline_rmse {d}");
            }
            None => {
                let _ = writeln!(out, "baseline_rmse none");
            }
        }
        let _ = writeln!(out, "seed {}", self.seed);
        let sizes: Vec<String> = self.parts.iter().map(|p| p.len().to_string()).collect();
        let _ = writeln!(out, "part_sizes {}", sizes.join(" "));
        let hard: Vec<String> = (0..self.num_parts())
            .map(|k| self.hard_set_len(k).to_string())
            .collect();
        let _ = writeln!(out, "hard_set_sizes {}", hard.join(" "));
        let lambdas: Vec<String> = self.lambdas.iter().map(|l| l.to_string()).collect();
        let _ = writeln!(out, "lambdas {}", lambdas.join(" "));
        out
    }
}

fn raw_mse(model: &FactorModel, train: &SparseRatingMatrix, indices: impl Iterator<Item = usize>) -> (f64, usize) {
    let entries = train.entries();
    let mut sse = 0.0;
    let mut count = 0;
    for idx in indices {
        let e = &entries[idx];
        let r = e.value - model.score(e.user as usize, e.item as usize);
        sse += r * r;
        count += 1;
    }
    (sse, count)
}

/// `λ₀·MSE_Ω + Σ_k λ_k·MSE_{Ω_k} + μ₁‖U‖² + μ₂‖V‖²` over unclamped scores.
/// Empty hard sets contribute 0.
pub fn sma_objective(
    model: &FactorModel,
    train: &SparseRatingMatrix,
    plan: &SubsetPlan,
    mu_user: f64,
    mu_item: f64,
) -> Result<f64> {
    if train.len() != plan.omega_size {
        return Err(Error::InvalidArgument("plan does not match training set".into()));
    }
    if train.is_empty() {
        return Err(Error::EmptySet("training set"));
    }
    let (sse, n) = raw_mse(model, train, 0..train.len());
    let mut total = plan.lambdas[0] * sse / n as f64;
    for k in 0..plan.num_parts() {
        let (sse_k, n_k) = raw_mse(model, train, (0..train.len()).filter(|&i| plan.in_hard_set(k, i)));
        if n_k > 0 {
            total += plan.lambdas[k + 1] * sse_k / n_k as f64;
        }
    }
    Ok(total + mu_user * model.user_norm_sq() + mu_item * model.item_norm_sq())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveForm {
    /// Weighted sum of per-set MSE terms.
    #[default]
    Squared,
    /// Weighted sum of per-set RMSE terms, linearized with `1/D_{Ω_k}`
    /// normalizers frozen at the start of each epoch.
    Root,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmaRatingConfig {
    pub base: TrainConfig,
    pub subsets: usize,
    pub p: f64,
    /// `λ₀..λ_K`; `None` means equal weights `1/(K+1)`.
    pub lambdas: Option<Vec<f64>>,
    #[serde(default)]
    pub form: ObjectiveForm,
    /// Selection oracle. Trained with `train_rsvd(base)` when absent.
    #[serde(skip)]
    pub baseline: Option<FactorModel>,
}

impl Default for SmaRatingConfig {
    fn default() -> Self {
        SmaRatingConfig {
            base: TrainConfig::default(),
            subsets: 3,
            p: 0.8,
            lambdas: None,
            form: ObjectiveForm::Squared,
            baseline: None,
        }
    }
}

impl SmaRatingConfig {
    pub fn resolved_lambdas(&self) -> Vec<f64> {
        self.lambdas
            .clone()
            .unwrap_or_else(|| vec![1.0 / (self.subsets + 1) as f64; self.subsets + 1])
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.subsets == 0 {
            return Err(Error::config("K", "subset count must be at least 1"));
        }
        if !(self.p > 0.5 && self.p <= 1.0) {
            return Err(Error::config("p", "must lie in (0.5, 1]"));
        }
        let l = self.resolved_lambdas();
        if l.len() != self.subsets + 1 {
            return Err(Error::config(
                "lambdas",
                format!("expected {} values", self.subsets + 1),
            ));
        }
        if l.iter().any(|x| !(*x >= 0.0 && x.is_finite())) || !(l[0] > 0.0) {
            return Err(Error::config("lambdas", "λ₀ must be positive and λ_k non-negative"));
        }
        Ok(())
    }
}

/// Builds the subset plan for `train` from a baseline model.
pub fn plan_from_baseline(
    train: &SparseRatingMatrix,
    cfg: &SmaRatingConfig,
    baseline: &FactorModel,
) -> Result<SubsetPlan> {
    let selection = select_easy_entries(train, baseline, cfg.p, derive_seed(cfg.base.seed, stream::SELECT))?;
    let mut plan = build_plan(
        train,
        &selection.members,
        cfg.subsets,
        &cfg.resolved_lambdas(),
        derive_seed(cfg.base.seed, stream::PARTITION),
    )?;
    plan.baseline_rmse = Some(selection.baseline_rmse);
    Ok(plan)
}

/// Trains the stable rating model. The subset plan is computed once before
/// the first epoch and stays fixed.
pub fn train_sma_rating(
    train: &SparseRatingMatrix,
    cfg: &SmaRatingConfig,
    test: Option<&SparseRatingMatrix>,
) -> Result<(FactorModel, RunReport)> {
    cfg.validate()?;
    let trained;
    let baseline = match &cfg.baseline {
        Some(b) => b,
        None => {
            trained = train_rsvd(train, &cfg.base, None)?.0;
            &trained
        }
    };
    if baseline.num_users() != train.num_users() || baseline.num_items() != train.num_items() {
        return Err(Error::InvalidArgument(
            "baseline model dimensions do not match training data".into(),
        ));
    }
    let plan = plan_from_baseline(train, cfg, baseline)?;
    train_sma_rating_with_plan(train, cfg, &plan, test)
}

pub fn train_sma_rating_with_plan(
    train: &SparseRatingMatrix,
    cfg: &SmaRatingConfig,
    plan: &SubsetPlan,
    test: Option<&SparseRatingMatrix>,
) -> Result<(FactorModel, RunReport)> {
    if plan.omega_size != train.len() {
        return Err(Error::InvalidArgument("plan does not match training set".into()));
    }
    let echo = serde_json::json!({
        "trainer": "sma_rating",
        "train": cfg.base,
        "K": cfg.subsets,
        "p": cfg.p,
        "lambdas": cfg.resolved_lambdas(),
        "form": cfg.form,
        "plan": {
            "omega_prime_size": plan.omega_prime.len(),
            "part_sizes": plan.parts.iter().map(Vec::len).collect::<Vec<_>>(),
            "lambdas": plan.lambdas,
            "baseline_rmse": plan.baseline_rmse,
        },
    });
    let fixed;
    let weights = match cfg.form {
        ObjectiveForm::Squared => {
            fixed = plan.training_weights();
            EntryWeights::Fixed(&fixed)
        }
        ObjectiveForm::Root => EntryWeights::PerEpoch(Box::new(move |model: &FactorModel| {
            let (sse, n) = raw_mse(model, train, 0..train.len());
            let d_omega = (sse / n as f64).sqrt();
            let ratios: Vec<f64> = (0..plan.num_parts())
                .map(|k| {
                    let (sse_k, n_k) = raw_mse(model, train, (0..train.len()).filter(|&i| plan.in_hard_set(k, i)));
                    let d_k = (sse_k / n_k.max(1) as f64).sqrt();
                    if d_k > 0.0 {
                        d_omega / d_k
                    } else {
                        1.0
                    }
                })
                .collect();
            Ok(plan.training_weights_scaled(&ratios))
        })),
    };
    let (model, mut report) = run_rating_sgd(
        RatingRun {
            trainer: "sma_rating",
            cfg: &cfg.base,
            config_echo: echo,
            initial: None,
        },
        train,
        test,
        weights,
    )?;
    report.warnings.extend(plan.warnings.iter().cloned());
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RatingTriple;
    use crate::model::init_model;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid_matrix(m: u64, n: u64, seed: u64) -> SparseRatingMatrix {
        let mut rng = rng_from_seed(seed);
        let triples: Vec<_> = (0..m)
            .flat_map(|u| (0..n).map(move |i| (u, i)))
            .map(|(u, i)| RatingTriple {
                user_raw_id: u,
                item_raw_id: i,
                rating: rng.gen_range(1..=5) as f64,
                timestamp: 0,
            })
            .collect();
        SparseRatingMatrix::from_triples(&triples).unwrap()
    }

    #[test]
    fn p_one_with_exact_baseline_selects_everything() {
        let train = grid_matrix(3, 3, 1);
        // rank-1 exact model of a constant matrix
        let triples: Vec<_> = (0..3u64)
            .flat_map(|u| {
                (0..3u64).map(move |i| RatingTriple {
                    user_raw_id: u,
                    item_raw_id: i,
                    rating: 4.0,
                    timestamp: 0,
                })
            })
            .collect();
        let constant = SparseRatingMatrix::from_triples(&triples).unwrap();
        let exact = FactorModel::from_factors(3, 3, 1, vec![2.0; 3], vec![2.0; 3]).unwrap();
        let sel = select_easy_entries(&constant, &exact, 1.0, 3).unwrap();
        assert_eq!(sel.members, (0..9).collect::<Vec<_>>());
        assert_eq!(sel.baseline_rmse, 0.0);
        assert!(select_easy_entries(&train, &exact, 0.5, 3).is_err());
    }

    #[test]
    fn p_one_excludes_hard_entries() {
        let train = grid_matrix(6, 7, 2);
        let baseline = FactorModel::zeros(6, 7, 1).with_offset(3.0);
        let d = rmse(&baseline, train.entries()).unwrap();
        let sel = select_easy_entries(&train, &baseline, 1.0, 9).unwrap();
        for (idx, e) in train.entries().iter().enumerate() {
            let hard = (e.value - 3.0).abs() > d;
            assert_eq!(sel.members.contains(&idx), !hard);
        }
    }

    #[test]
    fn dealing_sizes() {
        let train = grid_matrix(10, 10, 3);
        let omega_prime: Vec<usize> = (0..10).collect();
        let plan = build_plan(&train, &omega_prime, 3, &[0.25; 4], 1).unwrap();
        let mut sizes: Vec<usize> = (0..3).map(|k| plan.part(k).len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);

        let single = build_plan(&train, &omega_prime, 1, &[0.5, 0.5], 1).unwrap();
        let expected: Vec<usize> = (10..100).collect();
        assert_eq!(single.hard_set(0), expected);
    }

    #[test]
    fn small_omega_prime_drops_empty_parts() {
        let train = grid_matrix(3, 3, 4);
        let plan = build_plan(&train, &[4, 7], 4, &[0.2, 0.1, 0.3, 0.25, 0.15], 5).unwrap();
        assert_eq!(plan.num_parts(), 2);
        assert_eq!(plan.lambdas().len(), 3);
        assert!(!plan.warnings().is_empty());
    }

    #[test]
    fn whole_omega_single_part_has_empty_hard_set() {
        let train = grid_matrix(2, 2, 5);
        let plan = build_plan(&train, &[0, 1, 2, 3], 1, &[0.5, 0.5], 1).unwrap();
        assert_eq!(plan.hard_set_len(0), 0);
        assert!(!plan.warnings().is_empty());
        let model = init_model(2, 2, 2, 1, 0.5);
        let obj = sma_objective(&model, &train, &plan, 0.0, 0.0).unwrap();
        let (sse, n) = raw_mse(&model, &train, 0..4);
        assert_relative_eq!(obj, 0.5 * sse / n as f64, max_relative = 1e-15);
        assert!(plan.training_weights().iter().all(|w| w.is_finite()));
    }

    #[test]
    fn membership_count_is_k_minus_one_or_k() {
        let train = grid_matrix(10, 10, 6);
        let omega_prime: Vec<usize> = (0..100).filter(|i| i % 3 != 0).collect();
        let k = 4;
        let plan = build_plan(&train, &omega_prime, k, &[0.2; 5], 8).unwrap();
        let hard: Vec<Vec<usize>> = (0..k).map(|j| plan.hard_set(j)).collect();
        for idx in 0..100 {
            let count = hard.iter().filter(|h| h.contains(&idx)).count();
            let expected = if omega_prime.contains(&idx) { k - 1 } else { k };
            assert_eq!(count, expected, "entry {idx}");
        }
    }

    #[test]
    fn objective_reductions() {
        let train = grid_matrix(4, 5, 7);
        let omega_prime: Vec<usize> = (0..20).step_by(2).collect();
        let plan = build_plan(&train, &omega_prime, 3, &[1.0, 0.0, 0.0, 0.0], 2).unwrap();
        let model = init_model(4, 5, 3, 2, 1.0);
        let (sse, n) = raw_mse(&model, &train, 0..20);
        assert_relative_eq!(
            sma_objective(&model, &train, &plan, 0.0, 0.0).unwrap(),
            sse / n as f64,
            max_relative = 1e-14
        );
        assert!(plan.training_weights().iter().all(|&w| w == 1.0));

        // a model reproducing the data exactly
        let triples: Vec<_> = (0..4u64)
            .flat_map(|u| {
                (0..5u64).map(move |i| RatingTriple {
                    user_raw_id: u,
                    item_raw_id: i,
                    rating: ((u + 1) * (i + 1)) as f64,
                    timestamp: 0,
                })
            })
            .collect();
        let exact_data = SparseRatingMatrix::from_triples(&triples).unwrap();
        let exact =
            FactorModel::from_factors(4, 5, 1, vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let plan = build_plan(&exact_data, &omega_prime, 3, &[0.25; 4], 2).unwrap();
        assert_eq!(sma_objective(&exact, &exact_data, &plan, 0.0, 0.0).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn plan_invariants(seed in any::<u64>(), k in 1usize..6, keep in 0.0f64..1.0) {
            let train = grid_matrix(6, 8, seed);
            let mut rng = rng_from_seed(seed ^ 1);
            let omega_prime: Vec<usize> = (0..48).filter(|_| rng.gen::<f64>() < keep).collect();
            let plan = build_plan(&train, &omega_prime, k, &vec![1.0 / (k + 1) as f64; k + 1], seed).unwrap();
            let mut union: Vec<usize> = (0..plan.num_parts()).flat_map(|j| plan.part(j).to_vec()).collect();
            let total = union.len();
            union.sort_unstable();
            union.dedup();
            prop_assert_eq!(total, union.len());
            prop_assert_eq!(&union, &omega_prime);
            for j in 0..plan.num_parts() {
                let expected: Vec<usize> = (0..48).filter(|i| !plan.part(j).contains(i)).collect();
                prop_assert_eq!(plan.hard_set(j), expected);
            }
            let sizes: Vec<usize> = (0..plan.num_parts()).map(|j| plan.part(j).len()).collect();
            if let (Some(lo), Some(hi)) = (sizes.iter().min(), sizes.iter().max()) {
                prop_assert!(hi - lo <= 1);
            }
        }

        #[test]
        fn weight_identity(seed in any::<u64>(), k in 1usize..5) {
            let train = grid_matrix(5, 6, seed);
            let model = init_model(5, 6, 2, seed, 1.5);
            let mut rng = rng_from_seed(seed ^ 2);
            let omega_prime: Vec<usize> = (0..30).filter(|_| rng.gen::<f64>() < 0.6).collect();
            let lambdas: Vec<f64> = (0..=k).map(|_| rng.gen_range(0.1..1.0)).collect();
            let plan = build_plan(&train, &omega_prime, k, &lambdas, seed).unwrap();
            let c = plan.entry_weights();
            let weighted: f64 = train.entries().iter().zip(&c).map(|(e, w)| {
                let r = e.value - model.score(e.user as usize, e.item as usize);
                w * r * r
            }).sum();
            let obj = sma_objective(&model, &train, &plan, 0.0, 0.0).unwrap();
            prop_assert!((weighted - obj).abs() <= 1e-12 * obj.abs());
        }
    }
}
