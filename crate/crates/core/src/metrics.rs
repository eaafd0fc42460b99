//! Evaluation: top-N ranking metrics, generalization gap and the empirical
//! stability estimator.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{split_train_test, SparseRatingMatrix};
use crate::model::FactorModel;
use crate::report::{RunReport, Task};
use crate::seed::derive_seed;
use crate::trainer::{run_seeds, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTopN {
    pub user: u32,
    pub items: Vec<u32>,
    pub hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopNResult {
    pub n: usize,
    pub per_user: Vec<UserTopN>,
    pub precision_at: f64,
    pub ndcg_at: f64,
    pub users_evaluated: usize,
    /// Users with relevant items but no candidate items left to rank.
    pub users_skipped: usize,
    /// Evaluated users with fewer than `n` candidates.
    pub users_short: usize,
}

/// Orders by descending score, ties by ascending item index.
#[inline]
fn rank_cmp(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Top `n` items for `user` among those not listed in `excluded` (sorted).
pub fn rank_items(model: &FactorModel, user: usize, excluded: &[u32], n: usize) -> Vec<u32> {
    let mut scored: Vec<(f64, u32)> = Vec::with_capacity(model.num_items());
    let mut skip = excluded.iter().peekable();
    for j in 0..model.num_items() as u32 {
        while skip.peek().is_some_and(|&&x| x < j) {
            skip.next();
        }
        if skip.peek() == Some(&&j) {
            continue;
        }
        scored.push((model.score(user, j as usize), j));
    }
    let n = n.min(scored.len());
    if n == 0 {
        return Vec::new();
    }
    if n < scored.len() {
        scored.select_nth_unstable_by(n - 1, rank_cmp);
        scored.truncate(n);
    }
    scored.sort_unstable_by(rank_cmp);
    scored.into_iter().map(|(_, j)| j).collect()
}

fn discount(pos: usize) -> f64 {
    1.0 / ((pos + 2) as f64).log2()
}

fn user_ndcg(list: &[u32], relevant: &[u32], n: usize) -> f64 {
    let dcg: f64 = list
        .iter()
        .enumerate()
        .filter(|(_, j)| relevant.binary_search(j).is_ok())
        .map(|(pos, _)| discount(pos))
        .sum();
    let idcg: f64 = (0..n.min(relevant.len())).map(discount).sum();
    dcg / idcg
}

/// Precision@N and NDCG@N for every `n` in `ns`, ranking once per user.
///
/// `relevant[u]` and `excluded[u]` are sorted item lists. Users with no
/// relevant items are not evaluated.
pub fn evaluate_top_n(
    model: &FactorModel,
    excluded: Option<&[Vec<u32>]>,
    relevant: &[Vec<u32>],
    ns: &[usize],
) -> Result<Vec<TopNResult>> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let max_n = *ns.iter().max().expect("non-empty");
    let lists: Vec<Option<(u32, Vec<u32>, usize)>> = (0..relevant.len())
        .into_par_iter()
        .map(|u| {
            if relevant[u].is_empty() {
                return None;
            }
            let excl: &[u32] = excluded.map_or(&[], |e| &e[u]);
            let candidates = model.num_items() - excl.len();
            Some((u as u32, rank_items(model, u, excl, max_n), candidates))
        })
        .collect();

    let mut results = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut per_user = Vec::new();
        let (mut p_sum, mut g_sum) = (0.0, 0.0);
        let (mut skipped, mut short) = (0, 0);
        for (user, list, candidates) in lists.iter().flatten() {
            if *candidates == 0 {
                skipped += 1;
                continue;
            }
            if *candidates < n {
                short += 1;
            }
            let rel = &relevant[*user as usize];
            let top = &list[..n.min(list.len())];
            let hits = top.iter().filter(|j| rel.binary_search(j).is_ok()).count();
            p_sum += hits as f64 / n as f64;
            g_sum += user_ndcg(top, rel, n);
            per_user.push(UserTopN {
                user: *user,
                items: top.to_vec(),
                hits,
            });
        }
        let evaluated = per_user.len();
        let mean = |s: f64| if evaluated == 0 { 0.0 } else { s / evaluated as f64 };
        results.push(TopNResult {
            n,
            per_user,
            precision_at: mean(p_sum),
            ndcg_at: mean(g_sum),
            users_evaluated: evaluated,
            users_skipped: skipped,
            users_short: short,
        });
    }
    Ok(results)
}

fn held_out_eval(
    model: &FactorModel,
    train: &SparseRatingMatrix,
    test: &SparseRatingMatrix,
    n: usize,
) -> Result<TopNResult> {
    if test.is_empty() {
        return Err(Error::EmptySet("test set"));
    }
    if model.num_users() != train.num_users() || model.num_items() != train.num_items() {
        return Err(Error::InvalidArgument("model dimensions do not match data".into()));
    }
    let excluded = train.items_by_user();
    let relevant = test.items_by_user();
    Ok(evaluate_top_n(model, Some(&excluded), &relevant, &[n])?.remove(0))
}

/// Precision@N over users with at least one test item, ranking all items the
/// user has not rated in training. The denominator is always `N`.
pub fn precision_at_n(
    model: &FactorModel,
    train: &SparseRatingMatrix,
    test: &SparseRatingMatrix,
    n: usize,
) -> Result<TopNResult> {
    held_out_eval(model, train, test, n)
}

/// NDCG@N with binary relevance; the ideal DCG places `min(N, |I_u|)`
/// relevant items at the top.
pub fn ndcg_at_n(
    model: &FactorModel,
    train: &SparseRatingMatrix,
    test: &SparseRatingMatrix,
    n: usize,
) -> Result<TopNResult> {
    held_out_eval(model, train, test, n)
}

/// `|test − train|` of the task's gap metric in the report's final metrics.
pub fn generalization_gap(report: &RunReport) -> Result<f64> {
    let key = report.task.gap_metric();
    let train = report
        .metric(&format!("train_{key}"))
        .ok_or_else(|| Error::Report(format!("missing train_{key}")))?;
    let test = report
        .metric(&format!("test_{key}"))
        .ok_or_else(|| Error::Report(format!("missing test_{key}")))?;
    Ok((test - train).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRun {
    pub run_index: usize,
    pub seed: u64,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub gap: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityEstimate {
    pub epsilon: f64,
    pub n_runs: usize,
    pub successes: usize,
    pub probability: f64,
    pub diverged_runs: usize,
    pub runs: Vec<StabilityRun>,
}

impl StabilityEstimate {
    pub fn per_run_gaps(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.gap).collect()
    }

    /// Same runs judged against a different `epsilon`.
    pub fn with_epsilon(&self, epsilon: f64) -> StabilityEstimate {
        let successes = self.runs.iter().filter(|r| r.gap < epsilon).count();
        StabilityEstimate {
            epsilon,
            successes,
            probability: successes as f64 / self.n_runs as f64,
            ..self.clone()
        }
    }

    /// CSV with columns `run_index,seed,train_rmse,test_rmse,gap`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "run_index,seed,train_rmse,test_rmse,gap").map_err(io)?;
        for r in &self.runs {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.run_index, r.seed, r.train_rmse, r.test_rmse, r.gap
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityOptions {
    pub epsilon: f64,
    pub n_runs: usize,
    pub seed: u64,
    pub ratio: f64,
    /// Use `seed` itself for every run instead of deriving one per run.
    pub fixed_seed: bool,
}

/// Empirical `Pr[|test RMSE − train RMSE| < ε]` over `n_runs` fresh random
/// splits. A diverged run counts as a failure with an infinite gap.
pub fn stability_estimate(
    data: &SparseRatingMatrix,
    trainer: &Trainer,
    opts: &StabilityOptions,
) -> Result<StabilityEstimate> {
    if opts.n_runs < 2 {
        return Err(Error::InvalidArgument("stability needs at least 2 runs".into()));
    }
    if trainer.task() != Task::Rating {
        return Err(Error::InvalidArgument(
            "stability estimation needs a rating trainer".into(),
        ));
    }
    if !(opts.epsilon >= 0.0) {
        return Err(Error::InvalidArgument("epsilon must be non-negative".into()));
    }
    let runs: Vec<Result<StabilityRun>> = (0..opts.n_runs)
        .into_par_iter()
        .map(|t| {
            let seed = if opts.fixed_seed {
                opts.seed
            } else {
                derive_seed(opts.seed, t as u64)
            };
            let (split_seed, train_seed) = run_seeds(seed);
            let split = split_train_test(data, opts.ratio, split_seed)?;
            match trainer.with_seed(train_seed).train(&split.train, Some(&split.test)) {
                Ok((_, report)) => {
                    let train_rmse = report.metric("train_rmse").unwrap_or(f64::NAN);
                    let test_rmse = report.metric("test_rmse").unwrap_or(f64::NAN);
                    Ok(StabilityRun {
                        run_index: t,
                        seed,
                        train_rmse,
                        test_rmse,
                        gap: (test_rmse - train_rmse).abs(),
                        diverged: false,
                    })
                }
                Err(Error::Diverged { .. }) => Ok(StabilityRun {
                    run_index: t,
                    seed,
                    train_rmse: f64::NAN,
                    test_rmse: f64::NAN,
                    gap: f64::INFINITY,
                    diverged: true,
                }),
                Err(e) => Err(e),
            }
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let diverged_runs = runs.iter().filter(|r| r.diverged).count();
    let successes = runs.iter().filter(|r| r.gap < opts.epsilon).count();
    Ok(StabilityEstimate {
        epsilon: opts.epsilon,
        n_runs: opts.n_runs,
        successes,
        probability: successes as f64 / opts.n_runs as f64,
        diverged_runs,
        runs,
    })
}
