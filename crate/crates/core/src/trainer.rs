//! A single entry point over every trainer, used by the runner, the
//! stability estimator and the FFI layer.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::{binarize, SparseRatingMatrix};
use crate::model::{train_rsvd, FactorModel, TrainConfig};
use crate::rating_sma::{train_sma_rating, SmaRatingConfig};
use crate::report::{RunReport, Task};
use crate::seed::{derive_seed, stream};
use crate::topn::{train_sma_topn, SmaTopnConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trainer {
    Rsvd(TrainConfig),
    SmaRating(SmaRatingConfig),
    Topn(SmaTopnConfig),
}

impl Trainer {
    pub fn name(&self) -> &'static str {
        match self {
            Trainer::Rsvd(_) => "rsvd",
            Trainer::SmaRating(_) => "sma_rating",
            Trainer::Topn(c) => c.mode.trainer_name(),
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Trainer::Rsvd(_) | Trainer::SmaRating(_) => Task::Rating,
            Trainer::Topn(_) => Task::Topn,
        }
    }

    pub fn base(&self) -> &TrainConfig {
        match self {
            Trainer::Rsvd(c) => c,
            Trainer::SmaRating(c) => &c.base,
            Trainer::Topn(c) => &c.base,
        }
    }

    pub fn base_mut(&mut self) -> &mut TrainConfig {
        match self {
            Trainer::Rsvd(c) => c,
            Trainer::SmaRating(c) => &mut c.base,
            Trainer::Topn(c) => &mut c.base,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Trainer {
        let mut t = self.clone();
        t.base_mut().seed = seed;
        t
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Trainer::Rsvd(c) => c.validate(),
            Trainer::SmaRating(c) => c.validate(),
            Trainer::Topn(c) => c.validate(),
        }
    }

    /// Trains on `train`, evaluating on `test` when given. Top-N trainers
    /// binarize both sides first.
    pub fn train(
        &self,
        train: &SparseRatingMatrix,
        test: Option<&SparseRatingMatrix>,
    ) -> Result<(FactorModel, RunReport)> {
        match self {
            Trainer::Rsvd(c) => train_rsvd(train, c, test),
            Trainer::SmaRating(c) => train_sma_rating(train, c, test),
            Trainer::Topn(c) => {
                let test = test.map(binarize);
                train_sma_topn(&binarize(train), c, test.as_ref())
            }
        }
    }
}

/// Split seed and training seed for one run seed.
pub fn run_seeds(seed: u64) -> (u64, u64) {
    (seed, derive_seed(seed, stream::TRAIN))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn with_seed_only_touches_seed() {
        let t = Trainer::SmaRating(SmaRatingConfig::default());
        let s = t.with_seed(42);
        assert_eq!(s.base().seed, 42);
        assert_eq!(s.base().rank, t.base().rank);
        assert_eq!(s.name(), "sma_rating");
        assert_eq!(Trainer::Topn(SmaTopnConfig::default()).task(), Task::Topn);
    }

    #[test]
    fn run_seeds_are_distinct() {
        let (a, b) = run_seeds(7);
        assert_eq!(a, 7);
        assert_ne!(a, b);
    }
}
