//! Stable matrix approximation for collaborative filtering.
//!
//! Low-rank trainers for rating prediction and top-N recommendation whose
//! objectives add extra loss terms over hard-to-predict entry subsets, plus
//! the metrics, stability estimator and experiment runner around them.

// Range checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod rating_sma;
pub mod report;
pub mod runner;
pub mod seed;
pub mod topn;
pub mod trainer;

pub use error::{Error, Result};
pub use ingest::{load_movielens, split_train_test, Format, SparseRatingMatrix, SplitPair};
pub use model::{FactorModel, TrainConfig};
pub use rating_sma::SmaRatingConfig;
pub use report::{RunReport, Task};
pub use topn::{SmaTopnConfig, SurrogateLoss, TopnMode};
pub use trainer::Trainer;
