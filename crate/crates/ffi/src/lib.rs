//! C ABI over `sma-core`.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `sma_*` constructor and released with the matching `*_free` function.
//! Fallible calls return an [`SmaStatus`]; on failure the message is
//! available from [`sma_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sma_core::ingest::{load_movielens, split_train_test, Format, SparseRatingMatrix, SplitPair};
use sma_core::metrics::evaluate_top_n;
use sma_core::model::{rmse, FactorModel, TrainConfig};
use sma_core::rating_sma::SmaRatingConfig;
use sma_core::topn::{SmaTopnConfig, SurrogateLoss, TopnMode, WeightScheme};
use sma_core::{Error, RunReport, Trainer};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Diverged = 5,
    Io = 6,
    OutOfBounds = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmaLoss {
    Mse = 0,
    Log = 1,
    Exp = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmaTopnMode {
    Boundary = 0,
    Random = 1,
    Wma = 2,
}

/// Rating data: the whole dataset or one side of a split.
pub struct SmaDataset(SparseRatingMatrix);

/// A train/test split; its sides are borrowed with `sma_split_train` and
/// `sma_split_test` and stay valid until the split is freed.
pub struct SmaSplit {
    train: SmaDataset,
    test: SmaDataset,
}

pub struct SmaModel(FactorModel);

/// Hyperparameters shared by every trainer.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SmaTrainParams {
    pub rank: usize,
    pub lr: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub max_epochs: usize,
    pub conv_eps: f64,
    pub seed: u64,
    pub init_scale: f64,
    /// Clamp rating predictions to `[clamp_lo, clamp_hi]` when true.
    pub clamp: bool,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SmaTopnParams {
    pub loss: SmaLoss,
    pub mode: SmaTopnMode,
    pub w_pos: f64,
    pub w_neg: f64,
    pub gamma: f64,
    pub lambda0: f64,
    pub lambda1: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> SmaStatus {
    match err {
        Error::Config { .. } => SmaStatus::Config,
        Error::InvalidArgument(_) => SmaStatus::InvalidArgument,
        Error::Diverged { .. } => SmaStatus::Diverged,
        Error::Io { .. } | Error::Report(_) => SmaStatus::Io,
        Error::IndexOutOfBounds { .. } => SmaStatus::OutOfBounds,
        _ => SmaStatus::Data,
    }
}

/// Runs `f`, turning errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), (SmaStatus, String)>) -> SmaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            SmaStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            SmaStatus::Panic
        }
    }
}

fn core<T>(r: sma_core::Result<T>) -> Result<T, (SmaStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (SmaStatus, String) {
    (SmaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SmaStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (SmaStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, (SmaStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<T>(p: *mut *mut T, value: T) {
    *p = Box::into_raw(Box::new(value));
}

fn train_config(p: &SmaTrainParams) -> TrainConfig {
    TrainConfig {
        rank: p.rank,
        lr: p.lr,
        mu_user: p.mu1,
        mu_item: p.mu2,
        max_epochs: p.max_epochs,
        conv_eps: p.conv_eps,
        seed: p.seed,
        init_scale: p.init_scale,
        clamp: p.clamp.then_some((p.clamp_lo, p.clamp_hi)),
        center: false,
    }
}

unsafe fn write_report(report: &RunReport, dst: *mut *mut c_char) -> Result<(), (SmaStatus, String)> {
    if !dst.is_null() {
        let json = core(report.to_json())?;
        *dst = CString::new(json).map_or(ptr::null_mut(), CString::into_raw);
    }
    Ok(())
}

unsafe fn train_with(
    trainer: Trainer,
    train: *const SmaDataset,
    test: *const SmaDataset,
    model: *mut *mut SmaModel,
    report_json: *mut *mut c_char,
) -> SmaStatus {
    guard(|| {
        let train = obj(train, "train")?;
        if model.is_null() {
            return Err(null("model"));
        }
        let test = test.as_ref().map(|t| &t.0);
        let (m, report) = core(trainer.train(&train.0, test))?;
        write_report(&report, report_json)?;
        out(model, SmaModel(m));
        Ok(())
    })
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next `sma_*` call on this thread.
#[no_mangle]
pub extern "C" fn sma_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must come from this library (a report string) and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sma_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Defaults of the rating trainers (rank 20, lr 0.001, μ 0.06, 250 epochs,
/// predictions clamped to [1, 5]).
#[no_mangle]
pub extern "C" fn sma_train_params_default() -> SmaTrainParams {
    let d = TrainConfig::default();
    let (lo, hi) = d.clamp.unwrap_or((1.0, 5.0));
    SmaTrainParams {
        rank: d.rank,
        lr: d.lr,
        mu1: d.mu_user,
        mu2: d.mu_item,
        max_epochs: d.max_epochs,
        conv_eps: d.conv_eps,
        seed: d.seed,
        init_scale: d.init_scale,
        clamp: d.clamp.is_some(),
        clamp_lo: lo,
        clamp_hi: hi,
    }
}

/// Defaults of the top-N trainer. The base parameters are written to `base`
/// unless it is null.
///
/// # Safety
/// `base` must be null or point to a writable `SmaTrainParams`.
#[no_mangle]
pub unsafe extern "C" fn sma_topn_params_default(base: *mut SmaTrainParams) -> SmaTopnParams {
    let d = SmaTopnConfig::default();
    if let Some(b) = base.as_mut() {
        *b = SmaTrainParams {
            rank: d.base.rank,
            lr: d.base.lr,
            mu1: d.base.mu_user,
            mu2: d.base.mu_item,
            max_epochs: d.base.max_epochs,
            conv_eps: d.base.conv_eps,
            seed: d.base.seed,
            init_scale: d.base.init_scale,
            clamp: false,
            clamp_lo: 0.0,
            clamp_hi: 0.0,
        };
    }
    SmaTopnParams {
        loss: SmaLoss::Exp,
        mode: SmaTopnMode::Boundary,
        w_pos: d.weights.positive,
        w_neg: d.weights.negative,
        gamma: d.gamma,
        lambda0: d.lambda0,
        lambda1: d.lambda1,
    }
}

/// Loads a MovieLens ratings file; `format` is `"ml100k"`, `"ml1m"` or `"ml10m"`.
///
/// # Safety
/// `path` and `format` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sma_dataset_load(
    path: *const c_char,
    format: *const c_char,
    out_ds: *mut *mut SmaDataset,
) -> SmaStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let format: Format = core(str_arg(format, "format")?.parse())?;
        if out_ds.is_null() {
            return Err(null("out"));
        }
        let m = core(load_movielens(path, format))?;
        out(out_ds, SmaDataset(m));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a valid dataset handle.
#[no_mangle]
pub unsafe extern "C" fn sma_dataset_num_users(ds: *const SmaDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.num_users())
}

/// # Safety
/// `ds` must be null or a valid dataset handle.
#[no_mangle]
pub unsafe extern "C" fn sma_dataset_num_items(ds: *const SmaDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.num_items())
}

/// Number of observed ratings.
///
/// # Safety
/// `ds` must be null or a valid dataset handle.
#[no_mangle]
pub unsafe extern "C" fn sma_dataset_len(ds: *const SmaDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `ds` must be null or a handle from `sma_dataset_load` not freed before.
/// Split sides must not be passed here.
#[no_mangle]
pub unsafe extern "C" fn sma_dataset_free(ds: *mut SmaDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Seeded random split with `ratio` of the ratings on the training side.
///
/// # Safety
/// `ds` must be a valid dataset handle and `out_split` writable.
#[no_mangle]
pub unsafe extern "C" fn sma_split(
    ds: *const SmaDataset,
    ratio: f64,
    seed: u64,
    out_split: *mut *mut SmaSplit,
) -> SmaStatus {
    guard(|| {
        let ds = obj(ds, "dataset")?;
        if out_split.is_null() {
            return Err(null("out"));
        }
        let SplitPair { train, test, .. } = core(split_train_test(&ds.0, ratio, seed))?;
        out(
            out_split,
            SmaSplit {
                train: SmaDataset(train),
                test: SmaDataset(test),
            },
        );
        Ok(())
    })
}

/// # Safety
/// `split` must be null or a valid split handle.
#[no_mangle]
pub unsafe extern "C" fn sma_split_train(split: *const SmaSplit) -> *const SmaDataset {
    split.as_ref().map_or(ptr::null(), |s| &s.train)
}

/// # Safety
/// `split` must be null or a valid split handle.
#[no_mangle]
pub unsafe extern "C" fn sma_split_test(split: *const SmaSplit) -> *const SmaDataset {
    split.as_ref().map_or(ptr::null(), |s| &s.test)
}

/// # Safety
/// `split` must be null or a handle from `sma_split` not freed before.
#[no_mangle]
pub unsafe extern "C" fn sma_split_free(split: *mut SmaSplit) {
    if !split.is_null() {
        drop(Box::from_raw(split));
    }
}

/// Trains regularized SVD. `test` may be null. When `report_json` is not
/// null it receives the run report, to be released with `sma_string_free`.
///
/// # Safety
/// Handles must be valid; `params` and `out_model` must be non-null.
#[no_mangle]
pub unsafe extern "C" fn sma_train_rsvd(
    train: *const SmaDataset,
    test: *const SmaDataset,
    params: *const SmaTrainParams,
    out_model: *mut *mut SmaModel,
    report_json: *mut *mut c_char,
) -> SmaStatus {
    let Some(p) = params.as_ref() else {
        set_last_error("params is null");
        return SmaStatus::NullPointer;
    };
    train_with(Trainer::Rsvd(train_config(p)), train, test, out_model, report_json)
}

/// Trains the stable rating model with `k` subsets, selection probability
/// `p` and equal λ weights. The RSVD baseline is trained internally.
///
/// # Safety
/// As for [`sma_train_rsvd`].
#[no_mangle]
pub unsafe extern "C" fn sma_train_sma_rating(
    train: *const SmaDataset,
    test: *const SmaDataset,
    params: *const SmaTrainParams,
    k: usize,
    p: f64,
    out_model: *mut *mut SmaModel,
    report_json: *mut *mut c_char,
) -> SmaStatus {
    let Some(base) = params.as_ref() else {
        set_last_error("params is null");
        return SmaStatus::NullPointer;
    };
    let cfg = SmaRatingConfig {
        base: train_config(base),
        subsets: k,
        p,
        ..SmaRatingConfig::default()
    };
    train_with(Trainer::SmaRating(cfg), train, test, out_model, report_json)
}

/// Trains a top-N model. Ratings are binarized internally.
///
/// # Safety
/// As for [`sma_train_rsvd`]; `topn` must be non-null.
#[no_mangle]
pub unsafe extern "C" fn sma_train_topn(
    train: *const SmaDataset,
    test: *const SmaDataset,
    params: *const SmaTrainParams,
    topn: *const SmaTopnParams,
    out_model: *mut *mut SmaModel,
    report_json: *mut *mut c_char,
) -> SmaStatus {
    let (Some(base), Some(t)) = (params.as_ref(), topn.as_ref()) else {
        set_last_error("params is null");
        return SmaStatus::NullPointer;
    };
    let cfg = SmaTopnConfig {
        base: train_config(base),
        loss: match t.loss {
            SmaLoss::Mse => SurrogateLoss::Mse,
            SmaLoss::Log => SurrogateLoss::Log,
            SmaLoss::Exp => SurrogateLoss::Exp,
        },
        weights: WeightScheme {
            positive: t.w_pos,
            negative: t.w_neg,
        },
        gamma: t.gamma,
        lambda0: t.lambda0,
        lambda1: t.lambda1,
        mode: match t.mode {
            SmaTopnMode::Boundary => TopnMode::SmaBoundary,
            SmaTopnMode::Random => TopnMode::SmaRandom,
            SmaTopnMode::Wma => TopnMode::Wma,
        },
        eval_every: 0,
    };
    train_with(Trainer::Topn(cfg), train, test, out_model, report_json)
}

/// Prediction for dense indices `(user, item)`, clamped for rating models.
///
/// # Safety
/// `model` must be a valid handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn sma_model_predict(
    model: *const SmaModel,
    user: usize,
    item: usize,
    value: *mut f64,
) -> SmaStatus {
    guard(|| {
        let model = obj(model, "model")?;
        if value.is_null() {
            return Err(null("value"));
        }
        *value = core(model.0.predict(user, item))?;
        Ok(())
    })
}

/// RMSE of the model over every rating in `ds`.
///
/// # Safety
/// Handles must be valid and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn sma_model_rmse(model: *const SmaModel, ds: *const SmaDataset, value: *mut f64) -> SmaStatus {
    guard(|| {
        let (model, ds) = (obj(model, "model")?, obj(ds, "dataset")?);
        if value.is_null() {
            return Err(null("value"));
        }
        *value = core(rmse(&model.0, ds.0.entries()))?;
        Ok(())
    })
}

/// Precision@N and NDCG@N on `test`, ranking items not rated in `train`.
/// Either output pointer may be null.
///
/// # Safety
/// Handles must be valid.
#[no_mangle]
pub unsafe extern "C" fn sma_model_top_n(
    model: *const SmaModel,
    train: *const SmaDataset,
    test: *const SmaDataset,
    n: usize,
    precision: *mut f64,
    ndcg: *mut f64,
) -> SmaStatus {
    guard(|| {
        let model = obj(model, "model")?;
        let (train, test) = (obj(train, "train")?, obj(test, "test")?);
        let res = core(evaluate_top_n(
            &model.0,
            Some(&train.0.items_by_user()),
            &test.0.items_by_user(),
            &[n],
        ))?;
        if let Some(p) = precision.as_mut() {
            *p = res[0].precision_at;
        }
        if let Some(d) = ndcg.as_mut() {
            *d = res[0].ndcg_at;
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn sma_model_rank(model: *const SmaModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.rank())
}

/// # Safety
/// `model` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn sma_model_num_users(model: *const SmaModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.num_users())
}

/// # Safety
/// `model` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn sma_model_num_items(model: *const SmaModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.num_items())
}

/// # Safety
/// `model` must be a valid handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sma_model_save(model: *const SmaModel, path: *const c_char) -> SmaStatus {
    guard(|| {
        let model = obj(model, "model")?;
        core(model.0.save(str_arg(path, "path")?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn sma_model_load(path: *const c_char, out_model: *mut *mut SmaModel) -> SmaStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out_model.is_null() {
            return Err(null("out"));
        }
        let m = core(FactorModel::load(path))?;
        out(out_model, SmaModel(m));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not freed before.
#[no_mangle]
pub unsafe extern "C" fn sma_model_free(model: *mut SmaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
