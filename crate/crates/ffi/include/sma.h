#ifndef SMA_H
#define SMA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SmaLoss {
  SMA_LOSS_MSE = 0,
  SMA_LOSS_LOG = 1,
  SMA_LOSS_EXP = 2,
} SmaLoss;

typedef enum SmaTopnMode {
  SMA_TOPN_MODE_BOUNDARY = 0,
  SMA_TOPN_MODE_RANDOM = 1,
  SMA_TOPN_MODE_WMA = 2,
} SmaTopnMode;

/**
 * Result code of every fallible call.
 */
typedef enum SmaStatus {
  SMA_STATUS_OK = 0,
  SMA_STATUS_NULL_POINTER = 1,
  SMA_STATUS_INVALID_ARGUMENT = 2,
  SMA_STATUS_CONFIG = 3,
  SMA_STATUS_DATA = 4,
  SMA_STATUS_DIVERGED = 5,
  SMA_STATUS_IO = 6,
  SMA_STATUS_OUT_OF_BOUNDS = 7,
  SMA_STATUS_PANIC = 8,
} SmaStatus;

/**
 * Rating data: the whole dataset or one side of a split.
 */
typedef struct SmaDataset SmaDataset;

typedef struct SmaModel SmaModel;

/**
 * A train/test split; its sides are borrowed with `sma_split_train` and
 * `sma_split_test` and stay valid until the split is freed.
 */
typedef struct SmaSplit SmaSplit;

/**
 * Hyperparameters shared by every trainer.
 */
typedef struct SmaTrainParams {
  size_t rank;
  double lr;
  double mu1;
  double mu2;
  size_t max_epochs;
  double conv_eps;
  uint64_t seed;
  double init_scale;
  /**
   * Clamp rating predictions to `[clamp_lo, clamp_hi]` when true.
   */
  bool clamp;
  double clamp_lo;
  double clamp_hi;
} SmaTrainParams;

typedef struct SmaTopnParams {
  enum SmaLoss loss;
  enum SmaTopnMode mode;
  double w_pos;
  double w_neg;
  double gamma;
  double lambda0;
  double lambda1;
} SmaTopnParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next `sma_*` call on this thread.
 */
const char *sma_last_error(void);

/**
 * # Safety
 * `s` must come from this library (a report string) and not be freed twice.
 */
void sma_string_free(char *s);

/**
 * Defaults of the rating trainers (rank 20, lr 0.001, μ 0.06, 250 epochs,
 * predictions clamped to [1, 5]).
 */
struct SmaTrainParams sma_train_params_default(void);

/**
 * Defaults of the top-N trainer. The base parameters are written to `base`
 * unless it is null.
 *
 * # Safety
 * `base` must be null or point to a writable `SmaTrainParams`.
 */
struct SmaTopnParams sma_topn_params_default(struct SmaTrainParams *base);

/**
 * Loads a MovieLens ratings file; `format` is `"ml100k"`, `"ml1m"` or `"ml10m"`.
 *
 * # Safety
 * `path` and `format` must be NUL-terminated strings; `out` must be writable.
 */
enum SmaStatus sma_dataset_load(const char *path, const char *format, struct SmaDataset **out_ds);

/**
 * # Safety
 * `ds` must be null or a valid dataset handle.
 */
size_t sma_dataset_num_users(const struct SmaDataset *ds);

/**
 * # Safety
 * `ds` must be null or a valid dataset handle.
 */
size_t sma_dataset_num_items(const struct SmaDataset *ds);

/**
 * Number of observed ratings.
 *
 * # Safety
 * `ds` must be null or a valid dataset handle.
 */
size_t sma_dataset_len(const struct SmaDataset *ds);

/**
 * # Safety
 * `ds` must be null or a handle from `sma_dataset_load` not freed before.
 * Split sides must not be passed here.
 */
void sma_dataset_free(struct SmaDataset *ds);

/**
 * Seeded random split with `ratio` of the ratings on the training side.
 *
 * # Safety
 * `ds` must be a valid dataset handle and `out_split` writable.
 */
enum SmaStatus sma_split(const struct SmaDataset *ds,
                         double ratio,
                         uint64_t seed,
                         struct SmaSplit **out_split);

/**
 * # Safety
 * `split` must be null or a valid split handle.
 */
const struct SmaDataset *sma_split_train(const struct SmaSplit *split);

/**
 * # Safety
 * `split` must be null or a valid split handle.
 */
const struct SmaDataset *sma_split_test(const struct SmaSplit *split);

/**
 * # Safety
 * `split` must be null or a handle from `sma_split` not freed before.
 */
void sma_split_free(struct SmaSplit *split);

/**
 * Trains regularized SVD. `test` may be null. When `report_json` is not
 * null it receives the run report, to be released with `sma_string_free`.
 *
 * # Safety
 * Handles must be valid; `params` and `out_model` must be non-null.
 */
enum SmaStatus sma_train_rsvd(const struct SmaDataset *train,
                              const struct SmaDataset *test,
                              const struct SmaTrainParams *params,
                              struct SmaModel **out_model,
                              char **report_json);

/**
 * Trains the stable rating model with `k` subsets, selection probability
 * `p` and equal λ weights. The RSVD baseline is trained internally.
 *
 * # Safety
 * As for [`sma_train_rsvd`].
 */
enum SmaStatus sma_train_sma_rating(const struct SmaDataset *train,
                                    const struct SmaDataset *test,
                                    const struct SmaTrainParams *params,
                                    size_t k,
                                    double p,
                                    struct SmaModel **out_model,
                                    char **report_json);

/**
 * Trains a top-N model. Ratings are binarized internally.
 *
 * # Safety
 * As for [`sma_train_rsvd`]; `topn` must be non-null.
 */
enum SmaStatus sma_train_topn(const struct SmaDataset *train,
                              const struct SmaDataset *test,
                              const struct SmaTrainParams *params,
                              const struct SmaTopnParams *topn,
                              struct SmaModel **out_model,
                              char **report_json);

/**
 * Prediction for dense indices `(user, item)`, clamped for rating models.
 *
 * # Safety
 * `model` must be a valid handle and `value` writable.
 */
enum SmaStatus sma_model_predict(const struct SmaModel *model,
                                 size_t user,
                                 size_t item,
                                 double *value);

/**
 * RMSE of the model over every rating in `ds`.
 *
 * # Safety
 * Handles must be valid and `value` writable.
 */
enum SmaStatus sma_model_rmse(const struct SmaModel *model,
                              const struct SmaDataset *ds,
                              double *value);

/**
 * Precision@N and NDCG@N on `test`, ranking items not rated in `train`.
 * Either output pointer may be null.
 *
 * # Safety
 * Handles must be valid.
 */
enum SmaStatus sma_model_top_n(const struct SmaModel *model,
                               const struct SmaDataset *train,
                               const struct SmaDataset *test,
                               size_t n,
                               double *precision,
                               double *ndcg);

/**
 * # Safety
 * `model` must be null or a valid handle.
 */
size_t sma_model_rank(const struct SmaModel *model);

/**
 * # Safety
 * `model` must be null or a valid handle.
 */
size_t sma_model_num_users(const struct SmaModel *model);

/**
 * # Safety
 * `model` must be null or a valid handle.
 */
size_t sma_model_num_items(const struct SmaModel *model);

/**
 * # Safety
 * `model` must be a valid handle and `path` a NUL-terminated string.
 */
enum SmaStatus sma_model_save(const struct SmaModel *model, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out_model` writable.
 */
enum SmaStatus sma_model_load(const char *path, struct SmaModel **out_model);

/**
 * # Safety
 * `model` must be null or a handle from this library not freed before.
 */
void sma_model_free(struct SmaModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMA_H */
