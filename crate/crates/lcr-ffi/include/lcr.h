/* C interface for the latent-component rating toolkit. */

#ifndef LCR_H
#define LCR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible API call.
typedef enum LcrStatus {
  // Success.
  LCR_STATUS_OK = 0,
  // A pointer was NULL or an argument malformed.
  LCR_STATUS_BAD_ARGUMENT = 1,
  // Input data was rejected (parse errors, bad dimensions, bad config).
  LCR_STATUS_DATA = 2,
  // Training diverged.
  LCR_STATUS_DIVERGENCE = 3,
  // A model file was malformed.
  LCR_STATUS_FORMAT = 4,
  // The operating system reported an I/O failure.
  LCR_STATUS_IO = 5,
  // An internal invariant failed.
  LCR_STATUS_INTERNAL = 6,
} LcrStatus;

// Opaque rating-dataset handle.
typedef struct LcrDataset LcrDataset;

// Opaque trained-model handle.
typedef struct LcrModel LcrModel;

// SGD settings shared by all factor models.
typedef struct LcrHyperparams {
  // Latent dimensions per model.
  uint64_t factors;
  // L2 regularization strength.
  double lambda;
  // SGD learning rate.
  double gamma;
  // Training epochs (phase 1 for the component model).
  uint64_t epochs;
  // Nonzero enables the mu + item + user bias terms.
  uint8_t use_biases;
  // Nonzero clamps final predictions to the rating scale.
  uint8_t clamp_output;
  // Master RNG seed.
  uint64_t seed;
} LcrHyperparams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
//
// # Safety
// Always safe; the returned pointer is static.
const char *lcr_version(void);

// Message describing the most recent failure on this thread. Never NULL;
// empty before any failure.
//
// # Safety
// The pointer is valid until the next failing call on the same thread.
const char *lcr_last_error_message(void);

// Fill `out` with the library's default hyperparameters.
//
// # Safety
// `out` must be valid for writing one `LcrHyperparams`.
enum LcrStatus lcr_hyperparams_default(struct LcrHyperparams *out);

// Parse a rating file (`format` is `"ml100k"`, `"ml1m"` or `"csv"`) on the
// inclusive rating scale `[scale_min, scale_max]` and return a dataset
// handle in `out`.
//
// # Safety
// `path` and `format` must be NUL-terminated strings; `out` must be valid
// for writing one pointer. The handle must be released with
// [`lcr_dataset_free`].
enum LcrStatus lcr_dataset_load(const char *path,
                                const char *format,
                                double scale_min,
                                double scale_max,
                                struct LcrDataset **out);

// Release a dataset handle. NULL is ignored.
//
// # Safety
// `ds` must be a handle from this library not yet freed.
void lcr_dataset_free(struct LcrDataset *ds);

// Read basic dataset statistics. Any out-pointer may be NULL to skip it.
//
// # Safety
// `ds` must be a live dataset handle; non-NULL out-pointers must be
// writable.
enum LcrStatus lcr_dataset_stats(const struct LcrDataset *ds,
                                 uint64_t *users,
                                 uint64_t *items,
                                 uint64_t *ratings,
                                 double *mean);

// Seeded holdout split; the train side receives `round(ratio * len)`
// ratings. Both new handles must be freed.
//
// # Safety
// `ds` must be a live dataset handle; `train_out` and `probe_out` must be
// valid for writing one pointer each.
enum LcrStatus lcr_dataset_split(const struct LcrDataset *ds,
                                 double ratio,
                                 uint64_t seed,
                                 struct LcrDataset **train_out,
                                 struct LcrDataset **probe_out);

// Train a single biased matrix-factorization model.
//
// # Safety
// `ds` must be a live dataset handle, `hyper` readable, `out` writable. The
// model handle must be released with [`lcr_model_free`].
enum LcrStatus lcr_train_bmf(const struct LcrDataset *ds,
                             const struct LcrHyperparams *hyper,
                             struct LcrModel **out);

// Train the latent-component decomposition: `components` models trained on
// softmax-weighted rating shares, then retrained on their normalized
// shares for `retrain_epochs` epochs (0 skips retraining). Prediction sums
// the components.
//
// # Safety
// Same contract as [`lcr_train_bmf`].
enum LcrStatus lcr_train_lcr(const struct LcrDataset *ds,
                             const struct LcrHyperparams *hyper,
                             uint64_t components,
                             uint64_t retrain_epochs,
                             uint64_t threads,
                             struct LcrModel **out);

// Train an ensemble of independent models whose predictions are averaged.
//
// # Safety
// Same contract as [`lcr_train_bmf`].
enum LcrStatus lcr_train_mbmf(const struct LcrDataset *ds,
                              const struct LcrHyperparams *hyper,
                              uint64_t components,
                              uint64_t threads,
                              struct LcrModel **out);

// Train the item-deviation baseline.
//
// # Safety
// Same contract as [`lcr_train_bmf`] minus the hyperparameters.
enum LcrStatus lcr_train_slopeone(const struct LcrDataset *ds, struct LcrModel **out);

// Release a model handle. NULL is ignored.
//
// # Safety
// `model` must be a handle from this library not yet freed.
void lcr_model_free(struct LcrModel *model);

// Static name of the model kind: `"bmf"`, `"lcr"`, `"mbmf"` or
// `"slopeone"`. NULL for a NULL model.
//
// # Safety
// `model` must be a live model handle or NULL.
const char *lcr_model_kind(const struct LcrModel *model);

// Predict a rating by external user/item id, honoring the model's clamp
// setting. Ids unseen at training time use the cold-start fallbacks.
//
// # Safety
// `model` must be a live handle; `user` and `item` NUL-terminated; `out`
// writable.
enum LcrStatus lcr_model_predict(const struct LcrModel *model,
                                 const char *user,
                                 const char *item,
                                 double *out);

// Like [`lcr_model_predict`] but never clamped.
//
// # Safety
// Same contract as [`lcr_model_predict`].
enum LcrStatus lcr_model_score(const struct LcrModel *model,
                               const char *user,
                               const char *item,
                               double *out);

// Serialize a model to `path`.
//
// # Safety
// `model` must be a live handle; `path` NUL-terminated.
enum LcrStatus lcr_model_save(const struct LcrModel *model, const char *path);

// Load a model saved by [`lcr_model_save`].
//
// # Safety
// `path` must be NUL-terminated; `out` writable. The handle must be
// released with [`lcr_model_free`].
enum LcrStatus lcr_model_load(const char *path, struct LcrModel **out);

// Root mean square error of `model` over `probe`, matching records by
// external id. Nonzero `clamp` snaps scores to the model's scale first.
//
// # Safety
// `model` and `probe` must be live handles; `out` writable.
enum LcrStatus lcr_rmse(const struct LcrModel *model,
                        const struct LcrDataset *probe,
                        uint8_t clamp,
                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LCR_H */
