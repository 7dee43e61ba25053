#ifndef MDA_FFI_H
#define MDA_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum MdaStatus {
  MDA_STATUS_OK = 0,
  MDA_STATUS_NULL_POINTER = 1,
  MDA_STATUS_INVALID_ARGUMENT = 2,
  MDA_STATUS_SHAPE_MISMATCH = 3,
  MDA_STATUS_UNINITIALIZED_STATS = 4,
  MDA_STATUS_IO = 5,
  MDA_STATUS_FORMAT = 6,
  MDA_STATUS_CONFIG = 7,
  MDA_STATUS_NUMERICAL_ABORT = 8,
  MDA_STATUS_BUFFER_TOO_SMALL = 9,
  MDA_STATUS_PANIC = 10,
} MdaStatus;

// Labeled images loaded from an IDX file pair.
typedef struct MdaDataset MdaDataset;

// Trained model with its running statistics.
typedef struct MdaModel MdaModel;

// Final scores of a training run.
typedef struct MdaTrainSummary {
  double accuracy;
  double nmi;
  double purity;
  double final_loss;
} MdaTrainSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Owned by the
// library and valid until the next call on this thread.
const char *mda_last_error_message(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must come from this library and not be freed twice.
void mda_string_free(char *s);

// Creates an untrained model from a JSON model config.
//
// # Safety
// `config_json` must be a NUL-terminated string; `out` a valid pointer.
enum MdaStatus mda_model_new(const char *config_json, struct MdaModel **out);

// Loads a JSON checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string; `out` a valid pointer.
enum MdaStatus mda_model_load(const char *path, struct MdaModel **out);

// Writes a JSON checkpoint.
//
// # Safety
// `model` must be a live handle; `path` a NUL-terminated string.
enum MdaStatus mda_model_save(const struct MdaModel *model, const char *path);

// # Safety
// `model` must come from this library and not be freed twice.
void mda_model_free(struct MdaModel *model);

// Input width, class count and latent domain count of a model.
//
// # Safety
// `model` must be a live handle; out pointers may be NULL to skip.
enum MdaStatus mda_model_dims(const struct MdaModel *model,
                              uintptr_t *input_dim,
                              uintptr_t *classes,
                              uintptr_t *k);

// Serializes the model (config, parameters, running statistics) as JSON.
// Free the result with [`mda_string_free`].
//
// # Safety
// `model` must be a live handle; `out` a valid pointer.
enum MdaStatus mda_model_to_json(const struct MdaModel *model, char **out);

// Class probabilities `[rows, classes]` for target-domain inputs
// `[rows, input_dim]`, using running statistics.
//
// # Safety
// Buffers must hold the stated number of values.
enum MdaStatus mda_model_predict(const struct MdaModel *model,
                                 const double *x,
                                 uintptr_t rows,
                                 uintptr_t cols,
                                 double *out,
                                 uintptr_t out_len);

// Domain-branch probabilities `[rows, k]`.
//
// # Safety
// Buffers must hold the stated number of values.
enum MdaStatus mda_model_predict_domains(const struct MdaModel *model,
                                         const double *x,
                                         uintptr_t rows,
                                         uintptr_t cols,
                                         double *out,
                                         uintptr_t out_len);

// Trains a model from a full experiment config (JSON with model, train and
// data sections). `summary` may be NULL.
//
// # Safety
// `config_json` must be NUL-terminated; `out` a valid pointer.
enum MdaStatus mda_train(const char *config_json,
                         struct MdaModel **out,
                         struct MdaTrainSummary *summary);

// Loads an IDX image/label pair as a source dataset.
//
// # Safety
// Paths must be NUL-terminated; `out` a valid pointer.
enum MdaStatus mda_dataset_load_idx(const char *images,
                                    const char *labels,
                                    struct MdaDataset **out);

// Sample count and flattened sample width.
//
// # Safety
// `ds` must be a live handle; out pointers may be NULL to skip.
enum MdaStatus mda_dataset_dims(const struct MdaDataset *ds, uintptr_t *len, uintptr_t *width);

// Copies features (`len * width` values) and labels (`len` values).
// Either output may be NULL to skip it.
//
// # Safety
// Buffers must hold the stated number of values.
enum MdaStatus mda_dataset_copy(const struct MdaDataset *ds,
                                double *features,
                                uintptr_t features_len,
                                uintptr_t *labels,
                                uintptr_t labels_len);

// # Safety
// `ds` must come from this library and not be freed twice.
void mda_dataset_free(struct MdaDataset *ds);

// Stateless mDA normalization of `x` (`[rows, channels]`) with assignment
// weights `w` (`[rows, domains]`, all rows treated as free), no affine.
//
// # Safety
// Buffers must hold the stated number of values.
enum MdaStatus mda_layer_forward(const double *x,
                                 uintptr_t rows,
                                 uintptr_t channels,
                                 const double *w,
                                 uintptr_t domains,
                                 double eps,
                                 double *out,
                                 uintptr_t out_len);

// NMI and purity of a predicted partition against the true one.
//
// # Safety
// `predicted` and `truth` must hold `n` values; outputs must be valid.
enum MdaStatus mda_nmi(const uintptr_t *predicted,
                       const uintptr_t *truth,
                       uintptr_t n,
                       double *nmi,
                       double *purity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MDA_FFI_H */
