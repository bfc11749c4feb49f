#ifndef PAAE_H
#define PAAE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PaaeStatus {
  PAAE_STATUS_OK = 0,
  PAAE_STATUS_NULL_POINTER = 1,
  PAAE_STATUS_INVALID_ARGUMENT = 2,
  PAAE_STATUS_CONFIG = 3,
  PAAE_STATUS_SHAPE = 4,
  PAAE_STATUS_DATA = 5,
  PAAE_STATUS_PARSE = 6,
  PAAE_STATUS_IO = 7,
  PAAE_STATUS_SERDE = 8,
  PAAE_STATUS_NUMERIC = 9,
  PAAE_STATUS_DIVERGED = 10,
  PAAE_STATUS_PANIC = 11,
} PaaeStatus;

/**
 * Representation to extract from a model.
 */
typedef enum PaaeSpace {
  PAAE_SPACE_LATENT = 0,
  PAAE_SPACE_MEAN = 1,
  PAAE_SPACE_PATHWAY_ACTIVITY = 2,
} PaaeSpace;

/**
 * Opaque model handle.
 */
typedef struct PaaeModel PaaeModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *paae_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *paae_version(void);

/**
 * Builds an untrained model. `arch_json` is an architecture config as JSON;
 * pathway `j` lists `mask_lengths[j]` gene indices, concatenated in
 * `mask_indices`. Pathway names are `P0`, `P1`, ...
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `out` must be writable.
 */
enum PaaeStatus paae_model_build(const char *arch_json,
                                 size_t gene_count,
                                 const size_t *mask_indices,
                                 const size_t *mask_lengths,
                                 size_t n_masks,
                                 uint64_t seed,
                                 struct PaaeModel **out);

/**
 * Loads a checkpoint written by the library or the `paae` binary.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum PaaeStatus paae_model_load(const char *path, struct PaaeModel **out);

/**
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum PaaeStatus paae_model_save(const struct PaaeModel *model, const char *path);

/**
 * Releases a handle; NULL is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void paae_model_free(struct PaaeModel *model);

/**
 * Trains in place on `rows x gene_count` data. `train_json` is a training
 * config as JSON (empty object for defaults). The final epoch's loss is
 * written to `final_loss` when it is not NULL.
 *
 * # Safety
 * `model` must come from this library; `x` must hold `rows * cols` doubles.
 */
enum PaaeStatus paae_model_fit(struct PaaeModel *model,
                               const double *x,
                               size_t rows,
                               size_t cols,
                               const char *train_json,
                               double *final_loss);

/**
 * Zero for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or come from this library.
 */
size_t paae_model_param_count(const struct PaaeModel *model);

/**
 * Zero for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or come from this library.
 */
size_t paae_model_gene_count(const struct PaaeModel *model);

/**
 * Zero for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or come from this library.
 */
size_t paae_model_latent_dim(const struct PaaeModel *model);

/**
 * Zero for dense models and NULL handles.
 *
 * # Safety
 * `model` must be NULL or come from this library.
 */
size_t paae_model_pathway_count(const struct PaaeModel *model);

/**
 * Writes the `space` representation of `rows` samples into `out`
 * (`rows * width` doubles, width reported through `out_cols`).
 *
 * # Safety
 * `x` must hold `rows * cols` doubles and `out` `capacity` doubles.
 */
enum PaaeStatus paae_model_extract(const struct PaaeModel *model,
                                   const double *x,
                                   size_t rows,
                                   size_t cols,
                                   enum PaaeSpace space,
                                   double *out,
                                   size_t capacity,
                                   size_t *out_cols);

/**
 * Deterministic reconstruction (`rows * cols` doubles into `out`).
 *
 * # Safety
 * `x` must hold `rows * cols` doubles and `out` `capacity` doubles.
 */
enum PaaeStatus paae_model_reconstruct(const struct PaaeModel *model,
                                       const double *x,
                                       size_t rows,
                                       size_t cols,
                                       double *out,
                                       size_t capacity);

/**
 * Macro one-vs-rest ROC AUC of `n x k` row-major scores.
 *
 * # Safety
 * `labels` must hold `n` entries and `scores` `n * k`.
 */
enum PaaeStatus paae_roc_auc_macro(const size_t *labels,
                                   const double *scores,
                                   size_t n,
                                   size_t k,
                                   double *out);

/**
 * Two-sided Wilcoxon rank-sum test; `statistic` (Mann-Whitney U of `a`) may be NULL.
 *
 * # Safety
 * `a` and `b` must hold `na` and `nb` doubles.
 */
enum PaaeStatus paae_wilcoxon_rank_sum(const double *a,
                                       size_t na,
                                       const double *b,
                                       size_t nb,
                                       double *statistic,
                                       double *p_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PAAE_H */
