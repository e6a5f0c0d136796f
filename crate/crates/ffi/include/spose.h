#ifndef SPOSE_H
#define SPOSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SposeStatus {
  SPOSE_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or an out-of-range argument at the boundary.
   */
  SPOSE_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Malformed input data or configuration.
   */
  SPOSE_STATUS_INPUT = 2,
  /**
   * Non-finite values or a degenerate model.
   */
  SPOSE_STATUS_NUMERICAL = 3,
  SPOSE_STATUS_IO = 4,
  SPOSE_STATUS_PANIC = 5,
} SposeStatus;

typedef struct SposeDataset SposeDataset;

typedef struct SposeEmbedding SposeEmbedding;

typedef struct SposeVocabulary SposeVocabulary;

/**
 * Training settings. `lambda_grid` may be null to use the default grid.
 */
typedef struct SposeTrainConfig {
  const double *lambda_grid;
  size_t n_lambda;
  size_t epochs;
  double learning_rate;
  size_t init_dims;
  double prune_threshold;
  double split_fraction;
  size_t batch_size;
  uint64_t seed;
} SposeTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Owned by the library.
 */
const char *spose_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *spose_version(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SposeStatus spose_vocabulary_load(const char *path, struct SposeVocabulary **out);

/**
 * Number of concepts; 0 for null.
 *
 * # Safety
 * `vocab` must be null or a live handle.
 */
size_t spose_vocabulary_len(const struct SposeVocabulary *vocab);

/**
 * # Safety
 * `vocab` must be null or a handle not yet freed.
 */
void spose_vocabulary_free(struct SposeVocabulary *vocab);

/**
 * Loads a triplet file whose indices refer to `vocab`. The vocabulary is
 * copied; the caller keeps ownership of `vocab`.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `vocab` a live handle, `out` writable.
 */
enum SposeStatus spose_dataset_load(const char *path,
                                    const struct SposeVocabulary *vocab,
                                    struct SposeDataset **out);

/**
 * Number of judgments; 0 for null.
 *
 * # Safety
 * `data` must be null or a live handle.
 */
size_t spose_dataset_len(const struct SposeDataset *data);

/**
 * # Safety
 * `data` must be null or a handle not yet freed.
 */
void spose_dataset_free(struct SposeDataset *data);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SposeStatus spose_embedding_load(const char *path, struct SposeEmbedding **out);

/**
 * Builds an embedding from `rows * cols` row-major values. Concepts are
 * named by `vocab` if given (its length must equal `rows`), else `c0, c1, ...`.
 *
 * # Safety
 * `values` must point to `rows * cols` doubles; `vocab` null or live; `out` writable.
 */
enum SposeStatus spose_embedding_from_values(const double *values,
                                             size_t rows,
                                             size_t cols,
                                             const struct SposeVocabulary *vocab,
                                             struct SposeEmbedding **out);

/**
 * # Safety
 * `emb` must be a live handle; `path` a NUL-terminated string.
 */
enum SposeStatus spose_embedding_save(const struct SposeEmbedding *emb, const char *path);

/**
 * Number of concepts; 0 for null.
 *
 * # Safety
 * `emb` must be null or a live handle.
 */
size_t spose_embedding_rows(const struct SposeEmbedding *emb);

/**
 * Number of dimensions; 0 for null.
 *
 * # Safety
 * `emb` must be null or a live handle.
 */
size_t spose_embedding_cols(const struct SposeEmbedding *emb);

/**
 * # Safety
 * `emb` must be a live handle; `out` writable.
 */
enum SposeStatus spose_embedding_get(const struct SposeEmbedding *emb,
                                     size_t row,
                                     size_t col,
                                     double *out);

/**
 * Copies all values row-major into `buf`, which must hold `rows * cols` doubles.
 *
 * # Safety
 * `emb` must be a live handle; `buf` must point to `len` writable doubles.
 */
enum SposeStatus spose_embedding_copy_values(const struct SposeEmbedding *emb,
                                             double *buf,
                                             size_t len);

/**
 * # Safety
 * `emb` must be null or a handle not yet freed.
 */
void spose_embedding_free(struct SposeEmbedding *emb);

/**
 * Choice probabilities `(p12, p13, p23)` for three pair similarities.
 *
 * # Safety
 * `out` must point to 3 writable doubles.
 */
enum SposeStatus spose_triplet_probabilities(double s12, double s13, double s23, double *out);

/**
 * Sum of log choice probabilities of `data` under `emb`.
 *
 * # Safety
 * Handles must be live; `out` writable.
 */
enum SposeStatus spose_log_likelihood(const struct SposeEmbedding *emb,
                                      const struct SposeDataset *data,
                                      double *out);

/**
 * Fraction of judgments whose chosen pair is the model's most probable pair.
 *
 * # Safety
 * Handles must be live; `out` writable.
 */
enum SposeStatus spose_accuracy(const struct SposeEmbedding *emb,
                                const struct SposeDataset *data,
                                double *out);

/**
 * Most probable pair of a triplet: writes the two concept indices chosen as
 * most similar, in ascending order.
 *
 * # Safety
 * `emb` must be live; `out_a`, `out_b` writable.
 */
enum SposeStatus spose_predict_choice(const struct SposeEmbedding *emb,
                                      size_t i,
                                      size_t j,
                                      size_t k,
                                      size_t *out_a,
                                      size_t *out_b);

/**
 * Default settings; `lambda_grid` points at static storage.
 */
struct SposeTrainConfig spose_train_config_default(void);

/**
 * Regularization search, retraining and pruning. Writes a new embedding
 * handle and, if `out_lambda` is non-null, the selected penalty.
 *
 * # Safety
 * `data` and `config` must be valid; `config->lambda_grid` null or pointing
 * at `n_lambda` doubles; `out` writable.
 */
enum SposeStatus spose_train(const struct SposeDataset *data,
                             const struct SposeTrainConfig *config,
                             struct SposeEmbedding **out,
                             double *out_lambda);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPOSE_H */
