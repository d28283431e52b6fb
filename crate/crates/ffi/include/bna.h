#ifndef BNA_H
#define BNA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum BnaStatus {
  BNA_STATUS_OK = 0,
  BNA_STATUS_NULL_POINTER = 1,
  BNA_STATUS_INVALID_ARGUMENT = 2,
  BNA_STATUS_IO = 3,
  BNA_STATUS_VALIDATION = 4,
  BNA_STATUS_NUMERIC = 5,
  BNA_STATUS_THEOREM_CHECK = 6,
  BNA_STATUS_PANIC = 7,
} BnaStatus;

/**
 * A loaded dataset.
 */
typedef struct BnaGraph BnaGraph;

/**
 * Trained weights, posterior and configuration.
 */
typedef struct BnaModel BnaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *bna_last_error_message(void);

/**
 * Loads a dataset directory (edges.tsv, features.csv, labels.csv,
 * masks.txt).
 *
 * # Safety
 * `dir` must be a valid C string and `out` a valid pointer.
 */
enum BnaStatus bna_graph_load(const char *dir, struct BnaGraph **out);

/**
 * Generates a synthetic dataset: `name` is `sbm` or `citation`.
 *
 * # Safety
 * `name` must be a valid C string and `out` a valid pointer.
 */
enum BnaStatus bna_graph_synthetic(const char *name, uint64_t seed, struct BnaGraph **out);

/**
 * Node, feature and class counts of a graph.
 *
 * # Safety
 * `graph` must come from this library; the out pointers may be null.
 */
enum BnaStatus bna_graph_shape(const struct BnaGraph *graph,
                               size_t *nodes,
                               size_t *features,
                               size_t *classes);

/**
 * Releases a graph. Null is ignored.
 *
 * # Safety
 * `graph` must come from this library and not be used afterwards.
 */
void bna_graph_free(struct BnaGraph *graph);

/**
 * Trains a model with the given settings (any training key, e.g.
 * `epochs=200;backbone=bna;seed=1`).
 *
 * # Safety
 * `graph` must come from this library, `settings` must be null or a valid C
 * string, and `out` a valid pointer.
 */
enum BnaStatus bna_train(const struct BnaGraph *graph, const char *settings, struct BnaModel **out);

/**
 * Test accuracy measured right after training; NaN for loaded models.
 *
 * # Safety
 * `model` must come from this library and `out` be a valid pointer.
 */
enum BnaStatus bna_model_test_accuracy(const struct BnaModel *model, double *out);

/**
 * Number of classes the model predicts.
 *
 * # Safety
 * `model` must come from this library and `out` be a valid pointer.
 */
enum BnaStatus bna_model_num_classes(const struct BnaModel *model, size_t *out);

/**
 * Writes class probabilities for every node, row-major, into `probs`, which
 * must hold exactly nodes × classes values. Uses the evaluation stream of
 * the model's seed, so results match the accuracy reported at training.
 *
 * # Safety
 * Handles must come from this library and `probs` must point to `len`
 * writable doubles.
 */
enum BnaStatus bna_predict(const struct BnaModel *model,
                           const struct BnaGraph *graph,
                           double *probs,
                           size_t len);

/**
 * Saves a model as a text checkpoint.
 *
 * # Safety
 * `model` must come from this library and `path` be a valid C string.
 */
enum BnaStatus bna_model_save(const struct BnaModel *model, const char *path);

/**
 * Loads a checkpoint written by [`bna_model_save`] or the command-line tool.
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum BnaStatus bna_model_load(const char *path, struct BnaModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void bna_model_free(struct BnaModel *model);

/**
 * Runs the linearized oversmoothing checks. Keys: `ensemble` (`er:N:P` or
 * `sbm:S1/S2:P_IN:P_OUT`), `trials`, `depth`, `features`, `alpha`, `beta`,
 * `seed`, `jobs`. `all_passed` receives the verdict; a failed check also
 * returns [`BnaStatus::TheoremCheck`].
 *
 * # Safety
 * `settings` must be null or a valid C string and `all_passed` a valid
 * pointer.
 */
enum BnaStatus bna_verify_theory(const char *settings, bool *all_passed);

/**
 * Revision of this interface.
 */
uint32_t bna_abi_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BNA_H */
