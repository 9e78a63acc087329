#ifndef SPARSECAST_H
#define SPARSECAST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Outcome of an FFI call.
 */
typedef enum ScStatus {
  SC_STATUS_OK = 0,
  SC_STATUS_NULL_POINTER = 1,
  SC_STATUS_INVALID_ARGUMENT = 2,
  SC_STATUS_PARSE = 3,
  SC_STATUS_INPUT = 4,
  SC_STATUS_PRECONDITION = 5,
  SC_STATUS_NUMERICAL = 6,
  SC_STATUS_ALIGNMENT = 7,
  SC_STATUS_IO = 8,
  SC_STATUS_PANIC = 9,
} ScStatus;

/**
 * Opaque fitted copula.
 */
typedef struct ScCopula ScCopula;

/**
 * Opaque observation panel.
 */
typedef struct ScMatrix ScMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *sc_last_error_message(void);

/**
 * Builds a continuous panel from `rows × cols` row-major values; NaN marks a
 * missing cell. Columns are named `x1..xq` on a monthly index from 2000.
 *
 * # Safety
 * `values` must hold `rows * cols` doubles and `out` must be writable.
 */
enum ScStatus sc_matrix_from_values(const double *values,
                                    size_t rows,
                                    size_t cols,
                                    struct ScMatrix **out);

/**
 * Loads a CSV (timestamp column first) with every other column continuous.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum ScStatus sc_matrix_load_csv(const char *path, struct ScMatrix **out);

/**
 * # Safety
 * `m` must be null or a handle from this library, not yet freed.
 */
void sc_matrix_free(struct ScMatrix *m);

/**
 * # Safety
 * `m` must be a live handle.
 */
size_t sc_matrix_rows(const struct ScMatrix *m);

/**
 * # Safety
 * `m` must be a live handle.
 */
size_t sc_matrix_cols(const struct ScMatrix *m);

/**
 * Reads cell `(i, j)`; `*value` is NaN and `*observed` false when missing.
 *
 * # Safety
 * `m` must be a live handle; `value` and `observed` writable.
 */
enum ScStatus sc_matrix_get(const struct ScMatrix *m,
                            size_t i,
                            size_t j,
                            double *value,
                            bool *observed);

/**
 * Erases `round(fraction × observed)` cells chosen by `seed` into a new panel.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum ScStatus sc_apply_mask(const struct ScMatrix *m,
                            double fraction,
                            uint64_t seed,
                            struct ScMatrix **out);

/**
 * Fits the copula by EM. `max_iters = 0` or `tol <= 0` select the defaults.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum ScStatus sc_copula_fit(const struct ScMatrix *m,
                            size_t max_iters,
                            double tol,
                            struct ScCopula **out);

/**
 * # Safety
 * `c` must be null or a handle from this library, not yet freed.
 */
void sc_copula_free(struct ScCopula *c);

/**
 * Number of columns the copula was fit on.
 *
 * # Safety
 * `c` must be a live handle.
 */
size_t sc_copula_dim(const struct ScCopula *c);

/**
 * Copies the correlation matrix, row-major, into `out` (`len` must be q²).
 *
 * # Safety
 * `c` must be a live handle and `out` hold `len` doubles.
 */
enum ScStatus sc_copula_sigma(const struct ScCopula *c, double *out, size_t len);

/**
 * Fills the missing cells of `m` into a new panel.
 *
 * # Safety
 * `c` and `m` must be live handles and `out` writable.
 */
enum ScStatus sc_copula_impute(const struct ScCopula *c,
                               const struct ScMatrix *m,
                               struct ScMatrix **out);

/**
 * Serializes the model as JSON; release the string with [`sc_string_free`].
 *
 * # Safety
 * `c` must be a live handle and `out` writable.
 */
enum ScStatus sc_copula_to_json(const struct ScCopula *c, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void sc_string_free(char *s);

/**
 * `√(1 / ln rounds)`; fails for `rounds < 2`.
 *
 * # Safety
 * `out` must be writable.
 */
enum ScStatus sc_compute_lambda(size_t rounds, double *out);

/**
 * Softmin weights of `n` models into `weights`.
 *
 * # Safety
 * `ce`, `lambda` and `weights` must each hold `n` doubles.
 */
enum ScStatus sc_update_weights(const double *ce, const double *lambda, size_t n, double *weights);

/**
 * Weighted sum of `n` forecasts.
 *
 * # Safety
 * `preds` and `weights` must hold `n` doubles; `out` writable.
 */
enum ScStatus sc_aggregate(const double *preds, const double *weights, size_t n, double *out);

/**
 * Mean absolute percentage error in percent.
 *
 * # Safety
 * `actual` and `predicted` must hold `n` doubles; `out` writable.
 */
enum ScStatus sc_mape(const double *actual, const double *predicted, size_t n, double *out);

/**
 * Two-sided Wilcoxon signed-rank test of `a − b`. `degenerate` is set when
 * every difference is zero.
 *
 * # Safety
 * `a` and `b` must hold `n` doubles; the outputs must be writable.
 */
enum ScStatus sc_wilcoxon(const double *a,
                          const double *b,
                          size_t n,
                          double *statistic,
                          double *p_value,
                          bool *degenerate);

/**
 * Friedman average ranks of a `periods × models` row-major error grid.
 *
 * # Safety
 * `grid` must hold `periods * models` doubles and `ranks` `models`.
 */
enum ScStatus sc_friedman_rank(const double *grid, size_t periods, size_t models, double *ranks);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARSECAST_H */
