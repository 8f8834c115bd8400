#ifndef SLEEPWAKE_H
#define SLEEPWAKE_H

#include <stddef.h>
#include <stdint.h>

typedef enum SwStatus {
  SW_STATUS_OK = 0,
  SW_STATUS_NULL_POINTER = 1,
  SW_STATUS_INVALID_ARGUMENT = 2,
  SW_STATUS_CONFIG = 3,
  SW_STATUS_DATA = 4,
  SW_STATUS_DEGENERATE = 5,
  SW_STATUS_FIT = 6,
  SW_STATUS_SINGLE_CLASS = 7,
  SW_STATUS_IO = 8,
  SW_STATUS_PANIC = 9,
} SwStatus;

// Fitted Gaussian hidden Markov model.
typedef struct SwHmm SwHmm;

// Fitted two-class discriminant.
typedef struct SwLda SwLda;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the next
// failing call on the same thread.
const char *sw_last_error(void);

// Library version as a static NUL-terminated string.
const char *sw_version(void);

// Fits a discriminant on `n` rows with prior-odds factor `gamma` (1 for equal priors).
//
// # Safety
// `x` must point to `n * dim` doubles and `labels` to `n` bytes; `out` must be writable.
enum SwStatus sw_lda_fit(const double *x,
                         const uint8_t *labels,
                         size_t n,
                         size_t dim,
                         double gamma,
                         struct SwLda **out);

// Copies the discriminant direction into `w`, which holds `dim` doubles.
//
// # Safety
// `lda` must come from `sw_lda_fit`; `w` must point to `dim` writable doubles.
enum SwStatus sw_lda_direction(const struct SwLda *lda, double *w, size_t dim);

// Classifies `n` rows; writes 1 for sleep and 0 for wake.
//
// # Safety
// `x` must point to `n * dim` doubles and `out` to `n` writable bytes.
enum SwStatus sw_lda_classify(const struct SwLda *lda,
                              const double *x,
                              size_t n,
                              size_t dim,
                              uint8_t *out);

// # Safety
// `lda` must come from `sw_lda_fit` and not be used afterwards. Null is ignored.
void sw_lda_free(struct SwLda *lda);

// Fits a `k`-state Gaussian HMM by Baum-Welch.
//
// # Safety
// `obs` must point to `n * dim` doubles; `out` must be writable.
enum SwStatus sw_hmm_fit(const double *obs,
                         size_t n,
                         size_t dim,
                         size_t k,
                         uint64_t seed,
                         struct SwHmm **out);

// Viterbi path; writes one state index per observation.
//
// # Safety
// `obs` must point to `n * dim` doubles and `states` to `n` writable `size_t`.
enum SwStatus sw_hmm_decode(const struct SwHmm *hmm,
                            const double *obs,
                            size_t n,
                            size_t dim,
                            size_t *states);

// Log-likelihood of a sequence under the model.
//
// # Safety
// `obs` must point to `n * dim` doubles; `out` must be writable.
enum SwStatus sw_hmm_log_likelihood(const struct SwHmm *hmm,
                                    const double *obs,
                                    size_t n,
                                    size_t dim,
                                    double *out);

// Number of hidden states.
//
// # Safety
// `hmm` must come from `sw_hmm_fit` or be null, which yields 0.
size_t sw_hmm_states(const struct SwHmm *hmm);

// # Safety
// `hmm` must come from `sw_hmm_fit` and not be used afterwards. Null is ignored.
void sw_hmm_free(struct SwHmm *hmm);

// Share of rows whose nearest neighbour along direction `w` has the same label.
//
// # Safety
// `x` must point to `n * dim` doubles, `labels` to `n` bytes, `w` to `dim`
// doubles; `out` must be writable.
enum SwStatus sw_separability_index(const double *x,
                                    const uint8_t *labels,
                                    size_t n,
                                    size_t dim,
                                    const double *w,
                                    double *out);

// Mann-Whitney AUC of `scores` for binary `labels`, ties counting one half.
//
// # Safety
// `scores` must point to `n` doubles and `labels` to `n` bytes; `out` must be writable.
enum SwStatus sw_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

// Runs the full pipeline on every subject of a manifest into `out_dir`.
// `config` may be null for defaults; it is read as TOML when it ends in
// `.toml`, JSON otherwise. The number of failed subjects is written to
// `n_failed` when it is not null; those failures do not change the status.
//
// # Safety
// Path arguments must be NUL-terminated strings.
enum SwStatus sw_pipeline_run(const char *manifest,
                              const char *config,
                              const char *out_dir,
                              size_t *n_failed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLEEPWAKE_H */
