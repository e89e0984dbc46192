#ifndef CHURN_RECOURSE_H
#define CHURN_RECOURSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CrStatus {
  CR_STATUS_OK = 0,
  CR_STATUS_NULL_POINTER = 1,
  CR_STATUS_INVALID_ARGUMENT = 2,
  CR_STATUS_MISSING_ARTIFACT = 3,
  CR_STATUS_NUMERICAL = 4,
  CR_STATUS_DIMENSION_MISMATCH = 5,
  CR_STATUS_NOT_APPLICABLE = 6,
  CR_STATUS_IO = 7,
  CR_STATUS_PANIC = 8,
} CrStatus;

// Opaque fitted forest.
typedef struct CrForest CrForest;

// Opaque CounteRGAN bundle bound to a forest.
typedef struct CrGan CrGan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a success.
// Valid until the next call into this library on the same thread.
const char *cr_last_error_message(void);

// Loads a forest saved by `train-forest`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum CrStatus cr_forest_load(const char *path, struct CrForest **out);

// # Safety
// `forest` must be null or a handle from [`cr_forest_load`] not yet freed.
void cr_forest_free(struct CrForest *forest);

// # Safety
// `forest` must be a live handle and `out` writable.
enum CrStatus cr_forest_n_features(const struct CrForest *forest, size_t *out);

// Survival probability just before the churn threshold; above 0.5 means retained.
//
// # Safety
// `forest` must be a live handle, `x` must hold `len` doubles and `out` be writable.
enum CrStatus cr_forest_class_score(const struct CrForest *forest,
                                    const double *x,
                                    size_t len,
                                    double *out);

// 1 for predicted retained, 0 for predicted churn.
//
// # Safety
// `forest` must be a live handle, `x` must hold `len` doubles and `out` be writable.
enum CrStatus cr_forest_classify(const struct CrForest *forest,
                                 const double *x,
                                 size_t len,
                                 uint8_t *out);

// Median predicted lifetime in days. `truncated` is set to 1 when the
// survival curve never fell to 0.5 and the last observed time was returned.
//
// # Safety
// `forest` must be a live handle, `x` must hold `len` doubles, and both
// outputs must be writable.
enum CrStatus cr_forest_median_lifetime(const struct CrForest *forest,
                                        const double *x,
                                        size_t len,
                                        double *days,
                                        uint8_t *truncated);

// Loads a CounteRGAN bundle directory written by `train-gan`, bound to `forest`.
//
// # Safety
// `dir` must be a NUL-terminated string, `forest` a live handle and `out` writable.
enum CrStatus cr_gan_load(const char *dir, const struct CrForest *forest, struct CrGan **out);

// # Safety
// `gan` must be null or a handle from [`cr_gan_load`] not yet freed.
void cr_gan_free(struct CrGan *gan);

// One-pass recourse for a user the forest predicts to churn. Writes the
// projected action into `delta` (length `len`) and the forest's verdict on
// `x + delta` into `post_class`. Returns `CR_STATUS_NOT_APPLICABLE` for a
// user already predicted retained.
//
// # Safety
// `gan` must be a live handle, `x` and `delta` must each hold `len`
// doubles, and `post_class` and `cost_sq` must be writable or null.
enum CrStatus cr_gan_recourse(const struct CrGan *gan,
                              const double *x,
                              size_t len,
                              double *delta,
                              uint8_t *post_class,
                              double *cost_sq);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHURN_RECOURSE_H */
