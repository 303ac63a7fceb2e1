#ifndef SPLITVAL_H
#define SPLITVAL_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/*
 Result of an FFI call.
 */
typedef enum SvStatus {
  SV_STATUS_OK = 0,
  SV_STATUS_NULL_POINTER = 1,
  SV_STATUS_INVALID_UTF8 = 2,
  SV_STATUS_IO = 3,
  SV_STATUS_PARSE = 4,
  SV_STATUS_NON_POSITIVE_VARIANCE = 5,
  SV_STATUS_DUPLICATE_TEST_ID = 6,
  SV_STATUS_ALPHA_OUT_OF_RANGE = 7,
  SV_STATUS_INCOMPATIBLE_MEASURE = 8,
  SV_STATUS_INVALID_PARAMETER = 9,
  SV_STATUS_INVALID_SIZE = 10,
  SV_STATUS_EMPTY_SPLIT = 11,
  SV_STATUS_EMPTY_INPUT = 12,
  SV_STATUS_INSUFFICIENT_TESTS = 13,
  SV_STATUS_INVALID_LEVEL = 14,
  SV_STATUS_DEGENERATE_BASELINE = 15,
  SV_STATUS_PRECISION_UNREACHABLE = 16,
  SV_STATUS_SERIALIZATION = 17,
  SV_STATUS_CONFIG = 18,
  SV_STATUS_PANIC = 99,
} SvStatus;

/*
 Performance measure used to score a methodology.
 */
typedef enum SvMeasure {
  SV_MEASURE_BIAS = 0,
  SV_MEASURE_SQUARED_ERROR = 1,
  SV_MEASURE_DECISION_VALUE = 2,
  SV_MEASURE_LAUNCH_ONLY = 3,
} SvMeasure;

/*
 Opaque collection of test summaries.
 */
typedef struct SvDataset SvDataset;

/*
 Opaque methodology.
 */
typedef struct SvMethodology SvMethodology;

/*
 Split settings. `unit_n_per_arm = 0` selects the plug-in sampler; any
 other value repartitions a synthetic panel with that many units per arm.
 */
typedef struct SvSplitConfig {
  double alpha;
  size_t num_partitions;
  uint64_t master_seed;
  double level;
  size_t unit_n_per_arm;
} SvSplitConfig;

typedef struct SvReport {
  double theta_hat;
  double zeta_sq_hat;
  double ci_low;
  double ci_high;
  double level;
  size_t num_tests;
  double alpha;
  size_t num_partitions;
} SvReport;

typedef struct SvComparison {
  double theta_hat_1;
  double theta_hat_2;
  double relative_difference;
  struct SvReport report_1;
  struct SvReport report_2;
} SvComparison;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message describing the last failure on this thread, or NULL.

 The pointer stays valid until the next call into this library on the same thread.
 */
const char *sv_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *sv_version(void);

/*
 Creates an empty dataset.

 # Safety
 `out` must be a valid pointer to writable storage for a handle.
 */
enum SvStatus sv_dataset_new(struct SvDataset **out);

/*
 Appends one test summary. Duplicate ids are rejected.

 # Safety
 `dataset` must come from this library; `test_id` must be NUL-terminated.
 */
enum SvStatus sv_dataset_push(struct SvDataset *dataset,
                              const char *test_id,
                              double delta_hat,
                              double tau_sq);

/*
 Reads a dataset from a CSV file with header `test_id,delta_hat,tau_sq`.

 # Safety
 `path` must be NUL-terminated and `out` writable.
 */
enum SvStatus sv_dataset_from_csv(const char *path, struct SvDataset **out);

/*
 Number of tests in the dataset (0 for NULL).

 # Safety
 `dataset` must be NULL or come from this library.
 */
size_t sv_dataset_len(const struct SvDataset *dataset);

/*
 Releases a dataset. NULL is ignored.

 # Safety
 `dataset` must be NULL or an unreleased handle from this library.
 */
void sv_dataset_free(struct SvDataset *dataset);

/*
 Parses a methodology such as `identity`, `bayes:sigma_sq=1` or `threshold:c=1.96`.

 # Safety
 `spec` must be NUL-terminated and `out` writable.
 */
enum SvStatus sv_methodology_parse(const char *spec, struct SvMethodology **out);

/*
 Releases a methodology. NULL is ignored.

 # Safety
 `methodology` must be NULL or an unreleased handle from this library.
 */
void sv_methodology_free(struct SvMethodology *methodology);

/*
 Estimates the average performance of one methodology.

 # Safety
 Handles must come from this library; `config` and `out` must be valid.
 */
enum SvStatus sv_evaluate(const struct SvDataset *dataset,
                          const struct SvMethodology *methodology,
                          enum SvMeasure measure,
                          const struct SvSplitConfig *config,
                          struct SvReport *out);

/*
 Compares two methodologies on shared split draws.

 # Safety
 Handles must come from this library; `config` and `out` must be valid.
 */
enum SvStatus sv_compare(const struct SvDataset *dataset,
                         const struct SvMethodology *methodology_1,
                         const struct SvMethodology *methodology_2,
                         enum SvMeasure measure,
                         const struct SvSplitConfig *config,
                         struct SvComparison *out);

/*
 Relative MSE of Bayes shrinkage vs the unbiased estimator on the full sample.

 # Safety
 `out` must be valid.
 */
enum SvStatus sv_oracle_ideal_mse_relative(double sigma_sq, double tau_sq, double *out);

/*
 Relative MSE of Bayes shrinkage vs the unbiased estimator with a training fraction.

 # Safety
 `out` must be valid.
 */
enum SvStatus sv_oracle_split_mse_relative(double sigma_sq,
                                           double tau_sq,
                                           double alpha,
                                           double *out);

/*
 Relative launch-only value of the Bayes sign rule vs the 5% threshold rule.

 # Safety
 `out` must be valid.
 */
enum SvStatus sv_oracle_ideal_launch_relative(double sigma_sq, double tau_sq, double *out);

/*
 As [`sv_oracle_ideal_launch_relative`], with a training fraction.

 # Safety
 `out` must be valid.
 */
enum SvStatus sv_oracle_split_launch_relative(double sigma_sq,
                                              double tau_sq,
                                              double alpha,
                                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPLITVAL_H */
