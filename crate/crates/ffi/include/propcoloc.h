#ifndef PROPCOLOC_H
#define PROPCOLOC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Status codes returned by every fallible function.
typedef enum PcStatus {
  PC_STATUS_OK = 0,
  PC_STATUS_NULL_POINTER = 1,
  PC_STATUS_INVALID_ARGUMENT = 2,
  PC_STATUS_IO = 3,
  PC_STATUS_PARSE = 4,
  PC_STATUS_VALIDATION = 5,
  PC_STATUS_SINGULAR_LD = 6,
  PC_STATUS_CRITERION_SINGULAR = 7,
  PC_STATUS_DEGENERATE_PROJECTION = 8,
  PC_STATUS_LOW_ACCEPTANCE = 9,
  PC_STATUS_SINGULAR_SELECTION = 10,
  PC_STATUS_PANIC = 11,
} PcStatus;

// Test method tag.
typedef enum PcMethod {
  PC_METHOD_FULL = 0,
  PC_METHOD_NAIVE = 1,
  PC_METHOD_CONDITIONAL = 2,
  PC_METHOD_LM = 3,
} PcMethod;

// Combined conditional + LM decision.
typedef enum PcVerdict {
  PC_VERDICT_RETAIN = 0,
  PC_VERDICT_REJECT_PROPORTIONALITY = 1,
  PC_VERDICT_REJECT_NO_TRAIT1_SIGNAL = 2,
} PcVerdict;

// Opaque summary dataset.
typedef struct PcDataset PcDataset;

// Opaque multivariable effects with their covariance.
typedef struct PcJointEffects PcJointEffects;

// Flat copy of a test result.
typedef struct PcTestResult {
  enum PcMethod method;
  double statistic;
  // Degrees of freedom, or the conditional critical value.
  double df_or_critical;
  double p_value;
  // NaN when `has_eta_hat` is false.
  double eta_hat;
  bool has_eta_hat;
  double nu;
  bool reject;
  // Conditional test only; 0 otherwise.
  uint64_t accepted_draws;
  // Conditional test only; NaN otherwise.
  double acceptance_rate;
} PcTestResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *pc_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *pc_version(void);

// Loads an association TSV and LD file.
//
// # Safety
// `assoc_path` and `ld_path` must be NUL-terminated strings; `out` must be
// writable.
enum PcStatus pc_dataset_load(const char *assoc_path,
                              const char *ld_path,
                              double trait_cor,
                              uintptr_t n,
                              struct PcDataset **out);

// Builds a dataset from arrays of length `j` and a row-major `j` x `j` LD
// matrix. `ids` may be NULL, in which case ids are "v1", "v2", ...
//
// # Safety
// All non-NULL pointers must reference arrays of the stated length.
enum PcStatus pc_dataset_from_arrays(uintptr_t j,
                                     const char *const *ids,
                                     const double *beta1,
                                     const double *se1,
                                     const double *beta2,
                                     const double *se2,
                                     const double *ld,
                                     double trait_cor,
                                     uintptr_t n,
                                     struct PcDataset **out);

// Number of variants, or 0 for a NULL handle.
//
// # Safety
// `ds` must be NULL or a live dataset handle.
uintptr_t pc_dataset_num_variants(const struct PcDataset *ds);

// Copies the id of variant `index` into `buf` (NUL-terminated, truncated
// to `len`). Returns the full id length in bytes.
//
// # Safety
// `ds` must be a live handle; `buf` must hold `len` bytes or be NULL.
uintptr_t pc_dataset_variant_id(const struct PcDataset *ds,
                                uintptr_t index,
                                char *buf,
                                uintptr_t len);

// Greedy LD pruning to r² <= `r2`; writes a new handle.
//
// # Safety
// `ds` must be a live handle; `out` must be writable.
enum PcStatus pc_dataset_prune(const struct PcDataset *ds, double r2, struct PcDataset **out);

// Union of the `k` strongest variants per trait; writes a new handle.
//
// # Safety
// `ds` must be a live handle; `out` must be writable.
enum PcStatus pc_dataset_top_k(const struct PcDataset *ds, uintptr_t k, struct PcDataset **out);

// Makes the trait with the strongest association trait 2; writes a new
// handle and whether the traits were swapped.
//
// # Safety
// `ds` must be a live handle; `out` and `swapped` must be writable.
enum PcStatus pc_dataset_order_traits(const struct PcDataset *ds,
                                      struct PcDataset **out,
                                      bool *swapped);

// Releases a dataset handle. NULL is ignored.
//
// # Safety
// `ds` must be NULL or a handle not yet freed.
void pc_dataset_free(struct PcDataset *ds);

// Multivariable effects and covariance from a dataset.
//
// # Safety
// `ds` must be a live handle; `out` must be writable.
enum PcStatus pc_joint_effects_new(const struct PcDataset *ds, struct PcJointEffects **out);

// Number of variants, or 0 for a NULL handle.
//
// # Safety
// `je` must be NULL or a live handle.
uintptr_t pc_joint_effects_num_variants(const struct PcJointEffects *je);

// Copies γ̂₁ (trait 0) or γ̂₂ (trait 1) into `buf` of length `len`, which
// must be at least the variant count.
//
// # Safety
// `je` must be a live handle; `buf` must hold `len` doubles.
enum PcStatus pc_joint_effects_gamma(const struct PcJointEffects *je,
                                     uint32_t trait_index,
                                     double *buf,
                                     uintptr_t len);

// Releases a joint-effects handle. NULL is ignored.
//
// # Safety
// `je` must be NULL or a handle not yet freed.
void pc_joint_effects_free(struct PcJointEffects *je);

// Full-panel test referred to χ²_{J-1}.
//
// # Safety
// `je` must be a live handle; `out` must be writable.
enum PcStatus pc_test_full(const struct PcJointEffects *je, double nu, struct PcTestResult *out);

// Two-lead-variant test referred to χ²₁.
//
// # Safety
// `je` must be a live handle; `out` must be writable.
enum PcStatus pc_test_naive(const struct PcJointEffects *je, double nu, struct PcTestResult *out);

// Conditional test with a Monte-Carlo critical value.
//
// # Safety
// `je` must be a live handle; `out` must be writable.
enum PcStatus pc_test_cond(const struct PcJointEffects *je,
                           double nu,
                           uintptr_t draws,
                           uint64_t seed,
                           struct PcTestResult *out);

// LM test of a zero proportionality constant.
//
// # Safety
// `je` must be a live handle; `out` must be writable.
enum PcStatus pc_test_lm(const struct PcJointEffects *je, double nu, struct PcTestResult *out);

// Combines a proportionality test result with an LM result.
//
// # Safety
// Pointers must reference valid results; `out` must be writable.
enum PcStatus pc_verdict(const struct PcTestResult *proportionality,
                         const struct PcTestResult *lm,
                         double nu,
                         enum PcVerdict *out);

// Upper tail P(χ²_df > x).
//
// # Safety
// `out` must be writable.
enum PcStatus pc_chi_sq_upper(uint32_t df, double x, double *out);

// Upper-ν quantile of χ²_df.
//
// # Safety
// `out` must be writable.
enum PcStatus pc_chi_sq_quantile(uint32_t df, double nu, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROPCOLOC_H */
