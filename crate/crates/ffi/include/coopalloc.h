#ifndef COOPALLOC_H
#define COOPALLOC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum CoopStatus {
  COOP_STATUS_OK = 0,
  // No allocation meets every demand within the power budgets.
  COOP_STATUS_INFEASIBLE = 1,
  COOP_STATUS_INVALID_INPUT = 2,
  COOP_STATUS_NULL_POINTER = 3,
  COOP_STATUS_INTERNAL = 4,
  COOP_STATUS_PANIC = 5,
} CoopStatus;

// The result of [`coop_optimize`].
typedef struct CoopAllocation CoopAllocation;

// A validated problem instance.
typedef struct CoopInstance CoopInstance;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Builds an instance from `gamma` (row-major, `num_bs * num_ue` entries,
// BS-major) and `rate` (`num_ue` entries). On success `*out` owns the new
// instance.
//
// # Safety
// `gamma` and `rate` must point to arrays of the stated lengths and `out`
// must be writable.
enum CoopStatus coop_instance_new(size_t num_bs,
                                  size_t num_ue,
                                  const double *gamma,
                                  const double *rate,
                                  struct CoopInstance **out);

// Releases an instance. Null is ignored.
//
// # Safety
// `inst` must come from [`coop_instance_new`] and not be used afterwards.
void coop_instance_free(struct CoopInstance *inst);

// Computes the minimum-power allocation. `*out` receives an allocation
// whenever the status is `Ok` or `Infeasible`; in the latter case it holds
// no power and [`coop_allocation_is_feasible`] returns false.
//
// # Safety
// `inst` must be a live instance and `out` writable.
enum CoopStatus coop_optimize(const struct CoopInstance *inst, struct CoopAllocation **out);

// Total transmit power normalized by the per-BS budget; NaN for null and
// infinity for an infeasible allocation.
//
// # Safety
// `alloc` must be null or a live allocation.
double coop_allocation_z(const struct CoopAllocation *alloc);

// # Safety
// `alloc` must be null or a live allocation.
bool coop_allocation_is_feasible(const struct CoopAllocation *alloc);

// Writes the normalized power BS `bs` spends on UE `ue` to `*out`.
//
// # Safety
// `alloc` must be a live allocation and `out` writable.
enum CoopStatus coop_allocation_power(const struct CoopAllocation *alloc,
                                      size_t bs,
                                      size_t ue,
                                      double *out);

// Writes UE `ue`'s share of the band to `*out`.
//
// # Safety
// `alloc` must be a live allocation and `out` writable.
enum CoopStatus coop_allocation_bandwidth(const struct CoopAllocation *alloc,
                                          size_t ue,
                                          double *out);

// Releases an allocation. Null is ignored.
//
// # Safety
// `alloc` must come from [`coop_optimize`] and not be used afterwards.
void coop_allocation_free(struct CoopAllocation *alloc);

// Normalized power a single link of SNR `gamma` needs to carry `rate`
// bit/s/Hz on bandwidth share `y`.
//
// # Safety
// `out` must be writable.
enum CoopStatus coop_required_power(double rate, double y, double gamma, double *out);

// Message for the last failed call on this thread, or an empty string. The
// pointer stays valid until the next failing call on the same thread.
const char *coop_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COOPALLOC_H */
