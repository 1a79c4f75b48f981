#ifndef HYPNORM_H
#define HYPNORM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum HypStatus {
  HypOk = 0,
  /**
   * A required pointer was null.
   */
  HypNullPointer = 1,
  /**
   * A parameter was out of range (curvature, scale, placement, dim).
   */
  HypInvalidArgument = 2,
  /**
   * The computation produced a non-finite value.
   */
  HypNumericError = 3,
  /**
   * The verification suite found a failing identity.
   */
  HypVerifyFailed = 4,
  /**
   * A panic was caught at the boundary.
   */
  HypInternalError = 5,
} HypStatus;

/**
 * Opaque normalization context holding curvature, scale, placement.
 */
typedef struct HypNormHandle HypNormHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a normalization context. Placement: 0 per-layer, 1 final,
 * 2 middle. Returns null on invalid parameters.
 */
struct HypNormHandle *hyp_norm_new(double curvature, double scale, int32_t placement);

/**
 * Frees a context created by `hyp_norm_new`. Null is a no-op.
 *
 * # Safety
 * `handle` must be null or a pointer returned by `hyp_norm_new` that
 * has not been freed already.
 */
void hyp_norm_free(struct HypNormHandle *handle);

/**
 * out = s·ω(x)·x for one feature vector of length `dim`.
 *
 * # Safety
 * `x` and `out` must point to `dim` readable/writable doubles;
 * `handle` must be a live context.
 */
enum HypStatus hyp_norm_apply(const struct HypNormHandle *handle,
                              const double *x,
                              uintptr_t dim,
                              double *out);

/**
 * Writes ω(x) for one vector into `out`.
 *
 * # Safety
 * `x` must point to `dim` readable doubles; `out` to one writable.
 */
enum HypStatus hyp_omega(double curvature, const double *x, uintptr_t dim, double *out);

/**
 * Möbius addition a ⊕_c b; inputs are projected into the ball first.
 *
 * # Safety
 * `a`, `b`, `out` must each point to `dim` doubles.
 */
enum HypStatus hyp_mobius_add(double curvature,
                              const double *a,
                              const double *b,
                              uintptr_t dim,
                              double *out);

/**
 * exp₀ᶜ of a tangent vector.
 *
 * # Safety
 * `x` and `out` must point to `dim` doubles.
 */
enum HypStatus hyp_exp_map_origin(double curvature, const double *x, uintptr_t dim, double *out);

/**
 * log₀ᶜ of a ball point (projected into the ball first).
 *
 * # Safety
 * `p` and `out` must point to `dim` doubles.
 */
enum HypStatus hyp_log_map_origin(double curvature, const double *p, uintptr_t dim, double *out);

/**
 * Geodesic distance between two ball points.
 *
 * # Safety
 * `a` and `b` must point to `dim` doubles; `out` to one.
 */
enum HypStatus hyp_distance(double curvature,
                            const double *a,
                            const double *b,
                            uintptr_t dim,
                            double *out);

/**
 * Runs the full identity verification suite with the given seed.
 */
enum HypStatus hyp_verify_run(uint64_t seed);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* HYPNORM_H */
