#ifndef PD_LAB_H
#define PD_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PdlStatus {
  PdlStatus_Ok = 0,
  PdlStatus_NullPointer = 1,
  PdlStatus_Domain = 2,
  PdlStatus_Numeric = 3,
  PdlStatus_Unsupported = 4,
  PdlStatus_Panic = 5,
} PdlStatus;

/**
 * Density and tail of the largest frequency at a fixed θ.
 */
typedef struct PdlDensityGrid PdlDensityGrid;

/**
 * Reproducible stream of ranked PD(θ) samples.
 */
typedef struct PdlSampler PdlSampler;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pdl_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
uintptr_t pdl_last_error(char *buf, uintptr_t len);

/**
 * Short name of a status code, as a static string.
 */
const char *pdl_status_name(enum PdlStatus status);

/**
 * `I(x) = ln 1/(1−x)`; `+∞` outside `[0, 1)`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum PdlStatus pdl_rate_i(double x, double *out);

/**
 * `I_k(x) = ln 1/(1−kx)` on `[0, 1/k)`; `+∞` elsewhere.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum PdlStatus pdl_rate_ik(uintptr_t k, double x, double *out);

/**
 * Numerical Legendre transform of the cumulant function at `x ∈ [0, 1)`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum PdlStatus pdl_legendre_transform(double x, double *out);

/**
 * Critical constant `c₀` of the homozygote-advantage transition.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum PdlStatus pdl_solve_c0(double *out);

/**
 * `E[P_k(θ)^n]`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum PdlStatus pdl_moment_pk(uintptr_t k, uint32_t n, double theta, double *out);

/**
 * `E[H_m(θ)]` for `m ≥ 2`, `θ ≥ 0`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum PdlStatus pdl_homozygosity_moment(uint32_t m, double theta, double *out);

/**
 * Builds a grid; `resolution = 0` selects the default.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum PdlStatus pdl_grid_new(double theta, uintptr_t resolution, struct PdlDensityGrid **out);

/**
 * # Safety
 * `grid` must be null or a handle from [`pdl_grid_new`] not yet freed.
 */
void pdl_grid_free(struct PdlDensityGrid *grid);

/**
 * `P{P1 ≥ x}`.
 *
 * # Safety
 * `grid` must be a live handle and `out` valid for writes.
 */
enum PdlStatus pdl_grid_tail(const struct PdlDensityGrid *grid, double x, double *out);

/**
 * Density of P1 at `p`.
 *
 * # Safety
 * `grid` must be a live handle and `out` valid for writes.
 */
enum PdlStatus pdl_grid_density(const struct PdlDensityGrid *grid, double p, double *out);

/**
 * Total mass of the tabulated density (1 up to quadrature error).
 *
 * # Safety
 * `grid` must be a live handle and `out` valid for writes.
 */
enum PdlStatus pdl_grid_normalization(const struct PdlDensityGrid *grid, double *out);

/**
 * # Safety
 * `out` must be valid for writes.
 */
enum PdlStatus pdl_sampler_new(double theta, uint64_t seed, struct PdlSampler **out);

/**
 * # Safety
 * `sampler` must be null or a handle from [`pdl_sampler_new`] not yet freed.
 */
void pdl_sampler_free(struct PdlSampler *sampler);

/**
 * Draws the next sample and writes its `cap` largest frequencies (zero-padded)
 * into `ranked` and the leftover mass into `residual`.
 *
 * # Safety
 * `sampler` must be a live handle, `ranked` valid for `cap` writes and
 * `residual` valid for writes.
 */
enum PdlStatus pdl_sampler_next(struct PdlSampler *sampler,
                                double *ranked,
                                uintptr_t cap,
                                double *residual);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PD_LAB_H */
