#ifndef CIRCLAW_H
#define CIRCLAW_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CirclawStatus {
  CIRCLAW_STATUS_OK = 0,
  CIRCLAW_STATUS_NULL_POINTER = 1,
  CIRCLAW_STATUS_INVALID_ARGUMENT = 2,
  CIRCLAW_STATUS_PROFILE_PARSE = 3,
  CIRCLAW_STATUS_PROFILE_INVALID = 4,
  CIRCLAW_STATUS_NO_CONVERGENCE = 5,
  CIRCLAW_STATUS_EDGE_TOO_CLOSE = 6,
  CIRCLAW_STATUS_NUMERIC = 7,
  CIRCLAW_STATUS_BUFFER_TOO_SMALL = 8,
  CIRCLAW_STATUS_PANIC = 9,
} CirclawStatus;

typedef enum CirclawSigmaMethod {
  CIRCLAW_SIGMA_METHOD_DERIVATIVE = 0,
  CIRCLAW_SIGMA_METHOD_INTEGRAL = 1,
} CirclawSigmaMethod;

/*
 Normalised variance profile.
 */
typedef struct CirclawProfile CirclawProfile;

/*
 Solution of the Dyson equation at one `(eta, tau)`.
 */
typedef struct CirclawSolution CirclawSolution;

typedef struct CirclawSolutionInfo {
  size_t n;
  double eta;
  double tau;
  double residual;
  size_t iterations;
  double mean_v1;
  double mean_u;
} CirclawSolutionInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer
 stays valid until the next call into the library on this thread.
 */
const char *circlaw_last_error(void);

/*
 Static, nul-terminated version string.
 */
const char *circlaw_version(void);

/*
 Constant profile `s_ij = 1/n`.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum CirclawStatus circlaw_profile_constant(size_t n, struct CirclawProfile **out);

/*
 Two-block profile, normalised to spectral radius one.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum CirclawStatus circlaw_profile_two_block(size_t n,
                                             double a,
                                             double b,
                                             double split,
                                             struct CirclawProfile **out);

/*
 Profile read from a CSV file, then normalised.

 # Safety
 `path` must be a nul-terminated string; `out` as above.
 */
enum CirclawStatus circlaw_profile_from_csv(const char *path, struct CirclawProfile **out);

/*
 Profile from `n * n` row-major entries, then normalised.

 # Safety
 `data` must point to `n * n` readable doubles; `out` as above.
 */
enum CirclawStatus circlaw_profile_from_matrix(size_t n,
                                               const double *data,
                                               struct CirclawProfile **out);

/*
 Dimension of the profile, or 0 for a null handle.

 # Safety
 `profile` must be null or a live handle.
 */
size_t circlaw_profile_n(const struct CirclawProfile *profile);

/*
 # Safety
 `profile` must be null or a handle not yet freed.
 */
void circlaw_profile_free(struct CirclawProfile *profile);

/*
 Solves the Dyson equation at `eta > 0`, `tau >= 0`.

 # Safety
 `profile` must be a live handle; `out` as above.
 */
enum CirclawStatus circlaw_solve(const struct CirclawProfile *profile,
                                 double eta,
                                 double tau,
                                 struct CirclawSolution **out);

/*
 Solves the `eta = 0` equation for `tau <= 1 - tau_star`.

 # Safety
 As [`circlaw_solve`].
 */
enum CirclawStatus circlaw_solve_limit(const struct CirclawProfile *profile,
                                       double tau,
                                       double tau_star,
                                       struct CirclawSolution **out);

/*
 # Safety
 `solution` must be a live handle and `info` writable.
 */
enum CirclawStatus circlaw_solution_info(const struct CirclawSolution *solution,
                                         struct CirclawSolutionInfo *info);

/*
 Copies `v1` (length `n`) into `buf`.

 # Safety
 `buf` must have room for `len` doubles.
 */
enum CirclawStatus circlaw_solution_v1(const struct CirclawSolution *solution,
                                       double *buf,
                                       size_t len);

/*
 # Safety
 As [`circlaw_solution_v1`].
 */
enum CirclawStatus circlaw_solution_v2(const struct CirclawSolution *solution,
                                       double *buf,
                                       size_t len);

/*
 # Safety
 As [`circlaw_solution_v1`].
 */
enum CirclawStatus circlaw_solution_u(const struct CirclawSolution *solution,
                                      double *buf,
                                      size_t len);

/*
 # Safety
 `solution` must be null or a handle not yet freed.
 */
void circlaw_solution_free(struct CirclawSolution *solution);

/*
 Density of states at `|z|^2 = tau`.

 # Safety
 `profile` must be a live handle and `out` writable.
 */
enum CirclawStatus circlaw_sigma(const struct CirclawProfile *profile,
                                 double tau,
                                 double tau_star,
                                 enum CirclawSigmaMethod method,
                                 double *out);

/*
 Mass of the density of states on the disk `|z|^2 <= tau`.

 # Safety
 As [`circlaw_sigma`].
 */
enum CirclawStatus circlaw_cumulative_mass(const struct CirclawProfile *profile,
                                           double tau,
                                           double tau_star,
                                           double *out);

/*
 Boundary value of the density at the spectral edge.

 # Safety
 As [`circlaw_sigma`].
 */
enum CirclawStatus circlaw_jump_height(const struct CirclawProfile *profile, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CIRCLAW_H */
