/* C interface of the spinchannel correlated-channel simulator.
 * Times are the dimensionless J*t; basis strings are bit patterns with
 * qubit j at bit j-1 (set bit = excited). */

#ifndef SPINCHANNEL_FFI_H
#define SPINCHANNEL_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every fallible call.
 */
typedef enum ScStatus {
  ScStatus_Ok = 0,
  ScStatus_InvalidArgument = 1,
  ScStatus_DegenerateGroundState = 2,
  ScStatus_SizeLimitExceeded = 3,
  ScStatus_NumericalFailure = 4,
  ScStatus_NoRevivalFound = 5,
  ScStatus_IoError = 6,
} ScStatus;

/**
 * Zero-mode handling of the chain ground state.
 */
typedef enum ScZeroModePolicy {
  /**
   * Fail construction when a quasiparticle energy is numerically zero.
   */
  ScZeroModePolicy_Reject = 0,
  /**
   * Pick one parity sector deterministically.
   */
  ScZeroModePolicy_LeaveEmpty = 1,
} ScZeroModePolicy;

/**
 * Opaque echo-engine handle. Thread-safe: concurrent echo evaluations on
 * one engine are allowed.
 */
typedef struct ScEngine ScEngine;

/**
 * Opaque model-parameter handle.
 */
typedef struct ScParams ScParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread; valid until the next
 * failing call from the same thread. Never null.
 */
const char *sc_last_error_message(void);

/**
 * Builds a parameter set. `spacing` is the spacer count m between
 * consecutive coupled sites; returns null on invalid input (see
 * `sc_last_error_message`).
 */
struct ScParams *sc_params_new(uintptr_t n_qubits,
                               double gamma,
                               double lambda,
                               double coupling,
                               double epsilon,
                               uintptr_t spacing);

/**
 * Removes the nearest-neighbor bond with 0-based index `bond` (coupling
 * 0-based sites `bond` and `bond + 1`).
 *
 * # Safety
 * `params` must be a live pointer from [`sc_params_new`].
 */
enum ScStatus sc_params_break_bond(struct ScParams *params, uintptr_t bond);

/**
 * Chain length L = n + (n-1) m of a parameter set.
 *
 * # Safety
 * `params` must be a live pointer from [`sc_params_new`].
 */
uintptr_t sc_params_chain_length(const struct ScParams *params);

/**
 * # Safety
 * `params` must come from [`sc_params_new`] and not already be freed.
 */
void sc_params_free(struct ScParams *params);

/**
 * Builds an echo engine (diagonalizes the unperturbed chain once).
 *
 * # Safety
 * `params` and `out` must be valid pointers; `*out` receives the handle.
 */
enum ScStatus sc_engine_new(const struct ScParams *params,
                            enum ScZeroModePolicy policy,
                            struct ScEngine **out);

/**
 * # Safety
 * `engine` must come from [`sc_engine_new`] and not already be freed.
 */
void sc_engine_free(struct ScEngine *engine);

/**
 * Generalized Loschmidt echo L_xy at dimensionless time `jt`.
 *
 * # Safety
 * `engine`, `out_re`, `out_im` must be valid pointers.
 */
enum ScStatus sc_engine_echo(const struct ScEngine *engine,
                             uint64_t x_bits,
                             uint64_t y_bits,
                             double jt,
                             double *out_re,
                             double *out_im);

/**
 * Exact channel fidelity (guarded at 12 qubits).
 *
 * # Safety
 * `engine` and `out` must be valid pointers.
 */
enum ScStatus sc_engine_exact_fidelity(const struct ScEngine *engine, double jt, double *out);

/**
 * Exact Choi purity (guarded at 12 qubits).
 *
 * # Safety
 * `engine` and `out` must be valid pointers.
 */
enum ScStatus sc_engine_exact_purity(const struct ScEngine *engine, double jt, double *out);

/**
 * Channel entropy H(J) in bits (guarded at 12 qubits).
 *
 * # Safety
 * `engine` and `out` must be valid pointers.
 */
enum ScStatus sc_engine_channel_entropy(const struct ScEngine *engine, double jt, double *out);

/**
 * Sampled channel fidelity over `n_samples` uniform pairs; deterministic
 * in `seed`. `out_std_error` may be null.
 *
 * # Safety
 * `engine` and `out_value` must be valid pointers.
 */
enum ScStatus sc_engine_sampled_fidelity(const struct ScEngine *engine,
                                         double jt,
                                         uint64_t n_samples,
                                         uint64_t seed,
                                         double *out_value,
                                         double *out_std_error);

/**
 * Sampled Choi purity; see [`sc_engine_sampled_fidelity`].
 *
 * # Safety
 * `engine` and `out_value` must be valid pointers.
 */
enum ScStatus sc_engine_sampled_purity(const struct ScEngine *engine,
                                       double jt,
                                       uint64_t n_samples,
                                       uint64_t seed,
                                       double *out_value,
                                       double *out_std_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPINCHANNEL_FFI_H */
