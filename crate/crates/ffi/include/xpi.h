#ifndef XPI_H
#define XPI_H

#include <stddef.h>
#include <stdint.h>

/*
 Result codes. `XPI_STATUS_OK` is zero; everything else is an error.
 */
typedef enum XpiStatus {
  XPI_STATUS_OK = 0,
  XPI_STATUS_NULL_POINTER = 1,
  XPI_STATUS_INVALID_ARGUMENT = 2,
  XPI_STATUS_DIMENSION_MISMATCH = 3,
  XPI_STATUS_INVALID_MEASURE = 4,
  XPI_STATUS_INVALID_MDP = 5,
  XPI_STATUS_SINGULAR = 6,
  XPI_STATUS_PARSE = 7,
  XPI_STATUS_IO = 8,
  XPI_STATUS_BUFFER_TOO_SMALL = 9,
  XPI_STATUS_PANIC = 10,
} XpiStatus;

/*
 Opaque MDP handle.
 */
typedef struct XpiMdp XpiMdp;

/*
 Opaque stochastic policy handle.
 */
typedef struct XpiPolicy XpiPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *xpi_version(void);

/*
 Message for the last failed call on this thread, or NULL. The pointer is
 valid until the next failing call on the same thread.
 */
const char *xpi_last_error_message(void);

/*
 Parses an MDP from a JSON document.

 # Safety
 `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum XpiStatus xpi_mdp_from_json(const char *json, struct XpiMdp **out);

/*
 Builds the four-state tightrope MDP with penalty `c`.

 # Safety
 `out` must be a writable pointer.
 */
enum XpiStatus xpi_mdp_tightrope(double c, double gamma, struct XpiMdp **out);

/*
 Builds a random Garnet MDP. `branching == 0` selects the default.

 # Safety
 `out` must be a writable pointer.
 */
enum XpiStatus xpi_mdp_garnet(size_t n_states,
                              size_t n_actions,
                              size_t branching,
                              uint64_t seed,
                              double gamma,
                              struct XpiMdp **out);

/*
 # Safety
 `mdp` must be NULL or a handle from this library not yet freed.
 */
void xpi_mdp_free(struct XpiMdp *mdp);

/*
 Number of states, or 0 for a NULL handle.

 # Safety
 `mdp` must be NULL or a live handle.
 */
size_t xpi_mdp_n_states(const struct XpiMdp *mdp);

/*
 Number of actions, or 0 for a NULL handle.

 # Safety
 `mdp` must be NULL or a live handle.
 */
size_t xpi_mdp_n_actions(const struct XpiMdp *mdp);

/*
 Discount factor, or NaN for a NULL handle.

 # Safety
 `mdp` must be NULL or a live handle.
 */
double xpi_mdp_gamma(const struct XpiMdp *mdp);

/*
 Serializes an MDP to JSON. Release the string with [`xpi_string_free`].

 # Safety
 `mdp` must be a live handle and `out` a writable pointer.
 */
enum XpiStatus xpi_mdp_to_json(const struct XpiMdp *mdp, char **out);

/*
 # Safety
 `s` must be NULL or a string returned by this library not yet freed.
 */
void xpi_string_free(char *s);

/*
 Policy from a row-major `n_states × n_actions` probability table.

 # Safety
 `probs` must point to `n_states * n_actions` doubles and `out` be writable.
 */
enum XpiStatus xpi_policy_from_probs(size_t n_states,
                                     size_t n_actions,
                                     const double *probs,
                                     struct XpiPolicy **out);

/*
 Deterministic policy taking `actions[s]` in state `s`.

 # Safety
 `actions` must point to `n_states` values and `out` be writable.
 */
enum XpiStatus xpi_policy_deterministic(size_t n_states,
                                        size_t n_actions,
                                        const size_t *actions,
                                        struct XpiPolicy **out);

/*
 # Safety
 `out` must be writable.
 */
enum XpiStatus xpi_policy_uniform(size_t n_states, size_t n_actions, struct XpiPolicy **out);

/*
 # Safety
 `policy` must be NULL or a live handle.
 */
void xpi_policy_free(struct XpiPolicy *policy);

/*
 Copies the probability table into `out` (row-major).

 # Safety
 `policy` must be live and `out` must hold `len` doubles.
 */
enum XpiStatus xpi_policy_probs(const struct XpiPolicy *policy, double *out, size_t len);

/*
 `v^π` into `out_values`.

 # Safety
 Handles must be live; `out_values` must hold `len` doubles.
 */
enum XpiStatus xpi_evaluate_policy(const struct XpiMdp *mdp,
                                   const struct XpiPolicy *policy,
                                   double *out_values,
                                   size_t len);

/*
 `v*` and a deterministic optimal policy by value iteration to `tol`.
 Either output may be NULL to skip it.

 # Safety
 `mdp` must be live; non-NULL outputs must hold `len` elements.
 */
enum XpiStatus xpi_solve_optimal(const struct XpiMdp *mdp,
                                 double tol,
                                 double *out_values,
                                 size_t *out_actions,
                                 size_t len);

/*
 `ξ = γ(1-κ)/(1-γκ)`.

 # Safety
 `out` must be writable.
 */
enum XpiStatus xpi_xi(double gamma, double kappa, double *out);

/*
 Actions of a κ-greedy policy with respect to `values`.

 # Safety
 `mdp` must be live; `values` and `out_actions` must hold `len` elements.
 */
enum XpiStatus xpi_kappa_greedy(const struct XpiMdp *mdp,
                                const double *values,
                                double kappa,
                                double tol,
                                size_t *out_actions,
                                size_t len);

/*
 `T_κ v` into `out_values`.

 # Safety
 `mdp` must be live; `values` and `out_values` must hold `len` doubles.
 */
enum XpiStatus xpi_apply_t_kappa(const struct XpiMdp *mdp,
                                 const double *values,
                                 double kappa,
                                 double tol,
                                 double *out_values,
                                 size_t len);

/*
 Exact κ-PI from the uniform policy. Writes the final value and actions
 and the number of improvement steps taken.

 # Safety
 `mdp` must be live; outputs must hold `len` elements; `out_iters` may be NULL.
 */
enum XpiStatus xpi_kappa_pi(const struct XpiMdp *mdp,
                            double kappa,
                            double tol,
                            size_t max_iters,
                            double *out_values,
                            size_t *out_actions,
                            size_t len,
                            size_t *out_iters);

/*
 Concentrability ratios `c(0..=i_max)` for measures `mu`, `nu`.

 # Safety
 `mdp` must be live; `mu`, `nu` must hold `n_states` doubles; `out` must
 hold `len ≥ i_max + 1` doubles.
 */
enum XpiStatus xpi_c_seq(const struct XpiMdp *mdp,
                         const double *mu,
                         const double *nu,
                         size_t i_max,
                         double *out,
                         size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XPI_H */
