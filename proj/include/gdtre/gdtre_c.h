#ifndef GDTRE_C_H
#define GDTRE_C_H

/* C interface of the gdtre solver library.
 *
 * All functions return a gdtre_status; GDTRE_OK means success.  On any
 * failure gdtre_last_error() carries a thread-local description of the most
 * recent error in the calling thread.  Strings handed out through char**
 * parameters are heap-allocated and must be released with
 * gdtre_string_free(); handles with their matching *_free function.
 *
 * Report strings are JSON envelopes
 *   {tool, command, digest, options, result, timing}
 * with deterministic content outside "timing" for fixed inputs and seeds.
 */

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gdtre_status {
  GDTRE_OK = 0,
  GDTRE_ERR_PARSE = 1,            /* malformed JSON or wrong shapes */
  GDTRE_ERR_VALIDATION = 2,       /* assumption violations in the data */
  GDTRE_ERR_NO_CONVERGENCE = 3,   /* iteration budget exhausted/diverged */
  GDTRE_ERR_NOT_STABILIZING = 4,  /* no stabilizing/admissible solution */
  GDTRE_ERR_SINGULAR = 5,         /* singular Rcal block encountered */
  GDTRE_ERR_SADDLE_VIOLATION = 6, /* saddle verification failed */
  GDTRE_ERR_INVALID_ARGUMENT = 7, /* bad handles, options, or shapes */
  GDTRE_ERR_INTERNAL = 8
} gdtre_status;

typedef struct gdtre_problem gdtre_problem;
typedef struct gdtre_solution gdtre_solution;

const char* gdtre_version(void);

/* Description of the last error in this thread; empty string when the last
 * call succeeded.  The pointer stays valid until the next library call in
 * the same thread. */
const char* gdtre_last_error(void);

void gdtre_string_free(char* s);

/* Problem files ---------------------------------------------------------- */

gdtre_status gdtre_problem_parse(const char* json, gdtre_problem** out);
void gdtre_problem_free(gdtre_problem* p);

/* Canonical serialization: stable key order, 17-significant-digit numbers;
 * byte-stable under parse/serialize round trips. */
gdtre_status gdtre_problem_canonical(const gdtre_problem* p, char** out);

/* Content hash of the canonical bytes. */
gdtre_status gdtre_problem_digest(const gdtre_problem* p, char** out);

/* Pipelines -------------------------------------------------------------- */

/* Structural validation.  GDTRE_OK on a clean report,
 * GDTRE_ERR_VALIDATION when violations are listed; the report is produced
 * in both cases. */
gdtre_status gdtre_validate(const gdtre_problem* p, char** report_out);

/* Stabilizing solver.  options_json may be NULL or an object with optional
 * keys "tol" and "max_sweeps".  On GDTRE_OK, *sol_out receives the solution
 * handle.  The report is produced whenever the solver ran, including on
 * non-converged outcomes. */
gdtre_status gdtre_solve(const gdtre_problem* p, const char* options_json,
                         gdtre_solution** sol_out, char** report_out);

/* Gain-pair membership test for the (K, W) gains extracted from a solution.
 * sol may be NULL, in which case the problem is solved first. */
gdtre_status gdtre_membership(const gdtre_problem* p,
                              const gdtre_solution* sol,
                              const char* options_json, char** report_out);

/* Stochastic detectability analysis. */
gdtre_status gdtre_detect(const gdtre_problem* p, char** report_out);

/* Saddle-point verification plus Monte Carlo cross-check.  Recognized
 * option keys: "tol", "max_sweeps", "seed", "perturbations",
 * "trajectories", "horizon", "noise_law", "antithetic", "x0", "t0". */
gdtre_status gdtre_verify(const gdtre_problem* p, const gdtre_solution* sol,
                          const char* options_json, char** report_out);

/* Monte Carlo rollout of the equilibrium feedback pair.  Same options as
 * gdtre_verify plus "format" ("json" or "csv"; csv adds a "csv" field to
 * the result). */
gdtre_status gdtre_simulate(const gdtre_problem* p, const gdtre_solution* sol,
                            const char* options_json, char** report_out);

/* Solution persistence --------------------------------------------------- */

gdtre_status gdtre_solution_to_json(const gdtre_problem* p,
                                    const gdtre_solution* sol, char** out);

/* Loads a stored solution and re-verifies it against the problem: the
 * digest must match, the stored values must satisfy the backward equation,
 * and the induced loop must be stable.  Tampered files are rejected with
 * GDTRE_ERR_NOT_STABILIZING. */
gdtre_status gdtre_solution_from_json(const gdtre_problem* p, const char* json,
                                      gdtre_solution** out);
void gdtre_solution_free(gdtre_solution* s);

#ifdef __cplusplus
}
#endif

#endif /* GDTRE_C_H */
