#pragma once

#include "gdtre/operators.hpp"

namespace gdtre {

// Sign structure of the quadratic form Rcal = R + pi3, ordered from
// strongest to weakest.  Strong requires R11-block negative definite and
// R22-block positive definite; Admissible relaxes the first condition to the
// Schur complement R11 - R12 R22^-1 R12^T; IndefiniteOnly means only the
// inertia (m1, 0, m2) holds; Degenerate is everything else.
enum class SignClass { Strong, Admissible, IndefiniteOnly, Degenerate };

const char* sign_class_name(SignClass c);

struct Inertia {
  int negatives = 0;
  int zeros = 0;
  int positives = 0;
};

struct SignReport {
  SignClass cls = SignClass::Degenerate;
  // Margins, +infinity when the corresponding block is empty:
  //   delta1: smallest eigenvalue of -(R11 - R12 R22^-1 R12^T) over modes,
  //   delta2: smallest eigenvalue of the R22 block over modes,
  //   delta3: smallest eigenvalue of the -R11 block over modes.
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
};

struct RiccatiIterate {
  SymTuple x;                     // value at time t
  std::vector<Matrix> rcal;      // R(t,i) + pi3(t)[X(t+1)](i), symmetric
  std::vector<Inertia> inertia;  // eigenvalue signs of rcal per mode
  SignReport sign;
};

struct StepResult {
  RiccatiIterate iterate;
  std::vector<Matrix> gains;  // F(t,i), m x n
};

// One backward step of the Riccati recursion:
//   X(t,i) = pi1 + M - (pi2 + L) Rcal^-1 (pi2 + L)^T,
//   F(t,i) = -Rcal^-1 (pi2 + L)^T.
// Throws SingularRcal when the reciprocal condition number of any Rcal(i)
// falls below 1e-12.
StepResult riccati_step(const ProblemSpec& spec, long t, const SymTuple& x_next);

// Measures the sign margins of an iterate and returns the strongest class
// whose margins exceed the threshold.
SignReport classify_sign(const RiccatiIterate& it, const Dims& dims,
                         double threshold = 1e-12);

struct VFactorization {
  std::vector<Matrix> v11;  // m1 x m1, symmetric positive definite
  std::vector<Matrix> v21;  // m2 x m1
  std::vector<Matrix> v22;  // m2 x m2, symmetric positive definite
};

// Indefinite factorization of an Admissible iterate:
//   Rcal = [V11 0; V21 V22]^T diag(-I, I) [V11 0; V21 V22]
// with V11 = (-(R11 - R12 R22^-1 R12^T))^{1/2}, V22 = R22^{1/2},
// V21 = R22^{-1/2} R12^T.  Square roots use symmetric eigendecompositions.
// Throws NotAdmissible when the iterate is not Admissible.
VFactorization v_factorize(const RiccatiIterate& it, const Dims& dims);

// Backward recursion from the zero terminal value at tau + 1 down to 0.
// The result is indexed by time: result[t] holds the step at t.
std::vector<StepResult> finite_horizon_solve(const ProblemSpec& spec, long tau);

enum class Schedule { Arithmetic, Geometric };

struct SolveOptions {
  double tol = -1.0;             // < 0: use the spec's convergence_tol
  long max_sweeps = -1;          // < 0: use the spec's max_sweeps
  double stability_margin = -1;  // < 0: use the spec's stability_margin
  Schedule schedule = Schedule::Arithmetic;
  long initial_sweeps = 0;  // period-sweeps run before testing convergence
  // Verify positive semidefiniteness of the limit.  Internal sign-flipped
  // solves disable this; their solutions are negative by construction.
  bool require_psd = true;
};

enum class SolveStatus {
  Converged,
  NoConvergence,
  NotStabilizing,
  SingularRcal,
  NotAdmissible,
};

const char* solve_status_name(SolveStatus s);

struct StabilizingSolution {
  SolveStatus status = SolveStatus::NoConvergence;
  std::vector<SymTuple> x;               // X(t) per phase, t = 0..period-1
  GainSchedule f;                        // F(t,i) per phase and mode, m x n
  std::vector<RiccatiIterate> iterates;  // per-phase sign and Rcal data
  long sweeps = 0;
  double last_delta = 0.0;  // final period-apart relative change
  double residual = 0.0;    // recomputed backward-equation residual
  double rho_closed = 0.0;  // closed-loop monodromy spectral radius
  SignClass sign_class = SignClass::Degenerate;
  double delta1 = 0.0;  // minima of the sign margins over phases
  double delta2 = 0.0;
  double delta3 = 0.0;
  double min_eig_x = 0.0;
  std::string detail;  // failure context when status != Converged
};

// Value iteration over whole periods from the zero terminal value.  After
// the period-apart change drops below tol, records a final sweep, recomputes
// the residual from scratch, closes the loop with the gains, and verifies
// mean-square stability, the Admissible sign class at every phase, and
// positive semidefiniteness of the limit.  Failures are reported through
// `status` with the limit attached; only malformed input throws.
StabilizingSolution stabilizing_solve(const ProblemSpec& spec,
                                      const SolveOptions& opts = {});

struct ComparisonReport {
  long tau = 0;
  // min over t in [0, tau] and modes of the smallest eigenvalue of
  // X2(t,i) - X1(t,i); nonnegative up to tolerance when Q2 >= Q1.
  double min_gap = 0.0;
};

// Monotonicity of the finite-horizon recursion in the weights.  Both specs
// must share the system data and chain; the stacked weight matrix
// [[M, L], [L^T, R]] of `upper` must dominate `lower`.
ComparisonReport compare_solutions(const ProblemSpec& lower,
                                   const ProblemSpec& upper, long tau);

// Right-hand side of the Riccati step rewritten around an arbitrary gain
// tuple gamma (one m x n matrix per mode):
//   adjoint_gamma(t)[Xnext] + M_gamma - (gamma - F)^T Rcal (gamma - F)
// with M_gamma = M + L gamma + gamma^T L^T + gamma^T R gamma.  Equals
// riccati_step's X for every gamma; used as a cross-implementation oracle.
SymTuple reparametrized_rhs(const ProblemSpec& spec, long t,
                            const SymTuple& x_next,
                            const std::vector<Matrix>& gamma);

}  // namespace gdtre
