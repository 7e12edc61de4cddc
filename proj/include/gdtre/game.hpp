#pragma once

#include "gdtre/synthesis.hpp"

namespace gdtre {

// Linear state-feedback strategies u1 = F1 x, u2 = F2 x.
struct StateFeedback {
  GainSchedule f1;  // [t][i], m1 x n
  GainSchedule f2;  // [t][i], m2 x n
};

// u1 = G x together with the responder u2 = K x + W u1.
struct FullInformationStrategy {
  GainSchedule u1;  // [t][i], m1 x n
  GainPair responder;
};

struct CostReport {
  bool stable = false;  // the closed loop under the pair is mean-square stable
  double rho = 0.0;
  Vector value_per_mode;         // x0^T Z(t0, i) x0, empty when not stable
  double expected_value = 0.0;   // weighted by the mode distribution at t0
  std::vector<SymTuple> z;       // periodic cost tuple, one per phase
};

// Distribution of the mode at time t, propagated from the initial
// distribution through the chain.
Vector mode_distribution(const MarkovSpec& markov, long t);

// Infinite-horizon value of the quadratic functional under a linear
// state-feedback pair, computed exactly as the periodic fixed point of the
// closed-loop backward Lyapunov equation with stage weight
// [I; F]^T [[M, L], [L^T, R]] [I; F].
CostReport exact_cost(const ProblemSpec& spec, const StateFeedback& pair,
                      const Vector& x0, long t0 = 0);

// x0^T E[X(t0, theta)] x0 for a supplied mode distribution at t0.
double game_value(const StabilizingSolution& sol, const Vector& x0, long t0,
                  const Vector& pi);

struct GainPerturbation {
  int player = 1;     // which gain is perturbed
  GainSchedule delta;  // [t][i]; m1 x n rows for player 1, m2 x n for player 2
};

struct PerturbationOutcome {
  int player = 0;
  bool es = false;  // perturbed pair mean-square stable; skipped otherwise
  double rho = 0.0;
  double cost = 0.0;
  double gap = 0.0;            // cost minus the equilibrium value
  double predicted_gap = 0.0;  // companion Lyapunov evaluation of the gap
  bool ok = false;
};

struct SaddleReport {
  // The saddle-point assertions need the Strong sign class; with only
  // Admissible margins the outcomes are reported but not asserted.
  bool strong = false;
  double mu1 = 0.0;
  double mu2 = 0.0;
  double equilibrium_value = 0.0;
  std::vector<PerturbationOutcome> outcomes;
  int skipped = 0;  // perturbations rejected by the ES screen
  bool all_ok = true;
};

// Saddle-point verification: each player-1 perturbation of the equilibrium
// gain must not increase the cost, each player-2 perturbation must not
// decrease it, and every measured gap must match its explicit companion
// Lyapunov decomposition.
SaddleReport verify_saddle_point(const ProblemSpec& spec,
                                 const StabilizingSolution& sol,
                                 const std::vector<GainPerturbation>& deltas,
                                 const Vector& x0, long t0 = 0,
                                 double tol = 1e-8);

struct FullInformationReport {
  bool stable = false;
  double equilibrium_value = 0.0;
  double direct_cost = 0.0;      // exact cost of the induced feedback pair
  double penalty = 0.0;          // nonnegative V11-weighted correction
  double decomposed_cost = 0.0;  // equilibrium_value - penalty
  bool ok = false;
};

// Value identity under the full-information responder: when u1 deviates to
// (F1 + delta) x and u2 answers with K x + W u1, the positive correction
// term vanishes and the cost equals the equilibrium value minus a
// V11-weighted penalty.  Both sides are computed independently.
FullInformationReport full_information_value_identity(
    const ProblemSpec& spec, const StabilizingSolution& sol,
    const GainSchedule& delta, const Vector& x0, long t0 = 0,
    double tol = 1e-8);

}  // namespace gdtre
