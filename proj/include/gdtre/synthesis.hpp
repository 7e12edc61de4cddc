#pragma once

#include "gdtre/riccati.hpp"

namespace gdtre {

// Feedback pair u2 = K x + W u1 defining a candidate closed loop.
struct GainPair {
  GainSchedule k;  // [t][i], m2 x n
  GainSchedule w;  // [t][i], m2 x m1; all-zero encodes the W = 0 subclass
};

// Row partition of full gains F into (F1; F2) with m1 and m2 rows.
std::pair<GainSchedule, GainSchedule> split_gain(const GainSchedule& f,
                                                 const Dims& dims);
GainSchedule stack_gains(const GainSchedule& f1, const GainSchedule& f2);

// The problem seen by u1 after substituting u2 = K x + W u1:
//   A_k -> A_k + B_k2 K,   B_k -> B_k1 + B_k2 W,
//   M   -> M + L2 K + K^T L2^T + K^T R22 K,
//   L   -> L1 + K^T R12^T + (L2 + K^T R22) W,
//   R   -> [I; W]^T R [I; W],
// carried by a ProblemSpec with input partition (m1, 0).
struct ClosedLoopSpec {
  ProblemSpec spec;
  std::string parent_digest;
  GainPair gains;
};

ClosedLoopSpec close_loop(const ProblemSpec& spec, const GainPair& gains);

enum class MembershipStatus {
  Member,
  NotStabilizingGain,
  NoStabilizingClosedLoopSolution,
};

const char* membership_status_name(MembershipStatus s);

struct MembershipReport {
  MembershipStatus status = MembershipStatus::NotStabilizingGain;
  double rho_system = 0.0;  // spectral radius of the u2-closed system alone
  double xi = 0.0;    // negativity margin of R_W + Pi3_closed at the solution
  std::vector<SymTuple> x_kw;  // solution of the closed-loop equation, per phase
  double min_eig_x = 0.0;
  SignClass parent_class = SignClass::Degenerate;  // class of R + pi3[x_kw]
  bool w_zero = false;
  std::string detail;
};

// Tests whether (K, W) closes the system mean-square stably and the
// closed-loop equation has a bounded stabilizing solution with a definite
// negative sign.  The second condition is solved through the sign flip
// Y = -X, which turns the closed-loop equation into a definite-sign problem
// handled by stabilizing_solve; the flipped solution's positivity margin is
// exactly xi.
MembershipReport a_sigma_membership(const ProblemSpec& spec,
                                    const GainPair& gains);

struct FullInformationGains {
  GainSchedule k;                 // m2 x n
  GainSchedule w;                 // m2 x m1
  std::vector<VFactorization> v;  // per phase
};

// Gains of the u2 player when it observes u1:
//   K = V22^-1 [V21 V22] F,   W = -V22^-1 V21,
// built from the V-factorization of the solution's Rcal at every phase.
// Satisfies K + W F1 = F2.  Throws NotAdmissible when any phase is outside
// the Admissible class.
FullInformationGains full_information_gains(const ProblemSpec& spec,
                                            const StabilizingSolution& sol);

struct DetectabilityResult {
  bool detectable = false;
  // The synthesis recursion diverged; the system is not certified, which is
  // not a proof of undetectability.
  bool synthesis_diverged = false;
  GainSchedule h;                       // [t][i], n x p(t,i)
  std::vector<std::vector<Matrix>> c;   // [t][i], p(t,i) x n output maps
  double rho_injected = 0.0;
  std::string detail;
};

// Stochastic detectability of the auxiliary pair (A_check, C_check) with
//   A_check_k = A_k - B_k2 R22^-1 L2^T,
//   C_check^T C_check = M - L2 R22^-1 L2^T  (rank-revealing factorization).
// With an injection schedule supplied, only verifies it; otherwise
// synthesizes one by a forward covariance recursion with a
// completion-of-squares injection and then re-verifies it independently.
DetectabilityResult auxiliary_detectability(const ProblemSpec& spec,
                                            const GainSchedule* h = nullptr);

}  // namespace gdtre
