#include "gdtre/game.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "gdtre/operators.hpp"

namespace gdtre {

namespace {

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

void check_schedule(const GainSchedule& g, const ProblemSpec& spec, int rows,
                    const char* what) {
  if (static_cast<int>(g.size()) != spec.dims.period) {
    throw Error(ErrorCode::InvalidArgument,
                std::string(what) + " has wrong number of phases");
  }
  for (const auto& phase : g) {
    if (static_cast<int>(phase.size()) != spec.dims.N) {
      throw Error(ErrorCode::InvalidArgument,
                  std::string(what) + " has wrong number of modes");
    }
    for (const auto& m : phase) {
      if (m.rows() != rows || m.cols() != spec.dims.n) {
        throw Error(ErrorCode::InvalidArgument,
                    std::string(what) + " entry has wrong shape");
      }
    }
  }
}

// Stage weights C(t,i) = [I; F]^T [[M, L], [L^T, R]] [I; F] of the closed
// loop under the stacked gain schedule.
std::vector<SymTuple> stage_weights(const ProblemSpec& spec,
                                    const GainSchedule& f) {
  std::vector<SymTuple> c(static_cast<size_t>(spec.dims.period));
  for (int t = 0; t < spec.dims.period; ++t) {
    SymTuple ct(spec.dims.N, spec.dims.n);
    for (int i = 0; i < spec.dims.N; ++i) {
      const Matrix& fi = f[static_cast<size_t>(t)][static_cast<size_t>(i)];
      Matrix lf = spec.L(t, i) * fi;
      Matrix value = spec.M(t, i) + lf + lf.transpose() +
                     fi.transpose() * spec.R(t, i) * fi;
      ct.set(i, symmetrized(value));
    }
    c[static_cast<size_t>(t)] = ct;
  }
  return c;
}

double weighted_value(const std::vector<SymTuple>& z, int phase,
                      const Vector& pi, const Vector& x0) {
  const SymTuple& zt = z[static_cast<size_t>(phase)];
  double total = 0.0;
  for (int i = 0; i < zt.modes(); ++i) {
    total += pi(i) * x0.dot(zt[i] * x0);
  }
  return total;
}

// Expected accumulated cost sum_t E[x^T C(t, theta_t) x] along the loop
// closed by the stacked gains, evaluated at (x0, t0).  The caller must have
// screened the loop for mean-square stability.
double companion_cost(const ProblemSpec& spec, const GainSchedule& f,
                      const std::vector<SymTuple>& c, const Vector& x0,
                      long t0) {
  auto op = LyapunovOperator::from_spec(spec, &f);
  auto g = solve_periodic_backward(op, c, spec.tol.convergence_tol,
                                   spec.tol.max_sweeps);
  return weighted_value(g, spec.phase(t0), mode_distribution(spec.markov, t0),
                        x0);
}

}  // namespace

Vector mode_distribution(const MarkovSpec& markov, long t) {
  if (t < 0) {
    throw Error(ErrorCode::InvalidArgument,
                "mode distribution needs a nonnegative time");
  }
  Vector pi = markov.pi0;
  int p = markov.period();
  for (long s = 0; s < t; ++s) {
    const Matrix& pt = markov.P[static_cast<size_t>(((s % p) + p) % p)];
    pi = pt.transpose() * pi;
  }
  return pi;
}

CostReport exact_cost(const ProblemSpec& spec, const StateFeedback& pair,
                      const Vector& x0, long t0) {
  check_schedule(pair.f1, spec, spec.dims.m1, "player-1 gain schedule");
  check_schedule(pair.f2, spec, spec.dims.m2, "player-2 gain schedule");
  if (x0.size() != spec.dims.n) {
    throw Error(ErrorCode::InvalidArgument, "x0 has wrong dimension");
  }
  GainSchedule f = stack_gains(pair.f1, pair.f2);

  CostReport report;
  auto op = LyapunovOperator::from_spec(spec, &f);
  auto sr = spectral_radius(op);
  report.rho = sr.rho;
  if (sr.rho >= 1.0 - spec.tol.stability_margin) {
    report.stable = false;
    report.expected_value = std::numeric_limits<double>::quiet_NaN();
    return report;
  }
  report.stable = true;

  std::vector<SymTuple> c = stage_weights(spec, f);
  report.z = solve_periodic_backward(op, c, spec.tol.convergence_tol,
                                     spec.tol.max_sweeps);

  int phase = spec.phase(t0);
  Vector pi = mode_distribution(spec.markov, t0);
  const SymTuple& zt = report.z[static_cast<size_t>(phase)];
  report.value_per_mode = Vector::Zero(spec.dims.N);
  for (int i = 0; i < spec.dims.N; ++i) {
    report.value_per_mode(i) = x0.dot(zt[i] * x0);
  }
  report.expected_value = pi.dot(report.value_per_mode);
  return report;
}

double game_value(const StabilizingSolution& sol, const Vector& x0, long t0,
                  const Vector& pi) {
  if (sol.x.empty()) {
    throw Error(ErrorCode::InvalidArgument, "solution has no value tuples");
  }
  long p = static_cast<long>(sol.x.size());
  const SymTuple& xt = sol.x[static_cast<size_t>(((t0 % p) + p) % p)];
  if (pi.size() != xt.modes()) {
    throw Error(ErrorCode::InvalidArgument,
                "mode distribution has wrong dimension");
  }
  double total = 0.0;
  for (int i = 0; i < xt.modes(); ++i) {
    total += pi(i) * x0.dot(xt[i] * x0);
  }
  return total;
}

SaddleReport verify_saddle_point(const ProblemSpec& spec,
                                 const StabilizingSolution& sol,
                                 const std::vector<GainPerturbation>& deltas,
                                 const Vector& x0, long t0, double tol) {
  if (sol.status != SolveStatus::Converged) {
    throw Error(ErrorCode::PreconditionFailed,
                "saddle verification needs a converged solution");
  }
  SaddleReport report;
  report.strong = sol.sign_class == SignClass::Strong;
  report.mu1 = sol.delta3;
  report.mu2 = sol.delta2;

  auto [f1, f2] = split_gain(sol.f, spec.dims);
  Vector pi = mode_distribution(spec.markov, t0);
  report.equilibrium_value = game_value(sol, x0, t0, pi);
  double scale = 1.0 + std::abs(report.equilibrium_value);

  for (const auto& d : deltas) {
    PerturbationOutcome out;
    out.player = d.player;
    if (d.player != 1 && d.player != 2) {
      throw Error(ErrorCode::InvalidArgument, "perturbation player must be 1 or 2");
    }
    int rows = d.player == 1 ? spec.dims.m1 : spec.dims.m2;
    check_schedule(d.delta, spec, rows, "perturbation schedule");

    StateFeedback pair{f1, f2};
    GainSchedule& target = d.player == 1 ? pair.f1 : pair.f2;
    for (int t = 0; t < spec.dims.period; ++t) {
      for (int i = 0; i < spec.dims.N; ++i) {
        target[static_cast<size_t>(t)][static_cast<size_t>(i)] +=
            d.delta[static_cast<size_t>(t)][static_cast<size_t>(i)];
      }
    }

    CostReport cost = exact_cost(spec, pair, x0, t0);
    out.es = cost.stable;
    out.rho = cost.rho;
    if (!cost.stable) {
      report.skipped += 1;
      report.outcomes.push_back(out);
      continue;
    }
    out.cost = cost.expected_value;
    out.gap = out.cost - report.equilibrium_value;

    // Completion of squares along the equilibrium solution: the gap equals
    // the accumulated delta^T Rcal_block delta cost over the perturbed loop,
    // with the diagonal Rcal block of the perturbed player.
    std::vector<SymTuple> weight(static_cast<size_t>(spec.dims.period));
    for (int t = 0; t < spec.dims.period; ++t) {
      SymTuple wt(spec.dims.N, spec.dims.n);
      for (int i = 0; i < spec.dims.N; ++i) {
        const Matrix& rcal =
            sol.iterates[static_cast<size_t>(t)].rcal[static_cast<size_t>(i)];
        Matrix block = d.player == 1
                           ? rcal.topLeftCorner(spec.dims.m1, spec.dims.m1)
                           : rcal.bottomRightCorner(spec.dims.m2, spec.dims.m2);
        const Matrix& dt =
            d.delta[static_cast<size_t>(t)][static_cast<size_t>(i)];
        wt.set(i, symmetrized(dt.transpose() * block * dt));
      }
      weight[static_cast<size_t>(t)] = wt;
    }
    GainSchedule f = stack_gains(pair.f1, pair.f2);
    out.predicted_gap = companion_cost(spec, f, weight, x0, t0);

    bool decomposition_ok =
        std::abs(out.gap - out.predicted_gap) <=
        tol * (scale + std::abs(out.gap));
    bool sign_ok = true;
    if (report.strong) {
      sign_ok = d.player == 1 ? out.gap <= tol * scale : out.gap >= -tol * scale;
    }
    out.ok = decomposition_ok && sign_ok;
    if (!out.ok) report.all_ok = false;
    report.outcomes.push_back(out);
  }
  return report;
}

FullInformationReport full_information_value_identity(
    const ProblemSpec& spec, const StabilizingSolution& sol,
    const GainSchedule& delta, const Vector& x0, long t0, double tol) {
  check_schedule(delta, spec, spec.dims.m1, "player-1 deviation");
  FullInformationGains fig = full_information_gains(spec, sol);
  auto [f1, f2] = split_gain(sol.f, spec.dims);

  // The responder u2 = K x + W u1 answers u1 = (F1 + delta) x with
  // u2 = (K + W (F1 + delta)) x = (F2 + W delta) x.
  StateFeedback pair{f1, f2};
  for (int t = 0; t < spec.dims.period; ++t) {
    for (int i = 0; i < spec.dims.N; ++i) {
      size_t st = static_cast<size_t>(t);
      size_t si = static_cast<size_t>(i);
      pair.f1[st][si] += delta[st][si];
      pair.f2[st][si] += fig.w[st][si] * delta[st][si];
    }
  }

  FullInformationReport report;
  Vector pi = mode_distribution(spec.markov, t0);
  report.equilibrium_value = game_value(sol, x0, t0, pi);

  CostReport cost = exact_cost(spec, pair, x0, t0);
  report.stable = cost.stable;
  if (!cost.stable) return report;
  report.direct_cost = cost.expected_value;

  // The responder cancels the positive correction term exactly, leaving the
  // V11-weighted penalty: cost = value - sum_t E[|V11 delta x|^2].
  std::vector<SymTuple> weight(static_cast<size_t>(spec.dims.period));
  for (int t = 0; t < spec.dims.period; ++t) {
    SymTuple wt(spec.dims.N, spec.dims.n);
    const VFactorization& v = fig.v[static_cast<size_t>(t)];
    for (int i = 0; i < spec.dims.N; ++i) {
      const Matrix& v11 = v.v11[static_cast<size_t>(i)];
      const Matrix& dt = delta[static_cast<size_t>(t)][static_cast<size_t>(i)];
      Matrix vd = v11 * dt;
      wt.set(i, symmetrized(vd.transpose() * vd));
    }
    weight[static_cast<size_t>(t)] = wt;
  }
  GainSchedule f = stack_gains(pair.f1, pair.f2);
  report.penalty = companion_cost(spec, f, weight, x0, t0);
  report.decomposed_cost = report.equilibrium_value - report.penalty;

  double scale = 1.0 + std::abs(report.equilibrium_value);
  report.ok = std::abs(report.direct_cost - report.decomposed_cost) <=
                  tol * scale &&
              report.penalty >= -tol * scale;
  return report;
}

}  // namespace gdtre
