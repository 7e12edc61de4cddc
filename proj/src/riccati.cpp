#include "gdtre/riccati.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <sstream>

namespace gdtre {
namespace {

constexpr double kInverseRcond = 1e-12;
constexpr double kInertiaZeroTol = 1e-12;
const double kInf = std::numeric_limits<double>::infinity();

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose().eval()); }

Eigen::SelfAdjointEigenSolver<Matrix> sym_eig(const Matrix& m,
                                              const char* what) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success)
    throw Error(ErrorCode::InternalError,
                std::string("eigendecomposition failed for ") + what);
  return es;
}

double min_eig_of(const Matrix& m) {
  if (m.rows() == 0) return kInf;
  return sym_eig(m, "margin block").eigenvalues().minCoeff();
}

double max_eig_of(const Matrix& m) {
  if (m.rows() == 0) return -kInf;
  return sym_eig(m, "margin block").eigenvalues().maxCoeff();
}

// Inverse through the eigendecomposition; fails loudly when the reciprocal
// condition number drops below kInverseRcond.
Matrix inverse_checked(const Matrix& m, long t, int i, const char* what) {
  if (m.rows() == 0) return m;
  auto es = sym_eig(m, what);
  const Vector vals = es.eigenvalues();
  const double largest = vals.cwiseAbs().maxCoeff();
  const double smallest = vals.cwiseAbs().minCoeff();
  if (largest == 0.0 || smallest / largest < kInverseRcond) {
    std::ostringstream msg;
    msg << what << " is numerically singular at t=" << t << ", mode " << i
        << " (smallest |eigenvalue| " << smallest << ")";
    throw Error(ErrorCode::SingularRcal, msg.str());
  }
  return es.eigenvectors() * vals.cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

// Square root of a positive semidefinite matrix; negative ripple below the
// tolerance is clamped to zero.
Matrix sqrt_psd(const Matrix& m, const char* what) {
  if (m.rows() == 0) return m;
  auto es = sym_eig(m, what);
  Vector vals = es.eigenvalues();
  const double floor = -1e-10 * std::max(1.0, vals.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < vals.size(); ++k) {
    if (vals(k) < floor)
      throw Error(ErrorCode::PreconditionFailed,
                  std::string(what) + " is not positive semidefinite");
    vals(k) = std::sqrt(std::max(vals(k), 0.0));
  }
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

Matrix schur_block(const Matrix& rcal, const Dims& d, long t, int i) {
  const Matrix r11 = rcal.topLeftCorner(d.m1, d.m1);
  if (d.m2 == 0) return r11;
  const Matrix r12 = rcal.topRightCorner(d.m1, d.m2);
  const Matrix r22 = rcal.bottomRightCorner(d.m2, d.m2);
  return symmetrized(r11 - r12 * inverse_checked(r22, t, i, "R22 block") *
                               r12.transpose());
}

Inertia count_inertia(const Matrix& m) {
  Inertia out;
  if (m.rows() == 0) return out;
  auto es = sym_eig(m, "inertia");
  const Vector vals = es.eigenvalues();
  const double scale = std::max(1.0, vals.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < vals.size(); ++k) {
    if (std::abs(vals(k)) <= kInertiaZeroTol * scale)
      ++out.zeros;
    else if (vals(k) < 0.0)
      ++out.negatives;
    else
      ++out.positives;
  }
  return out;
}

double resolved(double user, double fallback) {
  return user < 0.0 ? fallback : user;
}

long resolved(long user, long fallback) { return user < 0 ? fallback : user; }

bool check_due(Schedule schedule, long sweep) {
  if (schedule == Schedule::Arithmetic) return true;
  return (sweep & (sweep - 1)) == 0;  // powers of two
}

}  // namespace

const char* sign_class_name(SignClass c) {
  switch (c) {
    case SignClass::Strong: return "Strong";
    case SignClass::Admissible: return "Admissible";
    case SignClass::IndefiniteOnly: return "IndefiniteOnly";
    case SignClass::Degenerate: return "Degenerate";
  }
  return "Degenerate";
}

const char* solve_status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "Converged";
    case SolveStatus::NoConvergence: return "NoConvergence";
    case SolveStatus::NotStabilizing: return "NotStabilizing";
    case SolveStatus::SingularRcal: return "SingularRcal";
    case SolveStatus::NotAdmissible: return "NotAdmissible";
  }
  return "NoConvergence";
}

SignReport classify_sign(const RiccatiIterate& it, const Dims& dims,
                         double threshold) {
  SignReport report;
  report.delta1 = kInf;
  report.delta2 = kInf;
  report.delta3 = kInf;
  const int N = static_cast<int>(it.rcal.size());
  for (int i = 0; i < N; ++i) {
    const Matrix& rcal = it.rcal[static_cast<size_t>(i)];
    if (dims.m2 > 0)
      report.delta2 = std::min(
          report.delta2,
          min_eig_of(rcal.bottomRightCorner(dims.m2, dims.m2)));
    if (dims.m1 > 0)
      report.delta3 = std::min(
          report.delta3, -max_eig_of(rcal.topLeftCorner(dims.m1, dims.m1)));
  }
  // The Schur complement needs an invertible R22 block; measure it only
  // when the positivity margin already holds.
  if (dims.m1 > 0) {
    if (dims.m2 == 0 || report.delta2 > threshold) {
      for (int i = 0; i < N; ++i) {
        try {
          report.delta1 = std::min(
              report.delta1,
              -max_eig_of(schur_block(it.rcal[static_cast<size_t>(i)], dims,
                                      -1, i)));
        } catch (const Error&) {
          report.delta1 = -kInf;
          break;
        }
      }
    } else {
      report.delta1 = -kInf;
    }
  }
  const bool positive_ok = dims.m2 == 0 || report.delta2 > threshold;
  if (positive_ok && (dims.m1 == 0 || report.delta3 > threshold)) {
    report.cls = SignClass::Strong;
  } else if (positive_ok && (dims.m1 == 0 || report.delta1 > threshold)) {
    report.cls = SignClass::Admissible;
  } else {
    bool inertia_ok = true;
    for (const Inertia& in : it.inertia)
      if (in.negatives != dims.m1 || in.zeros != 0 || in.positives != dims.m2)
        inertia_ok = false;
    report.cls = inertia_ok ? SignClass::IndefiniteOnly : SignClass::Degenerate;
  }
  return report;
}

StepResult riccati_step(const ProblemSpec& spec, long t,
                        const SymTuple& x_next) {
  const Dims& d = spec.dims;
  PiValues pi = pi_operators(spec, t, x_next);
  StepResult out;
  out.iterate.x = SymTuple(d.N, d.n);
  out.iterate.rcal.reserve(static_cast<size_t>(d.N));
  out.iterate.inertia.reserve(static_cast<size_t>(d.N));
  out.gains.reserve(static_cast<size_t>(d.N));
  for (int i = 0; i < d.N; ++i) {
    Matrix rcal = symmetrized(spec.R(t, i) + pi.pi3[static_cast<size_t>(i)]);
    Matrix s = pi.pi2[static_cast<size_t>(i)] + spec.L(t, i);  // n x m
    Matrix f = -inverse_checked(rcal, t, i, "Rcal") * s.transpose();
    out.iterate.x.set(i, pi.pi1[static_cast<size_t>(i)] + spec.M(t, i) + s * f);
    out.iterate.inertia.push_back(count_inertia(rcal));
    out.iterate.rcal.push_back(std::move(rcal));
    out.gains.push_back(std::move(f));
  }
  out.iterate.sign = classify_sign(out.iterate, d);
  return out;
}

VFactorization v_factorize(const RiccatiIterate& it, const Dims& dims) {
  if (it.sign.cls != SignClass::Admissible && it.sign.cls != SignClass::Strong)
    throw Error(ErrorCode::NotAdmissible,
                "V-factorization requires an Admissible iterate, got " +
                    std::string(sign_class_name(it.sign.cls)));
  VFactorization out;
  for (size_t i = 0; i < it.rcal.size(); ++i) {
    const Matrix& rcal = it.rcal[i];
    const Matrix r12 = rcal.topRightCorner(dims.m1, dims.m2);
    const Matrix r22 = rcal.bottomRightCorner(dims.m2, dims.m2);
    const Matrix v22 = sqrt_psd(r22, "R22 block");
    const Matrix schur =
        schur_block(rcal, dims, -1, static_cast<int>(i));
    out.v11.push_back(sqrt_psd(-schur, "negated Schur complement"));
    out.v21.push_back(inverse_checked(v22, -1, static_cast<int>(i),
                                      "R22 square root") *
                      r12.transpose());
    out.v22.push_back(v22);
  }
  return out;
}

std::vector<StepResult> finite_horizon_solve(const ProblemSpec& spec,
                                             long tau) {
  if (tau < 0)
    throw Error(ErrorCode::InvalidArgument, "horizon must be nonnegative");
  std::vector<StepResult> out(static_cast<size_t>(tau) + 1);
  SymTuple next(spec.dims.N, spec.dims.n);
  for (long t = tau; t >= 0; --t) {
    out[static_cast<size_t>(t)] = riccati_step(spec, t, next);
    next = out[static_cast<size_t>(t)].iterate.x;
  }
  return out;
}

StabilizingSolution stabilizing_solve(const ProblemSpec& spec,
                                      const SolveOptions& opts) {
  const double tol = resolved(opts.tol, spec.tol.convergence_tol);
  const long max_sweeps = resolved(opts.max_sweeps, spec.tol.max_sweeps);
  const double margin =
      resolved(opts.stability_margin, spec.tol.stability_margin);
  const int period = spec.dims.period;

  StabilizingSolution sol;
  std::vector<SymTuple> s(static_cast<size_t>(period),
                          SymTuple(spec.dims.N, spec.dims.n));
  bool settled = false;
  try {
    for (long sweep = 1; sweep <= max_sweeps; ++sweep) {
      std::vector<SymTuple> prev = s;
      s[static_cast<size_t>(period) - 1] =
          riccati_step(spec, period - 1, prev[0]).iterate.x;
      for (int t = period - 2; t >= 0; --t)
        s[static_cast<size_t>(t)] =
            riccati_step(spec, t, s[static_cast<size_t>(t) + 1]).iterate.x;
      sol.sweeps = sweep;
      double change = 0.0;
      double scale = 0.0;
      for (int t = 0; t < period; ++t) {
        change = std::max(change, rel_change(s[static_cast<size_t>(t)],
                                             prev[static_cast<size_t>(t)]));
        scale = std::max(scale, s[static_cast<size_t>(t)].norm());
      }
      sol.last_delta = change;
      if (scale > 1e100) {
        sol.detail = "iterates diverged";
        sol.status = SolveStatus::NoConvergence;
        return sol;
      }
      if (sweep > opts.initial_sweeps && check_due(opts.schedule, sweep) &&
          change < tol) {
        settled = true;
        break;
      }
    }
  } catch (const Error& e) {
    if (e.code != ErrorCode::SingularRcal) throw;
    sol.status = SolveStatus::SingularRcal;
    sol.detail = e.what();
    return sol;
  }
  if (!settled) {
    sol.status = SolveStatus::NoConvergence;
    sol.detail = "no convergence within the sweep budget (last change " +
                 std::to_string(sol.last_delta) + ")";
    return sol;
  }

  // Tighten the converged values with one more chained sweep, then derive
  // gains and curvature blocks from exactly the stored values.  Everything
  // besides x is a pure function of x, so a serialized solution reloads to
  // the same state bit for bit.
  std::vector<SymTuple> tightened(static_cast<size_t>(period));
  try {
    tightened[static_cast<size_t>(period) - 1] =
        riccati_step(spec, period - 1, s[0]).iterate.x;
    for (int t = period - 2; t >= 0; --t)
      tightened[static_cast<size_t>(t)] =
          riccati_step(spec, t, tightened[static_cast<size_t>(t) + 1])
              .iterate.x;
    sol.x = std::move(tightened);
    sol.f.resize(static_cast<size_t>(period));
    sol.iterates.resize(static_cast<size_t>(period));
    sol.residual = 0.0;
    for (int t = 0; t < period; ++t) {
      StepResult step = riccati_step(
          spec, t, sol.x[static_cast<size_t>((t + 1) % period)]);
      sol.residual = std::max(
          sol.residual,
          rel_change(step.iterate.x, sol.x[static_cast<size_t>(t)]));
      sol.f[static_cast<size_t>(t)] = step.gains;
      sol.iterates[static_cast<size_t>(t)] = std::move(step.iterate);
    }
  } catch (const Error& e) {
    if (e.code != ErrorCode::SingularRcal) throw;
    sol.status = SolveStatus::SingularRcal;
    sol.detail = e.what();
    return sol;
  }

  sol.delta1 = kInf;
  sol.delta2 = kInf;
  sol.delta3 = kInf;
  sol.sign_class = SignClass::Strong;
  for (const RiccatiIterate& it : sol.iterates) {
    sol.delta1 = std::min(sol.delta1, it.sign.delta1);
    sol.delta2 = std::min(sol.delta2, it.sign.delta2);
    sol.delta3 = std::min(sol.delta3, it.sign.delta3);
    if (static_cast<int>(it.sign.cls) > static_cast<int>(sol.sign_class))
      sol.sign_class = it.sign.cls;
  }
  sol.min_eig_x = kInf;
  double x_scale = 0.0;
  for (const SymTuple& xt : sol.x) {
    sol.min_eig_x = std::min(sol.min_eig_x, xt.min_eig());
    x_scale = std::max(x_scale, xt.norm());
  }

  LyapunovOperator closed = LyapunovOperator::from_spec(spec, &sol.f);
  sol.rho_closed = spectral_radius(closed).rho;

  sol.status = SolveStatus::Converged;
  if (!(sol.rho_closed < 1.0 - margin)) {
    sol.status = SolveStatus::NotStabilizing;
    sol.detail = "closed-loop spectral radius " +
                 std::to_string(sol.rho_closed) +
                 " is not below 1 within the stability margin";
  } else if (opts.require_psd && sol.min_eig_x < -1e-8 * (1.0 + x_scale)) {
    sol.status = SolveStatus::NotStabilizing;
    sol.detail = "limit is not positive semidefinite (smallest eigenvalue " +
                 std::to_string(sol.min_eig_x) + ")";
  } else if (sol.sign_class != SignClass::Admissible &&
             sol.sign_class != SignClass::Strong) {
    sol.status = SolveStatus::NotAdmissible;
    sol.detail = std::string("sign class at the limit is ") +
                 sign_class_name(sol.sign_class);
  }
  return sol;
}

ComparisonReport compare_solutions(const ProblemSpec& lower,
                                   const ProblemSpec& upper, long tau) {
  const Dims& d = lower.dims;
  if (d.n != upper.dims.n || d.m1 != upper.dims.m1 || d.m2 != upper.dims.m2 ||
      d.r != upper.dims.r || d.N != upper.dims.N ||
      d.period != upper.dims.period)
    throw Error(ErrorCode::PreconditionFailed,
                "comparison requires matching dimensions");
  for (int t = 0; t < d.period; ++t) {
    if ((lower.P(t) - upper.P(t)).norm() != 0.0)
      throw Error(ErrorCode::PreconditionFailed,
                  "comparison requires a shared chain");
    for (int k = 0; k <= d.r; ++k)
      for (int i = 0; i < d.N; ++i)
        if ((lower.A(t, k, i) - upper.A(t, k, i)).norm() != 0.0 ||
            (lower.B(t, k, i) - upper.B(t, k, i)).norm() != 0.0)
          throw Error(ErrorCode::PreconditionFailed,
                      "comparison requires shared system matrices");
    for (int i = 0; i < d.N; ++i) {
      const int nm = d.n + d.m();
      Matrix q1(nm, nm), q2(nm, nm);
      q1 << lower.M(t, i), lower.L(t, i), lower.L(t, i).transpose(),
          lower.R(t, i);
      q2 << upper.M(t, i), upper.L(t, i), upper.L(t, i).transpose(),
          upper.R(t, i);
      const Matrix gap = symmetrized(q2 - q1);
      const double floor = -1e-12 * std::max(1.0, gap.cwiseAbs().maxCoeff());
      if (min_eig_of(gap) < floor) {
        std::ostringstream msg;
        msg << "weight ordering violated at t=" << t << ", mode " << i;
        throw Error(ErrorCode::PreconditionFailed, msg.str());
      }
    }
  }
  std::vector<StepResult> run1 = finite_horizon_solve(lower, tau);
  std::vector<StepResult> run2 = finite_horizon_solve(upper, tau);
  ComparisonReport report;
  report.tau = tau;
  report.min_gap = kInf;
  for (long t = 0; t <= tau; ++t) {
    const RiccatiIterate& it1 = run1[static_cast<size_t>(t)].iterate;
    const RiccatiIterate& it2 = run2[static_cast<size_t>(t)].iterate;
    if (it2.sign.cls != SignClass::Admissible &&
        it2.sign.cls != SignClass::Strong)
      throw Error(ErrorCode::PreconditionFailed,
                  "upper recursion left the Admissible class");
    if (d.m2 > 0 && !(it1.sign.delta2 > 0.0))
      throw Error(ErrorCode::PreconditionFailed,
                  "lower recursion lost positivity of the R22 block");
    for (int i = 0; i < d.N; ++i)
      report.min_gap =
          std::min(report.min_gap, min_eig_of(it2.x[i] - it1.x[i]));
  }
  return report;
}

SymTuple reparametrized_rhs(const ProblemSpec& spec, long t,
                            const SymTuple& x_next,
                            const std::vector<Matrix>& gamma) {
  const Dims& d = spec.dims;
  if (static_cast<int>(gamma.size()) != d.N)
    throw Error(ErrorCode::InvalidArgument, "one gain per mode required");
  StepResult step = riccati_step(spec, t, x_next);
  GainSchedule schedule(static_cast<size_t>(d.period), gamma);
  LyapunovOperator closed = LyapunovOperator::from_spec(spec, &schedule);
  SymTuple pulled = closed.adjoint(t, x_next);
  SymTuple out(d.N, d.n);
  for (int i = 0; i < d.N; ++i) {
    const Matrix& g = gamma[static_cast<size_t>(i)];
    Matrix weight = spec.M(t, i) + spec.L(t, i) * g +
                    g.transpose() * spec.L(t, i).transpose() +
                    g.transpose() * spec.R(t, i) * g;
    Matrix mismatch = g - step.gains[static_cast<size_t>(i)];
    out.set(i, pulled[i] + weight -
                   mismatch.transpose() *
                       step.iterate.rcal[static_cast<size_t>(i)] * mismatch);
  }
  return out;
}

}  // namespace gdtre
