#include "gdtre/synthesis.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>
#include <utility>

namespace gdtre {
namespace {

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose().eval()); }

Matrix inverse_spd(const Matrix& m, const char* what) {
  if (m.rows() == 0) return m;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success)
    throw Error(ErrorCode::InternalError,
                std::string("eigendecomposition failed for ") + what);
  const Vector vals = es.eigenvalues();
  if (vals.minCoeff() <= 0.0 ||
      vals.minCoeff() / vals.maxCoeff() < 1e-14)
    throw Error(ErrorCode::SingularRcal,
                std::string(what) + " is not safely positive definite");
  return es.eigenvectors() * vals.cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

bool admissible(SignClass c) {
  return c == SignClass::Admissible || c == SignClass::Strong;
}

// Weakest of two classes under the order Strong > Admissible >
// IndefiniteOnly > Degenerate.
SignClass weaker(SignClass a, SignClass b) {
  return static_cast<int>(a) > static_cast<int>(b) ? a : b;
}

}  // namespace

std::pair<GainSchedule, GainSchedule> split_gain(const GainSchedule& f,
                                                 const Dims& dims) {
  GainSchedule f1(f.size()), f2(f.size());
  for (size_t t = 0; t < f.size(); ++t) {
    f1[t].reserve(f[t].size());
    f2[t].reserve(f[t].size());
    for (const Matrix& gain : f[t]) {
      f1[t].push_back(gain.topRows(dims.m1));
      f2[t].push_back(gain.bottomRows(dims.m2));
    }
  }
  return {std::move(f1), std::move(f2)};
}

GainSchedule stack_gains(const GainSchedule& f1, const GainSchedule& f2) {
  GainSchedule f(f1.size());
  for (size_t t = 0; t < f1.size(); ++t) {
    for (size_t i = 0; i < f1[t].size(); ++i) {
      Matrix stacked(f1[t][i].rows() + f2[t][i].rows(), f1[t][i].cols());
      stacked << f1[t][i], f2[t][i];
      f[t].push_back(std::move(stacked));
    }
  }
  return f;
}

ClosedLoopSpec close_loop(const ProblemSpec& spec, const GainPair& gains) {
  const Dims& d = spec.dims;
  ClosedLoopSpec out;
  out.parent_digest = problem_digest(spec);
  out.gains = gains;
  ProblemSpec& cl = out.spec;
  cl.dims = d;
  cl.dims.m1 = d.m1;
  cl.dims.m2 = 0;
  cl.markov = spec.markov;
  cl.tol = spec.tol;
  cl.sys.A.resize(static_cast<size_t>(d.period));
  cl.sys.B.resize(static_cast<size_t>(d.period));
  cl.weights.M.resize(static_cast<size_t>(d.period));
  cl.weights.L.resize(static_cast<size_t>(d.period));
  cl.weights.R.resize(static_cast<size_t>(d.period));
  cl.weights.rho1 = spec.weights.rho1;
  cl.weights.rho2 = spec.weights.rho2;
  for (int t = 0; t < d.period; ++t) {
    auto& at = cl.sys.A[static_cast<size_t>(t)];
    auto& bt = cl.sys.B[static_cast<size_t>(t)];
    at.resize(static_cast<size_t>(d.r) + 1);
    bt.resize(static_cast<size_t>(d.r) + 1);
    for (int i = 0; i < d.N; ++i) {
      const Matrix& k = gains.k[static_cast<size_t>(t)][static_cast<size_t>(i)];
      const Matrix& w = gains.w[static_cast<size_t>(t)][static_cast<size_t>(i)];
      // Substitute u = Sx x + Su u1 with Sx = [0; K], Su = [I; W].
      Matrix sx(d.m(), d.n);
      sx << Matrix::Zero(d.m1, d.n), k;
      Matrix su(d.m(), d.m1);
      su << Matrix::Identity(d.m1, d.m1), w;
      for (int j = 0; j <= d.r; ++j) {
        at[static_cast<size_t>(j)].push_back(spec.A(t, j, i) +
                                             spec.B(t, j, i) * sx);
        bt[static_cast<size_t>(j)].push_back(spec.B(t, j, i) * su);
      }
      const Matrix L = spec.L(t, i);
      const Matrix R = spec.R(t, i);
      cl.weights.M[static_cast<size_t>(t)].push_back(symmetrized(
          spec.M(t, i) + L * sx + sx.transpose() * L.transpose() +
          sx.transpose() * R * sx));
      cl.weights.L[static_cast<size_t>(t)].push_back(L * su +
                                                     sx.transpose() * R * su);
      cl.weights.R[static_cast<size_t>(t)].push_back(
          symmetrized(su.transpose() * R * su));
    }
  }
  return out;
}

const char* membership_status_name(MembershipStatus s) {
  switch (s) {
    case MembershipStatus::Member: return "Member";
    case MembershipStatus::NotStabilizingGain: return "NotStabilizingGain";
    case MembershipStatus::NoStabilizingClosedLoopSolution:
      return "NoStabilizingClosedLoopSolution";
  }
  return "NotStabilizingGain";
}

MembershipReport a_sigma_membership(const ProblemSpec& spec,
                                    const GainPair& gains) {
  const Dims& d = spec.dims;
  MembershipReport report;
  report.w_zero = true;
  for (const auto& row : gains.w)
    for (const Matrix& w : row)
      if (w.size() > 0 && w.norm() != 0.0) report.w_zero = false;

  ClosedLoopSpec closed = close_loop(spec, gains);

  // Condition i): the u2-closed system alone is mean-square stable.
  LyapunovOperator sys = LyapunovOperator::from_spec(closed.spec);
  report.rho_system = spectral_radius(sys).rho;
  if (!(report.rho_system < 1.0 - spec.tol.stability_margin)) {
    report.status = MembershipStatus::NotStabilizingGain;
    report.detail = "the gain pair does not stabilize the system (rho " +
                    std::to_string(report.rho_system) + ")";
    return report;
  }

  // Condition ii): the closed-loop equation has a bounded stabilizing
  // solution with R_W + pi3[X] negative definite.  Flip Y = -X to obtain a
  // definite-sign problem for the same solver.
  ProblemSpec flipped = closed.spec;
  flipped.dims.m1 = 0;
  flipped.dims.m2 = d.m1;
  for (auto& row : flipped.weights.M)
    for (Matrix& m : row) m = -m;
  for (auto& row : flipped.weights.L)
    for (Matrix& l : row) l = -l;
  for (auto& row : flipped.weights.R)
    for (Matrix& r : row) r = -r;
  SolveOptions flip_opts;
  flip_opts.require_psd = false;
  StabilizingSolution flip = stabilizing_solve(flipped, flip_opts);
  if (flip.status != SolveStatus::Converged) {
    report.status = MembershipStatus::NoStabilizingClosedLoopSolution;
    report.detail = std::string("closed-loop solve failed: ") +
                    solve_status_name(flip.status) +
                    (flip.detail.empty() ? "" : " (" + flip.detail + ")");
    return report;
  }
  report.xi = flip.delta2;
  report.x_kw.reserve(flip.x.size());
  for (const SymTuple& y : flip.x) report.x_kw.push_back(-1.0 * y);
  double scale = 0.0;
  report.min_eig_x = std::numeric_limits<double>::infinity();
  for (const SymTuple& x : report.x_kw) {
    report.min_eig_x = std::min(report.min_eig_x, x.min_eig());
    scale = std::max(scale, x.norm());
  }
  if (report.min_eig_x < -1e-8 * (1.0 + scale)) {
    report.status = MembershipStatus::NoStabilizingClosedLoopSolution;
    report.detail =
        "closed-loop solution is not positive semidefinite (smallest "
        "eigenvalue " +
        std::to_string(report.min_eig_x) + ")";
    return report;
  }

  // The closed-loop solution must exhibit the original sign conditions on
  // the full input quadratic form.
  report.parent_class = SignClass::Strong;
  for (int t = 0; t < d.period; ++t) {
    const SymTuple& x_next =
        report.x_kw[static_cast<size_t>((t + 1) % d.period)];
    PiValues pi = pi_operators(spec, t, x_next);
    RiccatiIterate it;
    it.x = SymTuple(d.N, d.n);
    for (int i = 0; i < d.N; ++i) {
      Matrix rcal = symmetrized(spec.R(t, i) + pi.pi3[static_cast<size_t>(i)]);
      Eigen::SelfAdjointEigenSolver<Matrix> es(rcal);
      Inertia inertia;
      const Vector vals = es.eigenvalues();
      const double vscale = std::max(1.0, vals.cwiseAbs().maxCoeff());
      for (Eigen::Index q = 0; q < vals.size(); ++q) {
        if (std::abs(vals(q)) <= 1e-12 * vscale)
          ++inertia.zeros;
        else if (vals(q) < 0.0)
          ++inertia.negatives;
        else
          ++inertia.positives;
      }
      it.inertia.push_back(inertia);
      it.rcal.push_back(std::move(rcal));
    }
    it.sign = classify_sign(it, d);
    report.parent_class = weaker(report.parent_class, it.sign.cls);
  }
  if (!admissible(report.parent_class)) {
    report.status = MembershipStatus::NoStabilizingClosedLoopSolution;
    report.detail =
        std::string("sign conditions fail at the closed-loop solution (") +
        sign_class_name(report.parent_class) + ")";
    return report;
  }
  report.status = MembershipStatus::Member;
  return report;
}

FullInformationGains full_information_gains(const ProblemSpec& spec,
                                            const StabilizingSolution& sol) {
  const Dims& d = spec.dims;
  for (const RiccatiIterate& it : sol.iterates)
    if (!admissible(it.sign.cls))
      throw Error(ErrorCode::NotAdmissible,
                  "full-information gains require an Admissible solution");
  FullInformationGains out;
  out.k.resize(sol.iterates.size());
  out.w.resize(sol.iterates.size());
  out.v.reserve(sol.iterates.size());
  for (size_t t = 0; t < sol.iterates.size(); ++t) {
    VFactorization v = v_factorize(sol.iterates[t], d);
    for (int i = 0; i < d.N; ++i) {
      const Matrix v22_inv = inverse_spd(v.v22[static_cast<size_t>(i)],
                                         "V22 factor");
      Matrix v21_22(d.m2, d.m());
      v21_22 << v.v21[static_cast<size_t>(i)], v.v22[static_cast<size_t>(i)];
      out.k[t].push_back(v22_inv * v21_22 *
                         sol.f[t][static_cast<size_t>(i)]);
      out.w[t].push_back(-v22_inv * v.v21[static_cast<size_t>(i)]);
    }
    out.v.push_back(std::move(v));
  }
  return out;
}

namespace {

struct AuxiliarySystem {
  // check_a[t][k][i]: transformed channel matrices; c[t][i]: output maps.
  std::vector<std::vector<std::vector<Matrix>>> check_a;
  std::vector<std::vector<Matrix>> c;
};

AuxiliarySystem build_auxiliary(const ProblemSpec& spec) {
  const Dims& d = spec.dims;
  AuxiliarySystem aux;
  aux.check_a.resize(static_cast<size_t>(d.period));
  aux.c.resize(static_cast<size_t>(d.period));
  for (int t = 0; t < d.period; ++t) {
    aux.check_a[static_cast<size_t>(t)].resize(static_cast<size_t>(d.r) + 1);
    for (int i = 0; i < d.N; ++i) {
      const Matrix r22_inv = inverse_spd(spec.R22(t, i), "R22 block");
      const Matrix g = r22_inv * spec.L2(t, i).transpose();  // m2 x n
      for (int k = 0; k <= d.r; ++k)
        aux.check_a[static_cast<size_t>(t)][static_cast<size_t>(k)].push_back(
            spec.A(t, k, i) - spec.B2(t, k, i) * g);
      const Matrix w = symmetrized(spec.M(t, i) - spec.L2(t, i) * g);
      Eigen::SelfAdjointEigenSolver<Matrix> es(w);
      const Vector vals = es.eigenvalues();
      const double cutoff = 1e-12 * std::max(vals.sum(), 0.0);
      int p = 0;
      for (Eigen::Index q = 0; q < vals.size(); ++q)
        if (vals(q) > cutoff) ++p;
      Matrix c_out(p, d.n);
      int row = 0;
      for (Eigen::Index q = 0; q < vals.size(); ++q)
        if (vals(q) > cutoff)
          c_out.row(row++) =
              std::sqrt(vals(q)) * es.eigenvectors().col(q).transpose();
      aux.c[static_cast<size_t>(t)].push_back(std::move(c_out));
    }
  }
  return aux;
}

LyapunovOperator injected_operator(const AuxiliarySystem& aux,
                                   const MarkovSpec& markov,
                                   const GainSchedule& h) {
  std::vector<std::vector<std::vector<Matrix>>> coeffs = aux.check_a;
  for (size_t t = 0; t < coeffs.size(); ++t)
    for (size_t i = 0; i < coeffs[t][0].size(); ++i)
      coeffs[t][0][i] += h[t][i] * aux.c[t][i];
  return LyapunovOperator(std::move(coeffs), markov);
}

}  // namespace

DetectabilityResult auxiliary_detectability(const ProblemSpec& spec,
                                            const GainSchedule* h) {
  const Dims& d = spec.dims;
  AuxiliarySystem aux = build_auxiliary(spec);
  DetectabilityResult result;
  result.c = aux.c;

  if (h != nullptr) {
    if (static_cast<int>(h->size()) != d.period)
      throw Error(ErrorCode::InvalidArgument,
                  "one injection gain per phase required");
    for (int t = 0; t < d.period; ++t)
      for (int i = 0; i < d.N; ++i) {
        const Matrix& gain =
            (*h)[static_cast<size_t>(t)][static_cast<size_t>(i)];
        const Matrix& c = aux.c[static_cast<size_t>(t)][static_cast<size_t>(i)];
        if (gain.rows() != d.n || gain.cols() != c.rows())
          throw Error(ErrorCode::InvalidArgument,
                      "injection gain shape mismatch");
      }
    result.h = *h;
    result.rho_injected =
        spectral_radius(injected_operator(aux, spec.markov, result.h)).rho;
    result.detectable =
        result.rho_injected < 1.0 - spec.tol.stability_margin;
    if (!result.detectable)
      result.detail = "supplied injection does not certify stability (rho " +
                      std::to_string(result.rho_injected) + ")";
    return result;
  }

  // Synthesis: a forward covariance recursion regularized by + I, with the
  // injection chosen per source phase/mode by completion of squares,
  //   H(t,j) = -A0(t,j) X(t,j) C^T (C X C^T)^-1,
  // which minimizes the pushed drift covariance in the semidefinite order.
  std::vector<SymTuple> x(static_cast<size_t>(d.period),
                          SymTuple::identity(d.N, d.n));
  auto injection_at = [&](int t, int i, const SymTuple& xt) {
    const Matrix& c = aux.c[static_cast<size_t>(t)][static_cast<size_t>(i)];
    const Matrix& a0 = aux.check_a[static_cast<size_t>(t)][0][static_cast<size_t>(i)];
    if (c.rows() == 0) return Matrix::Zero(d.n, 0).eval();
    const Matrix gram = symmetrized(c * xt[i] * c.transpose());
    return (-a0 * xt[i] * c.transpose() * inverse_spd(gram, "output Gram"))
        .eval();
  };
  const double trace_guard = 1e12 * d.n * d.N;
  bool settled = false;
  for (long sweep = 1; sweep <= spec.tol.max_sweeps; ++sweep) {
    std::vector<SymTuple> prev = x;
    for (int t = 0; t < d.period; ++t) {
      const SymTuple& cur = x[static_cast<size_t>(t)];
      const Matrix& P = spec.P(t);
      std::vector<Matrix> pushed(static_cast<size_t>(d.N));
      for (int j = 0; j < d.N; ++j) {
        const Matrix hj = injection_at(t, j, cur);
        const Matrix a0 =
            aux.check_a[static_cast<size_t>(t)][0][static_cast<size_t>(j)] +
            hj * aux.c[static_cast<size_t>(t)][static_cast<size_t>(j)];
        Matrix acc = a0 * cur[j] * a0.transpose();
        for (int k = 1; k <= d.r; ++k) {
          const Matrix& ak =
              aux.check_a[static_cast<size_t>(t)][static_cast<size_t>(k)]
                         [static_cast<size_t>(j)];
          acc += ak * cur[j] * ak.transpose();
        }
        pushed[static_cast<size_t>(j)] = acc;
      }
      SymTuple next(d.N, d.n);
      for (int i = 0; i < d.N; ++i) {
        Matrix acc = Matrix::Identity(d.n, d.n);
        for (int j = 0; j < d.N; ++j) {
          const double p = P(j, i);
          if (p != 0.0) acc += p * pushed[static_cast<size_t>(j)];
        }
        next.set(i, acc);
      }
      x[static_cast<size_t>((t + 1) % d.period)] = next;
    }
    double change = 0.0;
    double trace = 0.0;
    for (int t = 0; t < d.period; ++t) {
      change = std::max(change, rel_change(x[static_cast<size_t>(t)],
                                           prev[static_cast<size_t>(t)]));
      for (int i = 0; i < d.N; ++i)
        trace = std::max(trace, x[static_cast<size_t>(t)][i].trace());
    }
    if (trace > trace_guard) {
      result.synthesis_diverged = true;
      result.detail = "injection synthesis recursion diverged";
      return result;
    }
    if (change < spec.tol.convergence_tol) {
      settled = true;
      break;
    }
  }
  if (!settled) {
    result.synthesis_diverged = true;
    result.detail = "injection synthesis did not settle within the budget";
    return result;
  }
  result.h.resize(static_cast<size_t>(d.period));
  for (int t = 0; t < d.period; ++t)
    for (int i = 0; i < d.N; ++i)
      result.h[static_cast<size_t>(t)].push_back(
          injection_at(t, i, x[static_cast<size_t>(t)]));

  // The certificate is independent of how the injection was produced.
  result.rho_injected =
      spectral_radius(injected_operator(aux, spec.markov, result.h)).rho;
  result.detectable = result.rho_injected < 1.0 - spec.tol.stability_margin;
  if (!result.detectable) {
    result.detail =
        "synthesized injection failed independent verification (rho " +
        std::to_string(result.rho_injected) + ")";
    result.h.clear();
  }
  return result;
}

}  // namespace gdtre
