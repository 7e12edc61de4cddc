#include "gdtre/operators.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <utility>

namespace gdtre {

SymTuple xi(const MarkovSpec& markov, long t, const SymTuple& x) {
  const Matrix& P = markov.P[static_cast<size_t>(t % markov.period())];
  const int N = x.modes();
  SymTuple out(N, x.dim());
  for (int i = 0; i < N; ++i) {
    Matrix acc = Matrix::Zero(x.dim(), x.dim());
    for (int j = 0; j < N; ++j) {
      const double p = P(i, j);
      if (p != 0.0) acc += p * x[j];
    }
    out.set(i, acc);
  }
  return out;
}

PiValues pi_operators(const ProblemSpec& spec, long t, const SymTuple& x_next) {
  const int N = spec.dims.N;
  const int n = spec.dims.n;
  const int m = spec.dims.m();
  SymTuple e = xi(spec.markov, t, x_next);
  PiValues out;
  out.pi1.assign(N, Matrix::Zero(n, n));
  out.pi2.assign(N, Matrix::Zero(n, m));
  out.pi3.assign(N, Matrix::Zero(m, m));
  for (int i = 0; i < N; ++i) {
    for (int k = 0; k <= spec.dims.r; ++k) {
      const Matrix& A = spec.A(t, k, i);
      const Matrix& B = spec.B(t, k, i);
      Matrix EA = e[i] * A;
      Matrix EB = e[i] * B;
      out.pi1[i] += A.transpose() * EA;
      out.pi2[i] += A.transpose() * EB;
      out.pi3[i] += B.transpose() * EB;
    }
    out.pi1[i] = 0.5 * (out.pi1[i] + out.pi1[i].transpose().eval());
    out.pi3[i] = 0.5 * (out.pi3[i] + out.pi3[i].transpose().eval());
  }
  return out;
}

long coord_count(int modes, int dim) {
  return static_cast<long>(modes) * dim * (dim + 1) / 2;
}

Vector tuple_to_coords(const SymTuple& x) {
  const int N = x.modes();
  const int n = x.dim();
  const double root2 = std::sqrt(2.0);
  Vector v(coord_count(N, n));
  long pos = 0;
  for (int i = 0; i < N; ++i)
    for (int q = 0; q < n; ++q)
      for (int p = q; p < n; ++p)
        v(pos++) = (p == q) ? x[i](p, q) : root2 * x[i](p, q);
  return v;
}

SymTuple coords_to_tuple(const Vector& v, int modes, int dim) {
  const double inv_root2 = 1.0 / std::sqrt(2.0);
  SymTuple x(modes, dim);
  long pos = 0;
  for (int i = 0; i < modes; ++i) {
    Matrix entry = Matrix::Zero(dim, dim);
    for (int q = 0; q < dim; ++q)
      for (int p = q; p < dim; ++p) {
        const double c = v(pos++);
        if (p == q) {
          entry(p, q) = c;
        } else {
          entry(p, q) = inv_root2 * c;
          entry(q, p) = inv_root2 * c;
        }
      }
    x.set(i, entry);
  }
  return x;
}

LyapunovOperator::LyapunovOperator(
    std::vector<std::vector<std::vector<Matrix>>> coeffs, MarkovSpec markov)
    : coeffs_(std::move(coeffs)), markov_(std::move(markov)) {
  if (coeffs_.empty() || coeffs_.front().empty() ||
      coeffs_.front().front().empty())
    throw Error(ErrorCode::InvalidArgument, "empty coefficient table");
  dim_ = static_cast<int>(coeffs_.front().front().front().rows());
}

LyapunovOperator LyapunovOperator::from_spec(const ProblemSpec& spec,
                                             const GainSchedule* gains) {
  const int period = spec.dims.period;
  const int N = spec.dims.N;
  std::vector<std::vector<std::vector<Matrix>>> coeffs(
      static_cast<size_t>(period));
  for (int t = 0; t < period; ++t) {
    coeffs[t].resize(static_cast<size_t>(spec.dims.r) + 1);
    for (int k = 0; k <= spec.dims.r; ++k) {
      coeffs[t][k].reserve(static_cast<size_t>(N));
      for (int i = 0; i < N; ++i) {
        Matrix g = spec.A(t, k, i);
        if (gains != nullptr) g += spec.B(t, k, i) * (*gains)[t][i];
        coeffs[t][k].push_back(std::move(g));
      }
    }
  }
  return LyapunovOperator(std::move(coeffs), spec.markov);
}

SymTuple LyapunovOperator::forward(long t, const SymTuple& x) const {
  const auto& step = coeffs_[static_cast<size_t>(t % period())];
  const Matrix& P = markov_.P[static_cast<size_t>(t % markov_.period())];
  const int N = modes();
  // Per source mode j, accumulate sum_k G_k(t,j) X(j) G_k(t,j)^T once, then
  // distribute it over target modes with weight P_t(j, i).
  std::vector<Matrix> pushed(static_cast<size_t>(N));
  for (int j = 0; j < N; ++j) {
    Matrix acc = Matrix::Zero(dim_, dim_);
    for (const auto& channel : step) acc += channel[j] * x[j] * channel[j].transpose();
    pushed[j] = std::move(acc);
  }
  SymTuple out(N, dim_);
  for (int i = 0; i < N; ++i) {
    Matrix acc = Matrix::Zero(dim_, dim_);
    for (int j = 0; j < N; ++j) {
      const double p = P(j, i);
      if (p != 0.0) acc += p * pushed[j];
    }
    out.set(i, acc);
  }
  return out;
}

SymTuple LyapunovOperator::adjoint(long t, const SymTuple& x) const {
  const auto& step = coeffs_[static_cast<size_t>(t % period())];
  SymTuple e = xi(markov_, t, x);
  const int N = modes();
  SymTuple out(N, dim_);
  for (int i = 0; i < N; ++i) {
    Matrix acc = Matrix::Zero(dim_, dim_);
    for (const auto& channel : step)
      acc += channel[i].transpose() * e[i] * channel[i];
    out.set(i, acc);
  }
  return out;
}

Matrix LyapunovOperator::forward_matrix(long t) const {
  const long D = coord_count(modes(), dim_);
  Matrix M(D, D);
  Vector basis = Vector::Zero(D);
  for (long c = 0; c < D; ++c) {
    basis(c) = 1.0;
    M.col(c) = tuple_to_coords(forward(t, coords_to_tuple(basis, modes(), dim_)));
    basis(c) = 0.0;
  }
  return M;
}

Matrix LyapunovOperator::monodromy_matrix() const {
  Matrix phi = forward_matrix(0);
  for (int t = 1; t < period(); ++t) phi = forward_matrix(t) * phi;
  return phi;
}

SpectralRadius spectral_radius(const LyapunovOperator& op, double tol,
                               long max_iterations) {
  Matrix phi = op.monodromy_matrix();
  SpectralRadius result;
  Vector v = tuple_to_coords(SymTuple::identity(op.modes(), op.dim()));
  v /= v.norm();
  double lambda_prev = -1.0;
  for (long k = 0; k < max_iterations; ++k) {
    Vector w = phi * v;
    const double lambda = w.norm();
    ++result.iterations;
    if (lambda == 0.0) {
      result.rho = 0.0;
      result.power_converged = true;
      return result;
    }
    if (lambda_prev >= 0.0 &&
        std::abs(lambda - lambda_prev) <= tol * std::max(lambda, 1e-300)) {
      result.rho = lambda;
      result.power_converged = true;
      return result;
    }
    lambda_prev = lambda;
    v = w / lambda;
  }
  // The iteration can fail to settle when leading eigenvalues tie in
  // modulus; fall back to a dense eigensolver.
  Eigen::EigenSolver<Matrix> es(phi, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw Error(ErrorCode::InternalError, "eigensolver failed on monodromy");
  result.rho = es.eigenvalues().cwiseAbs().maxCoeff();
  result.dense_fallback = true;
  return result;
}

std::vector<SymTuple> solve_periodic_backward(const LyapunovOperator& op,
                                              const std::vector<SymTuple>& c,
                                              double tol, long max_sweeps,
                                              long* sweeps_out) {
  const int period = op.period();
  if (static_cast<int>(c.size()) != period)
    throw Error(ErrorCode::InvalidArgument,
                "one inhomogeneous term per phase required");
  std::vector<SymTuple> y = c;
  for (long sweep = 1; sweep <= max_sweeps; ++sweep) {
    std::vector<SymTuple> prev = y;
    y[static_cast<size_t>(period) - 1] =
        op.adjoint(period - 1, prev[0]) + c[static_cast<size_t>(period) - 1];
    for (int t = period - 2; t >= 0; --t)
      y[static_cast<size_t>(t)] =
          op.adjoint(t, y[static_cast<size_t>(t) + 1]) + c[static_cast<size_t>(t)];
    double change = 0.0;
    double scale = 0.0;
    for (int t = 0; t < period; ++t) {
      change = std::max(change, rel_change(y[static_cast<size_t>(t)],
                                           prev[static_cast<size_t>(t)]));
      scale = std::max(scale, y[static_cast<size_t>(t)].norm());
    }
    if (scale > 1e100)
      throw Error(ErrorCode::NonConvergence,
                  "periodic backward iteration diverged");
    if (change < tol) {
      if (sweeps_out != nullptr) *sweeps_out = sweep;
      return y;
    }
  }
  throw Error(ErrorCode::NonConvergence,
              "periodic backward iteration exhausted its sweep budget");
}

StabilityCertificate stability_certificate(const LyapunovOperator& op,
                                           double margin, double tol,
                                           long max_sweeps) {
  StabilityCertificate cert;
  SpectralRadius sr = spectral_radius(op);
  cert.rho = sr.rho;
  if (!(sr.rho < 1.0 - margin))
    throw Error(ErrorCode::NotStable,
                "spectral radius " + std::to_string(sr.rho) +
                    " is not below 1 within the stability margin");
  std::vector<SymTuple> ones(static_cast<size_t>(op.period()),
                             SymTuple::identity(op.modes(), op.dim()));
  cert.y = solve_periodic_backward(op, ones, tol, max_sweeps, &cert.sweeps);
  cert.c_lower = std::numeric_limits<double>::infinity();
  cert.c_upper = 0.0;
  for (const SymTuple& yt : cert.y) {
    cert.c_lower = std::min(cert.c_lower, yt.min_eig());
    for (int i = 0; i < yt.modes(); ++i) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(yt[i]);
      cert.c_upper = std::max(cert.c_upper, es.eigenvalues().maxCoeff());
    }
  }
  return cert;
}

}  // namespace gdtre
