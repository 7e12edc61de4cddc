#pragma once

#include "gdtre/model.hpp"

namespace gdtre {

// One-step conditional expectation over the chain:
//   xi(t)[X](i) = sum_j P_t(i, j) X(j).
SymTuple xi(const MarkovSpec& markov, long t, const SymTuple& x);

// Quadratic moment operators of the system evaluated at a fixed tuple X,
// one matrix per mode:
//   pi1(i) = sum_k A_k(t,i)^T xi(t)[X](i) A_k(t,i)   (n x n, symmetric)
//   pi2(i) = sum_k A_k(t,i)^T xi(t)[X](i) B_k(t,i)   (n x m)
//   pi3(i) = sum_k B_k(t,i)^T xi(t)[X](i) B_k(t,i)   (m x m, symmetric)
struct PiValues {
  std::vector<Matrix> pi1;
  std::vector<Matrix> pi2;
  std::vector<Matrix> pi3;
};

PiValues pi_operators(const ProblemSpec& spec, long t, const SymTuple& x_next);

// Blocks of pi2 and pi3 under the input partition m = m1 + m2:
//   pi2 = [pi21 pi22],  pi3 = [[pi311 pi312], [pi312^T pi322]].
inline Matrix pi21(const PiValues& pi, const Dims& d, int i) {
  return pi.pi2[i].leftCols(d.m1);
}
inline Matrix pi22(const PiValues& pi, const Dims& d, int i) {
  return pi.pi2[i].rightCols(d.m2);
}
inline Matrix pi311(const PiValues& pi, const Dims& d, int i) {
  return pi.pi3[i].topLeftCorner(d.m1, d.m1);
}
inline Matrix pi312(const PiValues& pi, const Dims& d, int i) {
  return pi.pi3[i].topRightCorner(d.m1, d.m2);
}
inline Matrix pi322(const PiValues& pi, const Dims& d, int i) {
  return pi.pi3[i].bottomRightCorner(d.m2, d.m2);
}

// Coordinates of a symmetric tuple in an orthonormal basis: per mode, the
// lower triangle is column-stacked with off-diagonal entries scaled by
// sqrt(2), so that coords(X) . coords(Y) = sum_i trace(X_i Y_i).
long coord_count(int modes, int dim);
Vector tuple_to_coords(const SymTuple& x);
SymTuple coords_to_tuple(const Vector& v, int modes, int dim);

// State-covariance operator of a (closed-loop) system with channel matrices
// G_k(t,i) over the chain.  forward(t) pushes second moments one step ahead;
// adjoint(t) pulls quadratic costs one step back.
class LyapunovOperator {
 public:
  // coeffs[t][k][i] is the channel-k matrix at phase t in mode i.
  LyapunovOperator(std::vector<std::vector<std::vector<Matrix>>> coeffs,
                   MarkovSpec markov);

  // Uses G_k = A_k + B_k F when a gain schedule is supplied (each gain m x n),
  // or the open-loop G_k = A_k when it is null.
  static LyapunovOperator from_spec(const ProblemSpec& spec,
                                    const GainSchedule* gains = nullptr);

  int period() const { return static_cast<int>(coeffs_.size()); }
  int modes() const { return markov_.modes(); }
  int dim() const { return dim_; }

  // forward(t)[X](i) = sum_k sum_j P_t(j, i) G_k(t,j) X(j) G_k(t,j)^T.
  SymTuple forward(long t, const SymTuple& x) const;

  // adjoint(t)[X](i) = sum_k G_k(t,i)^T xi(t)[X](i) G_k(t,i).
  SymTuple adjoint(long t, const SymTuple& x) const;

  // Matrix of forward(t) in the orthonormal basis; its transpose is the
  // matrix of adjoint(t).
  Matrix forward_matrix(long t) const;

  // forward_matrix(period-1) * ... * forward_matrix(0).
  Matrix monodromy_matrix() const;

 private:
  std::vector<std::vector<std::vector<Matrix>>> coeffs_;
  MarkovSpec markov_;
  int dim_ = 0;
};

struct SpectralRadius {
  double rho = 0.0;
  long iterations = 0;
  bool power_converged = false;
  bool dense_fallback = false;
};

// Spectral radius of the monodromy map by power iteration seeded with the
// identity tuple, with a dense eigensolver fallback when the iteration does
// not settle.
SpectralRadius spectral_radius(const LyapunovOperator& op, double tol = 1e-12,
                               long max_iterations = 10000);

// Periodic solution of y(t) = adjoint(t)[y(t+1)] + c(t), y(period) = y(0),
// by backward sweeps.  Throws NonConvergence if the sweep budget runs out or
// the iterates blow up.
std::vector<SymTuple> solve_periodic_backward(const LyapunovOperator& op,
                                              const std::vector<SymTuple>& c,
                                              double tol = 1e-10,
                                              long max_sweeps = 100000,
                                              long* sweeps_out = nullptr);

struct StabilityCertificate {
  std::vector<SymTuple> y;  // one tuple per phase, each bounded below by I
  double c_lower = 0.0;     // smallest eigenvalue across phases and modes
  double c_upper = 0.0;     // largest eigenvalue across phases and modes
  double rho = 0.0;
  long sweeps = 0;
};

// Witness of mean-square stability: the periodic solution of
// y(t) = adjoint(t)[y(t+1)] + I.  Throws NotStable when the spectral radius
// is not below 1 - margin.
StabilityCertificate stability_certificate(const LyapunovOperator& op,
                                           double margin = 1e-7,
                                           double tol = 1e-10,
                                           long max_sweeps = 100000);

}  // namespace gdtre
