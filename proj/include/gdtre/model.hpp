#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdtre {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ErrorCode {
  ParseError,
  StructuralError,
  NotStable,
  NotAdmissible,
  PreconditionFailed,
  SingularRcal,
  NonConvergence,
  InvalidArgument,
  InternalError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code(code) {}
  ErrorCode code;
};

/// Problem dimensions. The input space of width m = m1 + m2 is partitioned
/// between the maximizing player (first m1 columns) and the minimizing
/// player (last m2 columns). Internal closed-loop constructions may use a
/// degenerate partition (m1 = 0 or m2 = 0); user-facing validation requires
/// both to be at least 1.
struct Dims {
  int n = 1;
  int m1 = 1;
  int m2 = 1;
  int r = 0;
  int N = 1;
  int period = 1;
  int m() const { return m1 + m2; }
};

/// N-tuple of n-by-n symmetric matrices, the value type of every Riccati
/// and Lyapunov iterate. Entries are re-symmetrized on assignment.
class SymTuple {
public:
  SymTuple() = default;
  SymTuple(int modes, int dim)
      : entries_(static_cast<size_t>(modes), Matrix::Zero(dim, dim)) {}

  static SymTuple identity(int modes, int dim);

  int modes() const { return static_cast<int>(entries_.size()); }
  int dim() const {
    return entries_.empty() ? 0 : static_cast<int>(entries_[0].rows());
  }

  const Matrix& operator[](int i) const { return entries_[static_cast<size_t>(i)]; }
  void set(int i, const Matrix& value);

  /// Trace inner product, sum_i tr(X_i Y_i).
  double dot(const SymTuple& other) const;
  /// Frobenius norm induced by dot().
  double norm() const;
  /// Smallest eigenvalue over all entries.
  double min_eig() const;
  /// Largest per-entry Frobenius norm.
  double max_entry_norm() const;

  SymTuple plus_identity(double c) const;

private:
  std::vector<Matrix> entries_;
};

SymTuple operator+(const SymTuple& a, const SymTuple& b);
SymTuple operator-(const SymTuple& a, const SymTuple& b);
SymTuple operator*(double s, const SymTuple& x);

/// ||a - b||_F / (1 + ||b||_F).
double rel_change(const SymTuple& a, const SymTuple& b);

/// Per-phase, per-mode feedback matrices.
using GainSchedule = std::vector<std::vector<Matrix>>;

/// Time-inhomogeneous Markov chain data: one row-stochastic transition
/// matrix per phase plus the initial mode distribution.
struct MarkovSpec {
  std::vector<Matrix> P;
  Vector pi0;
  int modes() const { return static_cast<int>(pi0.size()); }
  int period() const { return static_cast<int>(P.size()); }
};

/// System coefficient tables indexed [t][j][i]: noise channel j in 0..r
/// (index 0 is the drift term), phase t, mode i.
struct SystemCoeffs {
  std::vector<std::vector<std::vector<Matrix>>> A;  // n x n
  std::vector<std::vector<std::vector<Matrix>>> B;  // n x m
};

/// Cost weight tables indexed [t][i], plus the strict margin constants for
/// the weight assumptions.
struct WeightCoeffs {
  std::vector<std::vector<Matrix>> M;  // n x n symmetric
  std::vector<std::vector<Matrix>> L;  // n x m
  std::vector<std::vector<Matrix>> R;  // m x m symmetric
  double rho1 = 1e-8;
  double rho2 = 1e-8;
};

struct ToleranceConfig {
  double convergence_tol = 1e-10;
  double stability_margin = 1e-7;
  double symmetrization_tol = 1e-10;
  long max_sweeps = 100000;
};

/// The full problem quadruple (system, Markov chain, weights) with periodic
/// time tables. Immutable after construction; all coefficient lookups route
/// through the phase accessors so callers may pass absolute times.
struct ProblemSpec {
  Dims dims;
  MarkovSpec markov;
  SystemCoeffs sys;
  WeightCoeffs weights;
  ToleranceConfig tol;

  int phase(long t) const {
    long p = dims.period;
    return static_cast<int>(((t % p) + p) % p);
  }

  const Matrix& A(long t, int j, int i) const {
    return sys.A[static_cast<size_t>(phase(t))][static_cast<size_t>(j)][static_cast<size_t>(i)];
  }
  const Matrix& B(long t, int j, int i) const {
    return sys.B[static_cast<size_t>(phase(t))][static_cast<size_t>(j)][static_cast<size_t>(i)];
  }
  Matrix B1(long t, int j, int i) const { return B(t, j, i).leftCols(dims.m1); }
  Matrix B2(long t, int j, int i) const { return B(t, j, i).rightCols(dims.m2); }

  const Matrix& M(long t, int i) const {
    return weights.M[static_cast<size_t>(phase(t))][static_cast<size_t>(i)];
  }
  const Matrix& L(long t, int i) const {
    return weights.L[static_cast<size_t>(phase(t))][static_cast<size_t>(i)];
  }
  const Matrix& R(long t, int i) const {
    return weights.R[static_cast<size_t>(phase(t))][static_cast<size_t>(i)];
  }
  Matrix L1(long t, int i) const { return L(t, i).leftCols(dims.m1); }
  Matrix L2(long t, int i) const { return L(t, i).rightCols(dims.m2); }
  Matrix R11(long t, int i) const { return R(t, i).topLeftCorner(dims.m1, dims.m1); }
  Matrix R12(long t, int i) const { return R(t, i).topRightCorner(dims.m1, dims.m2); }
  Matrix R22(long t, int i) const { return R(t, i).bottomRightCorner(dims.m2, dims.m2); }

  const Matrix& P(long t) const { return markov.P[static_cast<size_t>(phase(t))]; }
};

/// Returns t reduced to its phase in [0, period).
int time_index(const ProblemSpec& spec, long t);

struct Violation {
  std::string code;     // which assumption is violated
  int t = -1;           // offending phase, -1 when global
  int i = -1;           // offending mode, -1 when global
  double margin = 0.0;  // measured quantity for the failed check
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks the structural assumptions on the data: finite bounded
/// coefficients, nondegenerate row-stochastic transition matrices, strictly
/// positive initial distribution, and the three weight sign conditions.
/// Shape mismatches and non-finite entries throw (structural errors);
/// everything else is reported.
ValidationReport validate(const ProblemSpec& spec);

/// Strict JSON ingestion: exact shapes, unknown keys rejected, rows of each
/// transition matrix renormalized when within probability tolerance,
/// symmetric blocks re-symmetrized when within symmetrization tolerance and
/// rejected otherwise.
ProblemSpec parse_problem(const std::string& json_text);

/// Canonical serialization: fixed key order, 17-significant-digit floats.
/// serialize(parse(serialize(spec))) is byte-identical to serialize(spec).
std::string serialize_problem(const ProblemSpec& spec);

/// FNV-1a 64-bit hash of the canonical serialization, as 16 hex digits.
std::string problem_digest(const ProblemSpec& spec);

}  // namespace gdtre
