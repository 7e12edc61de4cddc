#include "gdtre/model.hpp"
#include "gdtre/jsonio.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <sstream>

namespace gdtre {

namespace {

constexpr double kProbabilityTol = 1e-10;
// Below this a row sum is treated as exactly 1 so renormalization stays
// idempotent across serialization round trips.
constexpr double kProbabilityExact = 1e-13;

double min_eig_sym(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_eig_sym(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

Matrix inverse_sym(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  return es.eigenvectors() *
         es.eigenvalues().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

void renormalize_probability_row(Matrix& P, int i) {
  double sum = P.row(i).sum();
  if (std::abs(sum - 1.0) > kProbabilityExact &&
      std::abs(sum - 1.0) <= kProbabilityTol) {
    P.row(i) /= sum;
  }
}

void renormalize_distribution(Vector& pi) {
  double sum = pi.sum();
  if (std::abs(sum - 1.0) > kProbabilityExact &&
      std::abs(sum - 1.0) <= kProbabilityTol) {
    pi /= sum;
  }
}

}  // namespace

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::StructuralError: return "StructuralError";
    case ErrorCode::NotStable: return "NotStable";
    case ErrorCode::NotAdmissible: return "NotAdmissible";
    case ErrorCode::PreconditionFailed: return "PreconditionFailed";
    case ErrorCode::SingularRcal: return "SingularRcal";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InternalError: return "InternalError";
  }
  return "InternalError";
}

SymTuple SymTuple::identity(int modes, int dim) {
  SymTuple out(modes, dim);
  for (int i = 0; i < modes; ++i) out.entries_[static_cast<size_t>(i)] = Matrix::Identity(dim, dim);
  return out;
}

void SymTuple::set(int i, const Matrix& value) {
  entries_[static_cast<size_t>(i)] = 0.5 * (value + value.transpose());
}

double SymTuple::dot(const SymTuple& other) const {
  double acc = 0.0;
  for (size_t i = 0; i < entries_.size(); ++i)
    acc += (entries_[i].array() * other.entries_[i].array()).sum();
  return acc;
}

double SymTuple::norm() const { return std::sqrt(dot(*this)); }

double SymTuple::min_eig() const {
  double lo = std::numeric_limits<double>::infinity();
  for (const Matrix& e : entries_) lo = std::min(lo, min_eig_sym(e));
  return lo;
}

double SymTuple::max_entry_norm() const {
  double hi = 0.0;
  for (const Matrix& e : entries_) hi = std::max(hi, e.norm());
  return hi;
}

SymTuple SymTuple::plus_identity(double c) const {
  SymTuple out = *this;
  int d = dim();
  for (Matrix& e : out.entries_) e += c * Matrix::Identity(d, d);
  return out;
}

SymTuple operator+(const SymTuple& a, const SymTuple& b) {
  SymTuple out = a;
  for (int i = 0; i < a.modes(); ++i) out.set(i, a[i] + b[i]);
  return out;
}

SymTuple operator-(const SymTuple& a, const SymTuple& b) {
  SymTuple out = a;
  for (int i = 0; i < a.modes(); ++i) out.set(i, a[i] - b[i]);
  return out;
}

SymTuple operator*(double s, const SymTuple& x) {
  SymTuple out = x;
  for (int i = 0; i < x.modes(); ++i) out.set(i, s * x[i]);
  return out;
}

double rel_change(const SymTuple& a, const SymTuple& b) {
  return (a - b).norm() / (1.0 + b.norm());
}

int time_index(const ProblemSpec& spec, long t) { return spec.phase(t); }

namespace {

void structural_check(const ProblemSpec& spec) {
  const Dims& d = spec.dims;
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::StructuralError, msg);
  };
  if (d.n < 1 || d.m1 < 1 || d.m2 < 1 || d.r < 0 || d.N < 1 || d.period < 1)
    fail("dims out of range: need n,m1,m2,N,period >= 1 and r >= 0");
  auto check_table = [&](const std::vector<std::vector<std::vector<Matrix>>>& tbl,
                         int rows, int cols, const char* name) {
    if (static_cast<int>(tbl.size()) != d.period) fail(std::string(name) + ": period mismatch");
    for (const auto& per_noise : tbl) {
      if (static_cast<int>(per_noise.size()) != d.r + 1) fail(std::string(name) + ": noise index mismatch");
      for (const auto& per_mode : per_noise) {
        if (static_cast<int>(per_mode.size()) != d.N) fail(std::string(name) + ": mode count mismatch");
        for (const Matrix& mat : per_mode) {
          if (mat.rows() != rows || mat.cols() != cols) fail(std::string(name) + ": shape mismatch");
          if (!mat.allFinite()) fail(std::string(name) + ": non-finite entry");
        }
      }
    }
  };
  check_table(spec.sys.A, d.n, d.n, "A");
  check_table(spec.sys.B, d.n, d.m(), "B");
  auto check_weight = [&](const std::vector<std::vector<Matrix>>& tbl, int rows,
                          int cols, const char* name, bool symmetric) {
    if (static_cast<int>(tbl.size()) != d.period) fail(std::string(name) + ": period mismatch");
    for (const auto& per_mode : tbl) {
      if (static_cast<int>(per_mode.size()) != d.N) fail(std::string(name) + ": mode count mismatch");
      for (const Matrix& mat : per_mode) {
        if (mat.rows() != rows || mat.cols() != cols) fail(std::string(name) + ": shape mismatch");
        if (!mat.allFinite()) fail(std::string(name) + ": non-finite entry");
        if (symmetric) {
          double scale = std::max(1.0, mat.norm());
          if ((mat - mat.transpose()).norm() > spec.tol.symmetrization_tol * scale)
            fail(std::string(name) + ": asymmetry beyond symmetrization tolerance");
        }
      }
    }
  };
  check_weight(spec.weights.M, d.n, d.n, "M", true);
  check_weight(spec.weights.L, d.n, d.m(), "L", false);
  check_weight(spec.weights.R, d.m(), d.m(), "R", true);
  if (static_cast<int>(spec.markov.P.size()) != d.period) fail("transition_matrices: period mismatch");
  for (const Matrix& P : spec.markov.P) {
    if (P.rows() != d.N || P.cols() != d.N) fail("transition_matrices: shape mismatch");
    if (!P.allFinite()) fail("transition_matrices: non-finite entry");
  }
  if (spec.markov.pi0.size() != d.N) fail("initial_distribution: length mismatch");
  if (!spec.markov.pi0.allFinite()) fail("initial_distribution: non-finite entry");
  if (!(spec.weights.rho1 > 0.0) || !(spec.weights.rho2 > 0.0))
    fail("rho1 and rho2 must be positive");
}

}  // namespace

ValidationReport validate(const ProblemSpec& spec) {
  structural_check(spec);
  ValidationReport rep;
  const Dims& d = spec.dims;
  auto add = [&](const std::string& code, int t, int i, double margin,
                 const std::string& message) {
    rep.violations.push_back({code, t, i, margin, message});
  };

  for (int t = 0; t < d.period; ++t) {
    const Matrix& P = spec.markov.P[static_cast<size_t>(t)];
    for (int i = 0; i < d.N; ++i) {
      for (int j = 0; j < d.N; ++j)
        if (P(i, j) < 0.0)
          add("H1b", t, i, P(i, j), "negative transition probability");
      double rs = P.row(i).sum();
      if (std::abs(rs - 1.0) > kProbabilityTol)
        add("H1b", t, i, rs, "row sum not 1 within probability tolerance");
    }
    for (int j = 0; j < d.N; ++j) {
      double cs = P.col(j).sum();
      if (!(cs > 0.0))
        add("H1b", t, j, cs, "column sum zero: transition matrix degenerate");
    }
  }

  for (int i = 0; i < d.N; ++i)
    if (!(spec.markov.pi0(i) > 0.0))
      add("H3b", -1, i, spec.markov.pi0(i), "initial distribution entry not positive");
  double ps = spec.markov.pi0.sum();
  if (std::abs(ps - 1.0) > kProbabilityTol)
    add("H3b", -1, -1, ps, "initial distribution sum not 1");

  for (int t = 0; t < d.period; ++t) {
    for (int i = 0; i < d.N; ++i) {
      Matrix R22 = spec.R22(t, i);
      double lo22 = min_eig_sym(R22);
      if (lo22 < spec.weights.rho2)
        add("H4a", t, i, lo22, "min eigenvalue of R22 below rho2");
      if (!(lo22 > 0.0)) continue;  // the Schur-complement checks need R22 inverse
      Matrix R22inv = inverse_sym(R22);
      Matrix L2 = spec.L2(t, i);
      Matrix D = spec.M(t, i) - L2 * R22inv * L2.transpose();
      double loD = min_eig_sym(D);
      if (loD < -1e-10 * (1.0 + spec.M(t, i).norm()))
        add("H4b", t, i, loD, "M - L2 R22^-1 L2^T not positive semidefinite");
      Matrix R12 = spec.R12(t, i);
      Matrix schur = spec.R11(t, i) - R12 * R22inv * R12.transpose();
      double hiS = max_eig_sym(schur);
      if (hiS > -spec.weights.rho1)
        add("H4c", t, i, hiS, "Schur complement of R22 in R not <= -rho1");
    }
  }
  return rep;
}

std::string format_double(double v) {
  if (v == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string fnv1a64_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

namespace {

void dump_rec(const Json& j, std::string& out, int indent, int depth) {
  auto newline = [&](int d) {
    if (indent >= 0) {
      out.push_back('\n');
      out.append(static_cast<size_t>(indent * d), ' ');
    }
  };
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) { out += "{}"; return; }
      out.push_back('{');
      bool first = true;
      for (const auto& item : j.items()) {
        if (!first) out.push_back(',');
        first = false;
        newline(depth + 1);
        out += Json(item.key()).dump();
        out.push_back(':');
        if (indent >= 0) out.push_back(' ');
        dump_rec(item.value(), out, indent, depth + 1);
      }
      newline(depth);
      out.push_back('}');
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) { out += "[]"; return; }
      out.push_back('[');
      bool first = true;
      for (const auto& v : j) {
        if (!first) out.push_back(',');
        first = false;
        dump_rec(v, out, -1, depth + 1);
      }
      out.push_back(']');
      return;
    }
    case Json::value_t::string:
      out += j.dump();
      return;
    case Json::value_t::boolean:
      out += j.get<bool>() ? "true" : "false";
      return;
    case Json::value_t::null:
      out += "null";
      return;
    case Json::value_t::number_integer:
      out += std::to_string(j.get<long long>());
      return;
    case Json::value_t::number_unsigned:
      out += std::to_string(j.get<unsigned long long>());
      return;
    case Json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      throw Error(ErrorCode::InternalError, "unserializable JSON value");
  }
}

}  // namespace

std::string canonical_dump(const Json& j) {
  std::string out;
  dump_rec(j, out, -1, 0);
  return out;
}

std::string canonical_dump_pretty(const Json& j) {
  std::string out;
  dump_rec(j, out, 2, 0);
  out.push_back('\n');
  return out;
}

void require_keys(const Json& obj, std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional,
                  const std::string& context) {
  if (!obj.is_object())
    throw Error(ErrorCode::ParseError, context + ": expected an object");
  for (const char* key : required)
    if (!obj.contains(key))
      throw Error(ErrorCode::ParseError,
                  context + ": missing key '" + key + "'");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : required)
      if (item.key() == key) { known = true; break; }
    if (!known)
      for (const char* key : optional)
        if (item.key() == key) { known = true; break; }
    if (!known)
      throw Error(ErrorCode::ParseError,
                  context + ": unknown key '" + item.key() + "'");
  }
}

double get_number(const Json& j, const std::string& context) {
  if (!j.is_number())
    throw Error(ErrorCode::ParseError, context + ": expected a number");
  return j.get<double>();
}

long get_integer(const Json& j, const std::string& context) {
  if (!j.is_number_integer() && !j.is_number_unsigned())
    throw Error(ErrorCode::ParseError, context + ": expected an integer");
  return j.get<long>();
}

namespace {

Matrix parse_matrix(const Json& j, int rows, int cols, const std::string& ctx) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    throw Error(ErrorCode::ParseError,
                ctx + ": expected " + std::to_string(rows) + " rows");
  Matrix out(rows, cols);
  for (int p = 0; p < rows; ++p) {
    const Json& row = j[static_cast<size_t>(p)];
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      throw Error(ErrorCode::ParseError,
                  ctx + " row " + std::to_string(p) + ": expected " +
                      std::to_string(cols) + " entries");
    for (int q = 0; q < cols; ++q)
      out(p, q) = get_number(row[static_cast<size_t>(q)],
                             ctx + "(" + std::to_string(p) + "," + std::to_string(q) + ")");
  }
  return out;
}

Json matrix_json(const Matrix& mat) {
  Json rows = Json::array();
  for (Eigen::Index p = 0; p < mat.rows(); ++p) {
    Json row = Json::array();
    for (Eigen::Index q = 0; q < mat.cols(); ++q) row.push_back(mat(p, q));
    rows.push_back(std::move(row));
  }
  return rows;
}

const Json& at_length(const Json& j, int len, const std::string& ctx) {
  if (!j.is_array() || static_cast<int>(j.size()) != len)
    throw Error(ErrorCode::ParseError,
                ctx + ": expected an array of length " + std::to_string(len));
  return j;
}

Matrix symmetrized_or_reject(Matrix mat, double sym_tol, const std::string& ctx) {
  double scale = std::max(1.0, mat.norm());
  if ((mat - mat.transpose()).norm() > sym_tol * scale)
    throw Error(ErrorCode::StructuralError,
                ctx + ": asymmetry beyond symmetrization tolerance");
  return 0.5 * (mat + mat.transpose()).eval();
}

}  // namespace

ProblemSpec parse_problem(const std::string& json_text) {
  Json root;
  try {
    root = Json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("JSON parse failed: ") + e.what());
  }
  require_keys(root, {"dims", "markov", "system", "weights"}, {"tolerances"},
               "top level");

  ProblemSpec spec;
  const Json& jd = root["dims"];
  require_keys(jd, {"n", "m1", "m2", "r", "N", "period"}, {}, "dims");
  spec.dims.n = static_cast<int>(get_integer(jd["n"], "dims.n"));
  spec.dims.m1 = static_cast<int>(get_integer(jd["m1"], "dims.m1"));
  spec.dims.m2 = static_cast<int>(get_integer(jd["m2"], "dims.m2"));
  spec.dims.r = static_cast<int>(get_integer(jd["r"], "dims.r"));
  spec.dims.N = static_cast<int>(get_integer(jd["N"], "dims.N"));
  spec.dims.period = static_cast<int>(get_integer(jd["period"], "dims.period"));
  const Dims& d = spec.dims;
  if (d.n < 1 || d.m1 < 1 || d.m2 < 1 || d.r < 0 || d.N < 1 || d.period < 1)
    throw Error(ErrorCode::StructuralError,
                "dims out of range: need n,m1,m2,N,period >= 1 and r >= 0");

  if (root.contains("tolerances")) {
    const Json& jt = root["tolerances"];
    require_keys(jt, {},
                 {"convergence_tol", "stability_margin", "symmetrization_tol",
                  "max_sweeps"},
                 "tolerances");
    if (jt.contains("convergence_tol"))
      spec.tol.convergence_tol = get_number(jt["convergence_tol"], "tolerances.convergence_tol");
    if (jt.contains("stability_margin"))
      spec.tol.stability_margin = get_number(jt["stability_margin"], "tolerances.stability_margin");
    if (jt.contains("symmetrization_tol"))
      spec.tol.symmetrization_tol = get_number(jt["symmetrization_tol"], "tolerances.symmetrization_tol");
    if (jt.contains("max_sweeps"))
      spec.tol.max_sweeps = get_integer(jt["max_sweeps"], "tolerances.max_sweeps");
  }

  const Json& jm = root["markov"];
  require_keys(jm, {"transition_matrices", "initial_distribution"}, {}, "markov");
  const Json& jp = at_length(jm["transition_matrices"], d.period, "markov.transition_matrices");
  for (int t = 0; t < d.period; ++t) {
    Matrix P = parse_matrix(jp[static_cast<size_t>(t)], d.N, d.N,
                            "transition_matrices[" + std::to_string(t) + "]");
    for (int i = 0; i < d.N; ++i) renormalize_probability_row(P, i);
    spec.markov.P.push_back(std::move(P));
  }
  const Json& jpi = at_length(jm["initial_distribution"], d.N, "markov.initial_distribution");
  spec.markov.pi0.resize(d.N);
  for (int i = 0; i < d.N; ++i)
    spec.markov.pi0(i) = get_number(jpi[static_cast<size_t>(i)],
                                    "initial_distribution[" + std::to_string(i) + "]");
  renormalize_distribution(spec.markov.pi0);

  const Json& js = root["system"];
  require_keys(js, {"A", "B"}, {}, "system");
  auto parse_table = [&](const Json& j, int rows, int cols, const char* name) {
    std::vector<std::vector<std::vector<Matrix>>> tbl;
    const Json& jt = at_length(j, d.period, std::string("system.") + name);
    for (int t = 0; t < d.period; ++t) {
      const Json& jn = at_length(jt[static_cast<size_t>(t)], d.r + 1,
                                 std::string(name) + "[" + std::to_string(t) + "]");
      std::vector<std::vector<Matrix>> per_noise;
      for (int k = 0; k <= d.r; ++k) {
        const Json& jmode = at_length(jn[static_cast<size_t>(k)], d.N,
                                      std::string(name) + "[" + std::to_string(t) + "][" + std::to_string(k) + "]");
        std::vector<Matrix> per_mode;
        for (int i = 0; i < d.N; ++i)
          per_mode.push_back(parse_matrix(
              jmode[static_cast<size_t>(i)], rows, cols,
              std::string(name) + "[" + std::to_string(t) + "][" + std::to_string(k) + "][" + std::to_string(i) + "]"));
        per_noise.push_back(std::move(per_mode));
      }
      tbl.push_back(std::move(per_noise));
    }
    return tbl;
  };
  spec.sys.A = parse_table(js["A"], d.n, d.n, "A");
  spec.sys.B = parse_table(js["B"], d.n, d.m(), "B");

  const Json& jw = root["weights"];
  require_keys(jw, {"M", "L", "R"}, {"rho1", "rho2"}, "weights");
  if (jw.contains("rho1")) spec.weights.rho1 = get_number(jw["rho1"], "weights.rho1");
  if (jw.contains("rho2")) spec.weights.rho2 = get_number(jw["rho2"], "weights.rho2");
  auto parse_weight = [&](const Json& j, int rows, int cols, const char* name,
                          bool symmetric) {
    std::vector<std::vector<Matrix>> tbl;
    const Json& jt = at_length(j, d.period, std::string("weights.") + name);
    for (int t = 0; t < d.period; ++t) {
      const Json& jmode = at_length(jt[static_cast<size_t>(t)], d.N,
                                    std::string(name) + "[" + std::to_string(t) + "]");
      std::vector<Matrix> per_mode;
      for (int i = 0; i < d.N; ++i) {
        std::string ctx = std::string(name) + "[" + std::to_string(t) + "][" + std::to_string(i) + "]";
        Matrix mat = parse_matrix(jmode[static_cast<size_t>(i)], rows, cols, ctx);
        if (symmetric) mat = symmetrized_or_reject(mat, spec.tol.symmetrization_tol, ctx);
        per_mode.push_back(std::move(mat));
      }
      tbl.push_back(std::move(per_mode));
    }
    return tbl;
  };
  spec.weights.M = parse_weight(jw["M"], d.n, d.n, "M", true);
  spec.weights.L = parse_weight(jw["L"], d.n, d.m(), "L", false);
  spec.weights.R = parse_weight(jw["R"], d.m(), d.m(), "R", true);

  structural_check(spec);
  return spec;
}

std::string serialize_problem(const ProblemSpec& spec) {
  const Dims& d = spec.dims;
  Json root;
  root["dims"] = {{"n", d.n}, {"m1", d.m1}, {"m2", d.m2},
                  {"r", d.r}, {"N", d.N},  {"period", d.period}};
  Json jp = Json::array();
  for (const Matrix& P : spec.markov.P) jp.push_back(matrix_json(P));
  Json jpi = Json::array();
  for (int i = 0; i < d.N; ++i) jpi.push_back(spec.markov.pi0(i));
  root["markov"] = {{"transition_matrices", std::move(jp)},
                    {"initial_distribution", std::move(jpi)}};
  auto table_json = [](const std::vector<std::vector<std::vector<Matrix>>>& tbl) {
    Json jt = Json::array();
    for (const auto& per_noise : tbl) {
      Json jn = Json::array();
      for (const auto& per_mode : per_noise) {
        Json jm = Json::array();
        for (const Matrix& mat : per_mode) jm.push_back(matrix_json(mat));
        jn.push_back(std::move(jm));
      }
      jt.push_back(std::move(jn));
    }
    return jt;
  };
  auto weight_json = [](const std::vector<std::vector<Matrix>>& tbl) {
    Json jt = Json::array();
    for (const auto& per_mode : tbl) {
      Json jm = Json::array();
      for (const Matrix& mat : per_mode) jm.push_back(matrix_json(mat));
      jt.push_back(std::move(jm));
    }
    return jt;
  };
  root["system"] = {{"A", table_json(spec.sys.A)}, {"B", table_json(spec.sys.B)}};
  root["weights"] = {{"M", weight_json(spec.weights.M)},
                     {"L", weight_json(spec.weights.L)},
                     {"R", weight_json(spec.weights.R)},
                     {"rho1", spec.weights.rho1},
                     {"rho2", spec.weights.rho2}};
  root["tolerances"] = {{"convergence_tol", spec.tol.convergence_tol},
                        {"stability_margin", spec.tol.stability_margin},
                        {"symmetrization_tol", spec.tol.symmetrization_tol},
                        {"max_sweeps", spec.tol.max_sweeps}};
  return canonical_dump(root);
}

std::string problem_digest(const ProblemSpec& spec) {
  return fnv1a64_hex(serialize_problem(spec));
}

}  // namespace gdtre
