#include "gdtre/report.hpp"

#include <chrono>
#include <limits>
#include <cmath>

#include "gdtre/operators.hpp"
#include "gdtre/synthesis.hpp"

namespace gdtre {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point begin) {
  return std::chrono::duration<double, std::milli>(Clock::now() - begin)
      .count();
}

Json dims_json(const Dims& d) {
  Json j = Json::object();
  j["n"] = d.n;
  j["m1"] = d.m1;
  j["m2"] = d.m2;
  j["r"] = d.r;
  j["N"] = d.N;
  j["period"] = d.period;
  return j;
}

Json vector_json(const Vector& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

Json envelope(const char* command, const ProblemSpec& spec,
              const Json& options, const Json& result, double ms) {
  Json j = Json::object();
  Json tool = Json::object();
  tool["name"] = kToolName;
  tool["version"] = kToolVersion;
  j["tool"] = tool;
  j["command"] = command;
  j["digest"] = problem_digest(spec);
  j["options"] = options;
  j["result"] = result;
  Json timing = Json::object();
  timing["total_ms"] = ms;
  j["timing"] = timing;
  return j;
}

// Pipelines that need a converged solution translate a failed solve status
// into the matching error.
void require_converged(const StabilizingSolution& sol) {
  if (sol.status == SolveStatus::Converged) return;
  std::string detail = sol.detail.empty()
                           ? std::string(solve_status_name(sol.status))
                           : sol.detail;
  switch (sol.status) {
    case SolveStatus::SingularRcal:
      throw Error(ErrorCode::SingularRcal, detail);
    case SolveStatus::NotAdmissible:
      throw Error(ErrorCode::NotAdmissible, detail);
    case SolveStatus::NotStabilizing:
      throw Error(ErrorCode::NotStable, detail);
    default:
      throw Error(ErrorCode::NonConvergence, detail);
  }
}

StabilizingSolution resolve_solution(const ProblemSpec& spec,
                                     const StabilizingSolution* sol,
                                     const PipelineOptions& options) {
  if (sol != nullptr) {
    require_converged(*sol);
    return *sol;
  }
  StabilizingSolution computed = stabilizing_solve(spec, options.solve);
  require_converged(computed);
  return computed;
}

Json margins_json(const StabilizingSolution& sol) {
  Json margins = Json::object();
  margins["delta1"] = sol.delta1;
  margins["delta2"] = sol.delta2;
  margins["delta3"] = sol.delta3;
  margins["strong"] = sol.sign_class == SignClass::Strong;
  return margins;
}

Json solve_options_echo(const PipelineOptions& o) {
  Json j = Json::object();
  j["tol"] = o.solve.tol;
  j["max_sweeps"] = o.solve.max_sweeps;
  return j;
}

Vector initial_state(const PipelineOptions& options, const ProblemSpec& spec) {
  if (options.x0.size() == 0) return Vector::Ones(spec.dims.n);
  if (options.x0.size() != spec.dims.n) {
    throw Error(ErrorCode::InvalidArgument, "x0 has wrong dimension");
  }
  return options.x0;
}

}  // namespace

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j, int rows, int cols) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows) {
    throw Error(ErrorCode::ParseError, "matrix has wrong row count");
  }
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const Json& row = j[static_cast<size_t>(r)];
    if (!row.is_array() || static_cast<int>(row.size()) != cols) {
      throw Error(ErrorCode::ParseError, "matrix has wrong column count");
    }
    for (int c = 0; c < cols; ++c) {
      m(r, c) = get_number(row[static_cast<size_t>(c)], "matrix entry");
    }
  }
  return m;
}

Json tuple_json(const SymTuple& x) {
  Json j = Json::array();
  for (int i = 0; i < x.modes(); ++i) j.push_back(matrix_json(x[i]));
  return j;
}

Json schedule_json(const GainSchedule& g) {
  Json j = Json::array();
  for (const auto& phase : g) {
    Json p = Json::array();
    for (const auto& m : phase) p.push_back(matrix_json(m));
    j.push_back(std::move(p));
  }
  return j;
}

PipelineOptions parse_options(const Json& options, const ProblemSpec& spec) {
  PipelineOptions out;
  out.solve.tol = spec.tol.convergence_tol;
  out.solve.max_sweeps = spec.tol.max_sweeps;
  if (options.is_null()) return out;
  require_keys(options, {},
               {"tol", "max_sweeps", "seed", "trajectories", "horizon",
                "perturbations", "x0", "t0", "noise_law", "antithetic",
                "format"},
               "options");

  if (options.contains("tol")) {
    double tol = get_number(options["tol"], "options.tol");
    if (!(tol > 0)) {
      throw Error(ErrorCode::InvalidArgument, "tol must be positive");
    }
    out.solve.tol = tol;
  }
  if (options.contains("max_sweeps")) {
    long sweeps = get_integer(options["max_sweeps"], "options.max_sweeps");
    if (sweeps < 1) {
      throw Error(ErrorCode::InvalidArgument, "max_sweeps must be at least 1");
    }
    out.solve.max_sweeps = sweeps;
  }
  if (options.contains("seed")) {
    long seed = get_integer(options["seed"], "options.seed");
    if (seed < 0) {
      throw Error(ErrorCode::InvalidArgument, "seed must be nonnegative");
    }
    out.seed = static_cast<std::uint64_t>(seed);
  }
  if (options.contains("trajectories")) {
    out.trajectories =
        get_integer(options["trajectories"], "options.trajectories");
    if (out.trajectories < 1) {
      throw Error(ErrorCode::InvalidArgument,
                  "trajectories must be at least 1");
    }
  }
  if (options.contains("horizon")) {
    out.horizon = get_integer(options["horizon"], "options.horizon");
    if (out.horizon < 1) {
      throw Error(ErrorCode::InvalidArgument, "horizon must be at least 1");
    }
  }
  if (options.contains("perturbations")) {
    out.perturbations =
        get_integer(options["perturbations"], "options.perturbations");
    if (out.perturbations < 0) {
      throw Error(ErrorCode::InvalidArgument,
                  "perturbations must be nonnegative");
    }
  }
  if (options.contains("x0")) {
    const Json& x0 = options["x0"];
    if (!x0.is_array() || x0.empty()) {
      throw Error(ErrorCode::InvalidArgument, "x0 must be a nonempty array");
    }
    out.x0 = Vector(static_cast<Eigen::Index>(x0.size()));
    for (size_t k = 0; k < x0.size(); ++k) {
      out.x0(static_cast<Eigen::Index>(k)) = get_number(x0[k], "options.x0");
    }
  }
  if (options.contains("t0")) {
    out.t0 = get_integer(options["t0"], "options.t0");
    if (out.t0 < 0) {
      throw Error(ErrorCode::InvalidArgument, "t0 must be nonnegative");
    }
  }
  if (options.contains("noise_law")) {
    std::string law = options["noise_law"].is_string()
                          ? options["noise_law"].get<std::string>()
                          : std::string();
    if (law == "gaussian") {
      out.noise_law = NoiseLaw::Gaussian;
    } else if (law == "rademacher") {
      out.noise_law = NoiseLaw::Rademacher;
    } else {
      throw Error(ErrorCode::InvalidArgument,
                  "noise_law must be \"gaussian\" or \"rademacher\"");
    }
  }
  if (options.contains("antithetic")) {
    if (!options["antithetic"].is_boolean()) {
      throw Error(ErrorCode::InvalidArgument, "antithetic must be a boolean");
    }
    out.antithetic = options["antithetic"].get<bool>();
  }
  if (options.contains("format")) {
    std::string format = options["format"].is_string()
                             ? options["format"].get<std::string>()
                             : std::string();
    if (format != "json" && format != "csv") {
      throw Error(ErrorCode::InvalidArgument,
                  "format must be \"json\" or \"csv\"");
    }
    out.format = format;
  }
  return out;
}

Json solution_to_json(const ProblemSpec& spec, const StabilizingSolution& sol) {
  if (sol.status != SolveStatus::Converged) {
    throw Error(ErrorCode::PreconditionFailed,
                "only converged solutions can be serialized");
  }
  Json j = Json::object();
  j["kind"] = "gdtre_solution";
  j["version"] = kToolVersion;
  j["digest"] = problem_digest(spec);
  j["status"] = solve_status_name(sol.status);
  j["sign_class"] = sign_class_name(sol.sign_class);
  j["rho_closed"] = sol.rho_closed;
  j["residual"] = sol.residual;
  Json x = Json::array();
  for (const auto& xt : sol.x) x.push_back(tuple_json(xt));
  j["x"] = x;
  j["f"] = schedule_json(sol.f);
  return j;
}

StabilizingSolution solution_from_json(const ProblemSpec& spec,
                                       const Json& j) {
  require_keys(j, {"kind", "digest", "x"},
               {"version", "status", "sign_class", "rho_closed", "residual",
                "f"},
               "solution");
  if (!j["kind"].is_string() ||
      j["kind"].get<std::string>() != "gdtre_solution") {
    throw Error(ErrorCode::ParseError, "not a solution file");
  }
  std::string digest = problem_digest(spec);
  if (!j["digest"].is_string() || j["digest"].get<std::string>() != digest) {
    throw Error(ErrorCode::InvalidArgument,
                "solution digest does not match the problem file");
  }

  const Dims& d = spec.dims;
  const Json& x = j["x"];
  if (!x.is_array() || static_cast<int>(x.size()) != d.period) {
    throw Error(ErrorCode::ParseError, "solution has wrong phase count");
  }
  StabilizingSolution sol;
  sol.x.resize(static_cast<size_t>(d.period));
  for (int t = 0; t < d.period; ++t) {
    const Json& phase = x[static_cast<size_t>(t)];
    if (!phase.is_array() || static_cast<int>(phase.size()) != d.N) {
      throw Error(ErrorCode::ParseError, "solution has wrong mode count");
    }
    SymTuple xt(d.N, d.n);
    for (int i = 0; i < d.N; ++i) {
      xt.set(i, matrix_from_json(phase[static_cast<size_t>(i)], d.n, d.n));
    }
    sol.x[static_cast<size_t>(t)] = xt;
  }

  // Re-derive everything else from the stored value tuples; a tampered file
  // fails the backward-step consistency check.
  sol.f.resize(static_cast<size_t>(d.period));
  sol.iterates.resize(static_cast<size_t>(d.period));
  double residual = 0.0;
  for (int t = 0; t < d.period; ++t) {
    StepResult step = riccati_step(
        spec, t, sol.x[static_cast<size_t>((t + 1) % d.period)]);
    residual = std::max(
        residual, rel_change(step.iterate.x, sol.x[static_cast<size_t>(t)]));
    sol.f[static_cast<size_t>(t)] = step.gains;
    sol.iterates[static_cast<size_t>(t)] = std::move(step.iterate);
  }
  sol.residual = residual;
  if (residual > 1e-6) {
    throw Error(ErrorCode::NotStable,
                "stored values fail the backward-step residual check "
                "(residual " +
                    format_double(residual) + ")");
  }

  auto closed = LyapunovOperator::from_spec(spec, &sol.f);
  sol.rho_closed = spectral_radius(closed).rho;
  if (sol.rho_closed >= 1.0 - spec.tol.stability_margin) {
    throw Error(ErrorCode::NotStable,
                "stored solution does not stabilize the closed loop (rho " +
                    format_double(sol.rho_closed) + ")");
  }

  sol.sign_class = SignClass::Strong;
  sol.delta1 = std::numeric_limits<double>::infinity();
  sol.delta2 = std::numeric_limits<double>::infinity();
  sol.delta3 = std::numeric_limits<double>::infinity();
  for (const auto& it : sol.iterates) {
    if (static_cast<int>(it.sign.cls) > static_cast<int>(sol.sign_class)) {
      sol.sign_class = it.sign.cls;
    }
    sol.delta1 = std::min(sol.delta1, it.sign.delta1);
    sol.delta2 = std::min(sol.delta2, it.sign.delta2);
    sol.delta3 = std::min(sol.delta3, it.sign.delta3);
  }
  double min_eig = std::numeric_limits<double>::infinity();
  for (const auto& xt : sol.x) min_eig = std::min(min_eig, xt.min_eig());
  sol.min_eig_x = min_eig;
  sol.status = SolveStatus::Converged;
  return sol;
}

Json validate_pipeline(const ProblemSpec& spec) {
  auto begin = Clock::now();
  ValidationReport report = validate(spec);
  Json result = Json::object();
  result["ok"] = report.ok();
  Json violations = Json::array();
  for (const auto& v : report.violations) {
    Json item = Json::object();
    item["code"] = v.code;
    item["t"] = v.t;
    item["i"] = v.i;
    item["margin"] = v.margin;
    item["message"] = v.message;
    violations.push_back(std::move(item));
  }
  result["violations"] = violations;
  return envelope("validate", spec, Json::object(), result,
                  elapsed_ms(begin));
}

SolveOutput solve_pipeline(const ProblemSpec& spec,
                           const PipelineOptions& options) {
  auto begin = Clock::now();
  SolveOutput out;
  out.sol = stabilizing_solve(spec, options.solve);
  const StabilizingSolution& sol = out.sol;

  Json result = Json::object();
  result["status"] = solve_status_name(sol.status);
  result["dims"] = dims_json(spec.dims);
  result["sweeps"] = sol.sweeps;
  result["last_delta"] = sol.last_delta;
  if (sol.status == SolveStatus::Converged) {
    result["residual"] = sol.residual;
    result["rho_closed"] = sol.rho_closed;
    result["sign_class"] = sign_class_name(sol.sign_class);
    result["margins"] = margins_json(sol);
    result["min_eig_x"] = sol.min_eig_x;
    Json x = Json::array();
    for (const auto& xt : sol.x) x.push_back(tuple_json(xt));
    result["x"] = x;
    result["f"] = schedule_json(sol.f);
    auto [f1, f2] = split_gain(sol.f, spec.dims);
    result["f1"] = schedule_json(f1);
    result["f2"] = schedule_json(f2);
    FullInformationGains fig = full_information_gains(spec, sol);
    result["k"] = schedule_json(fig.k);
    result["w"] = schedule_json(fig.w);
  } else {
    result["detail"] = sol.detail;
  }
  out.report = envelope("solve", spec, solve_options_echo(options), result,
                        elapsed_ms(begin));
  return out;
}

Json membership_pipeline(const ProblemSpec& spec,
                         const StabilizingSolution* sol,
                         const PipelineOptions& options) {
  auto begin = Clock::now();
  StabilizingSolution resolved = resolve_solution(spec, sol, options);
  FullInformationGains fig = full_information_gains(spec, resolved);
  MembershipReport report =
      a_sigma_membership(spec, GainPair{fig.k, fig.w});

  Json result = Json::object();
  result["status"] = membership_status_name(report.status);
  result["rho_system"] = report.rho_system;
  if (report.status == MembershipStatus::Member) {
    result["xi"] = report.xi;
    result["min_eig_x"] = report.min_eig_x;
    result["parent_class"] = sign_class_name(report.parent_class);
    result["w_zero"] = report.w_zero;
    Json x = Json::array();
    for (const auto& xt : report.x_kw) x.push_back(tuple_json(xt));
    result["x_kw"] = x;
  } else {
    result["detail"] = report.detail;
  }
  result["k"] = schedule_json(fig.k);
  result["w"] = schedule_json(fig.w);
  return envelope("membership", spec, solve_options_echo(options), result,
                  elapsed_ms(begin));
}

Json detect_pipeline(const ProblemSpec& spec) {
  auto begin = Clock::now();
  DetectabilityResult result = auxiliary_detectability(spec);
  Json r = Json::object();
  r["detectable"] = result.detectable;
  r["synthesis_diverged"] = result.synthesis_diverged;
  if (result.detectable) {
    r["rho_injected"] = result.rho_injected;
    r["h"] = schedule_json(result.h);
    Json c = Json::array();
    for (const auto& phase : result.c) {
      Json p = Json::array();
      for (const auto& m : phase) p.push_back(matrix_json(m));
      c.push_back(std::move(p));
    }
    r["c"] = c;
  }
  if (!result.detail.empty()) r["detail"] = result.detail;
  return envelope("detect", spec, Json::object(), r, elapsed_ms(begin));
}

Json verify_pipeline(const ProblemSpec& spec, const StabilizingSolution* sol,
                     const PipelineOptions& options) {
  auto begin = Clock::now();
  StabilizingSolution resolved = resolve_solution(spec, sol, options);
  Vector x0 = initial_state(options, spec);

  // Deterministic Gaussian perturbation schedules, alternating players.
  std::uint64_t base = mix_seed(options.seed, 0x7065727475726221ULL);
  std::vector<GainPerturbation> deltas;
  deltas.reserve(static_cast<size_t>(options.perturbations));
  for (long k = 0; k < options.perturbations; ++k) {
    GainPerturbation d;
    d.player = static_cast<int>(k % 2) + 1;
    int rows = d.player == 1 ? spec.dims.m1 : spec.dims.m2;
    DrawStream draws(base, static_cast<std::uint64_t>(k));
    GainSchedule schedule(static_cast<size_t>(spec.dims.period));
    for (auto& phase : schedule) {
      phase.resize(static_cast<size_t>(spec.dims.N));
      for (auto& m : phase) {
        m = Matrix(rows, spec.dims.n);
        for (int a = 0; a < rows; ++a)
          for (int b = 0; b < spec.dims.n; ++b)
            m(a, b) = 0.05 * draws.noise(NoiseLaw::Gaussian);
      }
    }
    d.delta = std::move(schedule);
    deltas.push_back(std::move(d));
  }
  SaddleReport saddle =
      verify_saddle_point(spec, resolved, deltas, x0, options.t0);

  auto [f1, f2] = split_gain(resolved.f, spec.dims);
  SimConfig cfg;
  cfg.trajectories = options.trajectories;
  cfg.horizon = options.horizon > 0
                    ? options.horizon
                    : default_horizon(resolved.rho_closed, spec.dims.period);
  cfg.seed = options.seed;
  cfg.noise_law = options.noise_law;
  cfg.antithetic = options.antithetic;
  TrajectoryBatch batch =
      simulate(spec, StateFeedback{f1, f2}, x0, options.t0, cfg);
  double value = saddle.equilibrium_value;
  bool mc_pass = batch.overflow_count == 0 &&
                 std::abs(batch.cost_mean - value) <=
                     3.0 * batch.cost_stderr + 2e-6 * std::abs(value);

  Json result = Json::object();
  result["strong"] = saddle.strong;
  result["mu1"] = saddle.mu1;
  result["mu2"] = saddle.mu2;
  result["equilibrium_value"] = saddle.equilibrium_value;
  Json outcomes = Json::array();
  for (const auto& o : saddle.outcomes) {
    Json item = Json::object();
    item["player"] = o.player;
    item["es"] = o.es;
    item["rho"] = o.rho;
    if (o.es) {
      item["cost"] = o.cost;
      item["gap"] = o.gap;
      item["predicted_gap"] = o.predicted_gap;
      item["ok"] = o.ok;
    }
    outcomes.push_back(std::move(item));
  }
  result["outcomes"] = outcomes;
  result["skipped"] = saddle.skipped;
  result["saddle_ok"] = saddle.all_ok;
  Json mc = Json::object();
  mc["trajectories"] = cfg.trajectories;
  mc["horizon"] = cfg.horizon;
  mc["seed"] = static_cast<long>(cfg.seed);
  mc["noise_law"] = noise_law_name(cfg.noise_law);
  mc["cost_mean"] = batch.cost_mean;
  mc["cost_stderr"] = batch.cost_stderr;
  mc["value"] = value;
  mc["pass"] = mc_pass;
  result["mc"] = mc;
  result["ok"] = saddle.all_ok && mc_pass;

  Json echo = solve_options_echo(options);
  echo["seed"] = static_cast<long>(options.seed);
  echo["perturbations"] = options.perturbations;
  echo["trajectories"] = options.trajectories;
  echo["horizon"] = cfg.horizon;
  echo["noise_law"] = noise_law_name(options.noise_law);
  echo["t0"] = options.t0;
  echo["x0"] = vector_json(x0);
  return envelope("verify", spec, echo, result, elapsed_ms(begin));
}

Json simulate_pipeline(const ProblemSpec& spec, const StabilizingSolution* sol,
                       const PipelineOptions& options) {
  auto begin = Clock::now();
  StabilizingSolution resolved = resolve_solution(spec, sol, options);
  Vector x0 = initial_state(options, spec);
  auto [f1, f2] = split_gain(resolved.f, spec.dims);

  SimConfig cfg;
  cfg.trajectories = options.trajectories;
  cfg.horizon = options.horizon > 0
                    ? options.horizon
                    : default_horizon(resolved.rho_closed, spec.dims.period);
  cfg.seed = options.seed;
  cfg.noise_law = options.noise_law;
  cfg.antithetic = options.antithetic;
  TrajectoryBatch batch =
      simulate(spec, StateFeedback{f1, f2}, x0, options.t0, cfg);

  double value =
      game_value(resolved, x0, options.t0,
                 mode_distribution(spec.markov, options.t0));

  Json result = Json::object();
  result["trajectories"] = cfg.trajectories;
  result["horizon"] = cfg.horizon;
  result["seed"] = static_cast<long>(cfg.seed);
  result["noise_law"] = noise_law_name(cfg.noise_law);
  result["antithetic"] = cfg.antithetic;
  result["t0"] = options.t0;
  result["x0"] = vector_json(x0);
  result["value"] = value;
  result["cost_mean"] = batch.cost_mean;
  result["cost_stderr"] = batch.cost_stderr;
  result["overflow"] = batch.overflow_count;
  try {
    DecayEstimate decay = empirical_decay(batch);
    Json d = Json::object();
    d["slope"] = decay.slope;
    d["slope_per_mode"] = vector_json(decay.slope_per_mode);
    d["window_begin"] = decay.window_begin;
    d["window_end"] = decay.window_end;
    result["decay"] = d;
  } catch (const Error&) {
    result["decay"] = nullptr;
  }
  if (options.format == "csv") result["csv"] = batch_csv(batch);

  Json echo = Json::object();
  echo["seed"] = static_cast<long>(options.seed);
  echo["trajectories"] = options.trajectories;
  echo["horizon"] = cfg.horizon;
  echo["noise_law"] = noise_law_name(options.noise_law);
  echo["antithetic"] = options.antithetic;
  echo["t0"] = options.t0;
  echo["x0"] = vector_json(x0);
  echo["format"] = options.format;
  return envelope("simulate", spec, echo, result, elapsed_ms(begin));
}

std::string deterministic_bytes(const Json& report) {
  Json copy = report;
  copy.erase("timing");
  return canonical_dump(copy);
}

}  // namespace gdtre
