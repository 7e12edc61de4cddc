#pragma once

#include "gdtre/jsonio.hpp"
#include "gdtre/riccati.hpp"
#include "gdtre/sim.hpp"

namespace gdtre {

inline constexpr const char* kToolName = "gdtre";
inline constexpr const char* kToolVersion = "1.0.0";

Json matrix_json(const Matrix& m);
Matrix matrix_from_json(const Json& j, int rows, int cols);
Json tuple_json(const SymTuple& x);
Json schedule_json(const GainSchedule& g);

// Options shared by the command pipelines, parsed from a JSON object with
// strict key checking.  Negative numeric fields mean "use the default".
struct PipelineOptions {
  SolveOptions solve;
  std::uint64_t seed = 0;
  long trajectories = 10000;
  long horizon = -1;  // -1 derives the horizon from the closed-loop radius
  long perturbations = 20;
  Vector x0;  // empty selects the all-ones vector
  long t0 = 0;
  NoiseLaw noise_law = NoiseLaw::Gaussian;
  bool antithetic = false;
  std::string format = "json";
};

PipelineOptions parse_options(const Json& options, const ProblemSpec& spec);

// Persistent solution schema.  Loading re-derives gains, sign data and the
// residual from the stored value tuples alone and rejects files whose
// recomputed backward step disagrees with the stored values, so a tampered
// or mismatched file cannot pass as a stabilizing solution.
Json solution_to_json(const ProblemSpec& spec, const StabilizingSolution& sol);
StabilizingSolution solution_from_json(const ProblemSpec& spec, const Json& j);

// Command pipelines.  Each returns a report envelope
//   {tool, command, digest, options, result, timing}
// whose content outside "timing" is deterministic for fixed inputs and seed.
Json validate_pipeline(const ProblemSpec& spec);

struct SolveOutput {
  StabilizingSolution sol;
  Json report;
};
SolveOutput solve_pipeline(const ProblemSpec& spec,
                           const PipelineOptions& options);

Json membership_pipeline(const ProblemSpec& spec,
                         const StabilizingSolution* sol,
                         const PipelineOptions& options);
Json detect_pipeline(const ProblemSpec& spec);
Json verify_pipeline(const ProblemSpec& spec, const StabilizingSolution* sol,
                     const PipelineOptions& options);
Json simulate_pipeline(const ProblemSpec& spec, const StabilizingSolution* sol,
                       const PipelineOptions& options);

// Canonical bytes of the report with the "timing" object removed.
std::string deterministic_bytes(const Json& report);

}  // namespace gdtre
