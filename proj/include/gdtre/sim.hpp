#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "gdtre/game.hpp"

namespace gdtre {

enum class NoiseLaw { Gaussian, Rademacher };

const char* noise_law_name(NoiseLaw law);

struct SimConfig {
  long trajectories = 1000;
  long horizon = 100;  // number of simulated steps T
  std::uint64_t seed = 0;
  NoiseLaw noise_law = NoiseLaw::Gaussian;
  bool antithetic = false;
  // Full state and mode paths are kept only on request; the per-step
  // second-moment aggregates are always recorded.
  bool store_paths = false;
};

// Counter-based stream seed for trajectory `index` under a batch seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

// Deterministic per-trajectory draw stream.  The draw protocol is fixed:
// one uniform for the initial mode, then per step one uniform for the next
// mode followed by r noise draws.  Gaussian variates use Box-Muller on two
// uniforms without caching so the engine-word consumption per draw is pinned.
class DrawStream {
 public:
  DrawStream(std::uint64_t seed, std::uint64_t index)
      : engine_(mix_seed(seed, index)) {}

  double uniform();            // [0, 1)
  double noise(NoiseLaw law);  // mean 0, variance 1

 private:
  std::mt19937_64 engine_;
};

struct TrajectoryBatch {
  long trajectories = 0;
  long horizon = 0;
  long t0 = 0;
  int modes = 0;
  int dim = 0;
  std::uint64_t seed = 0;
  NoiseLaw noise_law = NoiseLaw::Gaussian;
  bool antithetic = false;

  std::vector<double> costs;           // per trajectory; NaN after overflow
  std::vector<std::uint8_t> overflow;  // per trajectory
  long overflow_count = 0;
  double cost_mean = 0.0;    // over non-overflowed trajectories
  double cost_stderr = 0.0;

  // Second-moment aggregates grouped by the initial mode: sum_sq[t](i) is
  // the sum of |x(t)|^2 over live trajectories started in mode i, and
  // alive[t](i) counts them.
  std::vector<Vector> sum_sq;  // [horizon + 1]
  std::vector<Vector> alive;   // [horizon + 1]

  std::vector<std::vector<Vector>> states;   // [trajectory][step], optional
  std::vector<std::vector<int>> mode_paths;  // [trajectory][step], optional

  double mean_sq(long step, int initial_mode) const;
  double mean_sq_total(long step) const;
};

// Mode paths only: count paths of steps+1 modes starting at time t0, the
// initial mode drawn from the propagated distribution at t0.
std::vector<std::vector<int>> sample_chain(const MarkovSpec& markov, long t0,
                                           long steps, std::uint64_t seed,
                                           long count);

// Monte Carlo rollout of the exact state recursion under a linear
// state-feedback pair, with the accumulated quadratic cost per trajectory.
// Trajectories are independent streams keyed by (seed, index); antithetic
// pairs share the stream of index/2 and negate the noise draws.  Results are
// bitwise independent of the worker thread count (GDTRE_THREADS caps it).
TrajectoryBatch simulate(const ProblemSpec& spec, const StateFeedback& pair,
                         const Vector& x0, long t0, const SimConfig& cfg);

// Full-information rollout: u1 = G x, then u2 = K x + W u1.
TrajectoryBatch simulate(const ProblemSpec& spec,
                         const FullInformationStrategy& strategy,
                         const Vector& x0, long t0, const SimConfig& cfg);

struct DecayEstimate {
  Vector slope_per_mode;  // per initial mode; NaN where no data survives
  double slope = 0.0;     // least-squares slope of log total mean |x|^2
  long window_begin = 0;
  long window_end = 0;
};

// Least-squares decay slope of log E|x(t)|^2 over the tail window
// [horizon/2, horizon].  Throws PreconditionFailed when the signal drops
// below the noise floor before at least three window points exist.
DecayEstimate empirical_decay(const TrajectoryBatch& batch);

// Smallest horizon T with rho^(T/period) < 1e-6, clamped to [period, 10000].
long default_horizon(double rho, int period);

// Per-step mean |x|^2 per initial mode plus cost summary, as CSV text.
std::string batch_csv(const TrajectoryBatch& batch);

}  // namespace gdtre
