#include "gdtre/sim.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

#include "gdtre/jsonio.hpp"

namespace gdtre {

namespace {

constexpr double kOverflowNorm = 1e30;
constexpr long kChunk = 1024;

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename Weights>
int pick_mode(const Weights& weights, double u) {
  double acc = 0.0;
  int last = static_cast<int>(weights.size()) - 1;
  for (int i = 0; i < last; ++i) {
    acc += weights(i);
    if (u < acc) return i;
  }
  return last;
}

long thread_budget(long chunks) {
  long threads = static_cast<long>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  if (const char* env = std::getenv("GDTRE_THREADS")) {
    char* end = nullptr;
    long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) threads = std::min(threads, cap);
  }
  return std::min(threads, chunks);
}

void check_gain_shape(const GainSchedule& g, const ProblemSpec& spec, int rows,
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

struct ChunkPartial {
  double cost_sum = 0.0;
  double cost_sumsq = 0.0;
  long valid = 0;
  long overflow = 0;
  std::vector<Vector> sum_sq;
  std::vector<Vector> alive;
};

ChunkPartial merge(const ChunkPartial& a, const ChunkPartial& b) {
  ChunkPartial out = a;
  out.cost_sum += b.cost_sum;
  out.cost_sumsq += b.cost_sumsq;
  out.valid += b.valid;
  out.overflow += b.overflow;
  for (size_t t = 0; t < out.sum_sq.size(); ++t) {
    out.sum_sq[t] += b.sum_sq[t];
    out.alive[t] += b.alive[t];
  }
  return out;
}

// Gains of both players at (phase, mode): fills u1 and u2 from x.
using StrategyFn = std::function<void(int, int, const Vector&, Vector&, Vector&)>;

TrajectoryBatch run_batch(const ProblemSpec& spec, const StrategyFn& strategy,
                          const Vector& x0, long t0, const SimConfig& cfg) {
  if (cfg.trajectories < 1 || cfg.horizon < 1) {
    throw Error(ErrorCode::InvalidArgument,
                "simulation needs at least one trajectory and one step");
  }
  if (x0.size() != spec.dims.n) {
    throw Error(ErrorCode::InvalidArgument, "x0 has wrong dimension");
  }

  const long T = cfg.horizon;
  const int N = spec.dims.N;
  const int r = spec.dims.r;

  TrajectoryBatch batch;
  batch.trajectories = cfg.trajectories;
  batch.horizon = T;
  batch.t0 = t0;
  batch.modes = N;
  batch.dim = spec.dims.n;
  batch.seed = cfg.seed;
  batch.noise_law = cfg.noise_law;
  batch.antithetic = cfg.antithetic;
  batch.costs.assign(static_cast<size_t>(cfg.trajectories),
                     std::numeric_limits<double>::quiet_NaN());
  batch.overflow.assign(static_cast<size_t>(cfg.trajectories), 0);
  if (cfg.store_paths) {
    batch.states.resize(static_cast<size_t>(cfg.trajectories));
    batch.mode_paths.resize(static_cast<size_t>(cfg.trajectories));
  }

  Vector pi_t0 = mode_distribution(spec.markov, t0);
  const long chunks = (cfg.trajectories + kChunk - 1) / kChunk;
  std::vector<ChunkPartial> partials(static_cast<size_t>(chunks));

  auto run_chunk = [&](long chunk) {
    ChunkPartial part;
    part.sum_sq.assign(static_cast<size_t>(T + 1), Vector::Zero(N));
    part.alive.assign(static_cast<size_t>(T + 1), Vector::Zero(N));
    const long begin = chunk * kChunk;
    const long end = std::min(begin + kChunk, cfg.trajectories);

    Vector u1(spec.dims.m1), u2(spec.dims.m2), u(spec.dims.m());
    for (long j = begin; j < end; ++j) {
      std::uint64_t stream = cfg.antithetic
                                 ? static_cast<std::uint64_t>(j) >> 1
                                 : static_cast<std::uint64_t>(j);
      double sign = (cfg.antithetic && (j & 1)) ? -1.0 : 1.0;
      DrawStream draws(cfg.seed, stream);

      int theta = pick_mode(pi_t0, draws.uniform());
      const int initial = theta;
      Vector x = x0;
      double cost = 0.0;
      bool overflowed = false;

      auto record = [&](long step) {
        part.sum_sq[static_cast<size_t>(step)](initial) += x.squaredNorm();
        part.alive[static_cast<size_t>(step)](initial) += 1.0;
        if (cfg.store_paths) {
          batch.states[static_cast<size_t>(j)].push_back(x);
          batch.mode_paths[static_cast<size_t>(j)].push_back(theta);
        }
      };
      record(0);

      for (long s = 0; s < T; ++s) {
        long t = t0 + s;
        strategy(spec.phase(t), theta, x, u1, u2);
        u.head(spec.dims.m1) = u1;
        u.tail(spec.dims.m2) = u2;
        cost += x.dot(spec.M(t, theta) * x) + 2.0 * x.dot(spec.L(t, theta) * u) +
                u.dot(spec.R(t, theta) * u);

        double u_next = draws.uniform();
        Vector xn = spec.A(t, 0, theta) * x + spec.B(t, 0, theta) * u;
        for (int k = 1; k <= r; ++k) {
          double w = sign * draws.noise(cfg.noise_law);
          xn += w * (spec.A(t, k, theta) * x + spec.B(t, k, theta) * u);
        }
        x = xn;
        theta = pick_mode(spec.P(t).row(theta), u_next);
        if (!x.allFinite() || x.norm() > kOverflowNorm) {
          overflowed = true;
          break;
        }
        record(s + 1);
      }

      if (overflowed) {
        batch.overflow[static_cast<size_t>(j)] = 1;
        part.overflow += 1;
      } else {
        batch.costs[static_cast<size_t>(j)] = cost;
        part.cost_sum += cost;
        part.cost_sumsq += cost * cost;
        part.valid += 1;
      }
    }
    partials[static_cast<size_t>(chunk)] = std::move(part);
  };

  long threads = thread_budget(chunks);
  if (threads <= 1) {
    for (long chunk = 0; chunk < chunks; ++chunk) run_chunk(chunk);
  } else {
    std::atomic<long> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (long w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          long chunk = next.fetch_add(1);
          if (chunk >= chunks) return;
          run_chunk(chunk);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  // Pairwise reduction in fixed tree order so the totals do not depend on
  // the thread schedule.
  std::vector<ChunkPartial> level = std::move(partials);
  while (level.size() > 1) {
    std::vector<ChunkPartial> up;
    up.reserve((level.size() + 1) / 2);
    for (size_t k = 0; k + 1 < level.size(); k += 2) {
      up.push_back(merge(level[k], level[k + 1]));
    }
    if (level.size() % 2 == 1) up.push_back(level.back());
    level = std::move(up);
  }
  const ChunkPartial& total = level.front();

  batch.sum_sq = total.sum_sq;
  batch.alive = total.alive;
  batch.overflow_count = total.overflow;
  if (total.valid > 0) {
    batch.cost_mean = total.cost_sum / static_cast<double>(total.valid);
    if (total.valid > 1) {
      double var = (total.cost_sumsq -
                    total.cost_sum * total.cost_sum /
                        static_cast<double>(total.valid)) /
                   static_cast<double>(total.valid - 1);
      batch.cost_stderr =
          std::sqrt(std::max(0.0, var) / static_cast<double>(total.valid));
    }
  } else {
    batch.cost_mean = std::numeric_limits<double>::quiet_NaN();
    batch.cost_stderr = std::numeric_limits<double>::quiet_NaN();
  }
  return batch;
}

}  // namespace

const char* noise_law_name(NoiseLaw law) {
  return law == NoiseLaw::Gaussian ? "gaussian" : "rademacher";
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index));
}

double DrawStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double DrawStream::noise(NoiseLaw law) {
  if (law == NoiseLaw::Rademacher) {
    return (engine_() >> 63) ? 1.0 : -1.0;
  }
  double u1 = uniform();
  double u2 = uniform();
  if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
}

double TrajectoryBatch::mean_sq(long step, int initial_mode) const {
  double count = alive[static_cast<size_t>(step)](initial_mode);
  if (count <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sum_sq[static_cast<size_t>(step)](initial_mode) / count;
}

double TrajectoryBatch::mean_sq_total(long step) const {
  double count = alive[static_cast<size_t>(step)].sum();
  if (count <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sum_sq[static_cast<size_t>(step)].sum() / count;
}

std::vector<std::vector<int>> sample_chain(const MarkovSpec& markov, long t0,
                                           long steps, std::uint64_t seed,
                                           long count) {
  if (steps < 0 || count < 1) {
    throw Error(ErrorCode::InvalidArgument, "invalid chain sampling request");
  }
  Vector pi_t0 = mode_distribution(markov, t0);
  int p = markov.period();
  std::vector<std::vector<int>> paths(static_cast<size_t>(count));
  for (long j = 0; j < count; ++j) {
    DrawStream draws(seed, static_cast<std::uint64_t>(j));
    std::vector<int>& path = paths[static_cast<size_t>(j)];
    path.reserve(static_cast<size_t>(steps + 1));
    int theta = pick_mode(pi_t0, draws.uniform());
    path.push_back(theta);
    for (long s = 0; s < steps; ++s) {
      int phase = static_cast<int>((((t0 + s) % p) + p) % p);
      theta = pick_mode(markov.P[static_cast<size_t>(phase)].row(theta),
                        draws.uniform());
      path.push_back(theta);
    }
  }
  return paths;
}

TrajectoryBatch simulate(const ProblemSpec& spec, const StateFeedback& pair,
                         const Vector& x0, long t0, const SimConfig& cfg) {
  check_gain_shape(pair.f1, spec, spec.dims.m1, "player-1 gain schedule");
  check_gain_shape(pair.f2, spec, spec.dims.m2, "player-2 gain schedule");
  StrategyFn strategy = [&pair](int phase, int mode, const Vector& x,
                                Vector& u1, Vector& u2) {
    u1 = pair.f1[static_cast<size_t>(phase)][static_cast<size_t>(mode)] * x;
    u2 = pair.f2[static_cast<size_t>(phase)][static_cast<size_t>(mode)] * x;
  };
  return run_batch(spec, strategy, x0, t0, cfg);
}

TrajectoryBatch simulate(const ProblemSpec& spec,
                         const FullInformationStrategy& strategy,
                         const Vector& x0, long t0, const SimConfig& cfg) {
  check_gain_shape(strategy.u1, spec, spec.dims.m1, "u1 gain schedule");
  check_gain_shape(strategy.responder.k, spec, spec.dims.m2, "responder K");
  StrategyFn fn = [&strategy](int phase, int mode, const Vector& x, Vector& u1,
                              Vector& u2) {
    size_t t = static_cast<size_t>(phase), i = static_cast<size_t>(mode);
    u1 = strategy.u1[t][i] * x;
    u2 = strategy.responder.k[t][i] * x + strategy.responder.w[t][i] * u1;
  };
  return run_batch(spec, fn, x0, t0, cfg);
}

DecayEstimate empirical_decay(const TrajectoryBatch& batch) {
  constexpr double kFloor = 1e-280;
  DecayEstimate est;
  est.window_begin = batch.horizon / 2;
  est.window_end = batch.horizon;

  auto fit_slope = [&](auto value_at) -> double {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    long points = 0;
    for (long t = est.window_begin; t <= est.window_end; ++t) {
      double v = value_at(t);
      if (!std::isfinite(v) || v < kFloor) break;
      double lx = static_cast<double>(t), ly = std::log(v);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      points += 1;
    }
    if (points < 3) {
      throw Error(ErrorCode::PreconditionFailed,
                  "insufficient decay signal in the tail window");
    }
    double denom = points * sxx - sx * sx;
    return (points * sxy - sx * sy) / denom;
  };

  est.slope = fit_slope([&](long t) { return batch.mean_sq_total(t); });
  est.slope_per_mode = Vector::Constant(
      batch.modes, std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < batch.modes; ++i) {
    try {
      est.slope_per_mode(i) =
          fit_slope([&](long t) { return batch.mean_sq(t, i); });
    } catch (const Error&) {
      // a mode with no trajectories keeps NaN; the total slope is the signal
    }
  }
  return est;
}

long default_horizon(double rho, int period) {
  if (period < 1) period = 1;
  constexpr long kCap = 10000;
  if (!(rho > 0.0)) return period;
  if (rho >= 1.0) return kCap;
  double t = std::ceil(static_cast<double>(period) * std::log(1e-6) /
                       std::log(rho));
  if (t < static_cast<double>(period)) return period;
  if (t > static_cast<double>(kCap)) return kCap;
  return static_cast<long>(t);
}

std::string batch_csv(const TrajectoryBatch& batch) {
  std::ostringstream out;
  out << "# trajectories " << batch.trajectories << "\n";
  out << "# overflow " << batch.overflow_count << "\n";
  out << "# cost_mean " << format_double(batch.cost_mean) << "\n";
  out << "# cost_stderr " << format_double(batch.cost_stderr) << "\n";
  out << "step";
  for (int i = 0; i < batch.modes; ++i) out << ",mean_sq_mode_" << i;
  out << ",mean_sq_total\n";
  for (long t = 0; t <= batch.horizon; ++t) {
    out << t;
    for (int i = 0; i < batch.modes; ++i) {
      out << "," << format_double(batch.mean_sq(t, i));
    }
    out << "," << format_double(batch.mean_sq_total(t)) << "\n";
  }
  return out.str();
}

}  // namespace gdtre
