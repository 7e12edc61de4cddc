#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "gdtre/game.hpp"
#include "gdtre/operators.hpp"

using namespace gdtre;

namespace {

StateFeedback equilibrium_pair(const ProblemSpec& spec,
                               const StabilizingSolution& sol) {
  auto [f1, f2] = split_gain(sol.f, spec.dims);
  return StateFeedback{f1, f2};
}

GainSchedule constant_schedule(const ProblemSpec& spec, int rows,
                               double value) {
  GainSchedule g(static_cast<size_t>(spec.dims.period));
  for (auto& phase : g) {
    phase.assign(static_cast<size_t>(spec.dims.N),
                 Matrix::Constant(rows, spec.dims.n, value));
  }
  return g;
}

GainSchedule random_schedule(const ProblemSpec& spec, int rows, double scale,
                             std::mt19937& rng) {
  std::normal_distribution<double> dist(0.0, scale);
  GainSchedule g(static_cast<size_t>(spec.dims.period));
  for (auto& phase : g) {
    phase.resize(static_cast<size_t>(spec.dims.N));
    for (auto& m : phase) {
      m = Matrix::NullaryExpr(rows, spec.dims.n,
                              [&](Eigen::Index, Eigen::Index) { return dist(rng); });
    }
  }
  return g;
}

void add_schedule(GainSchedule& target, const GainSchedule& delta) {
  for (size_t t = 0; t < target.size(); ++t) {
    for (size_t i = 0; i < target[t].size(); ++i) {
      target[t][i] += delta[t][i];
    }
  }
}

}  // namespace

TEST_CASE("mode distribution propagates through the chain") {
  MarkovSpec markov;
  markov.P = {(Matrix(2, 2) << 0.5, 0.5, 0.25, 0.75).finished()};
  markov.pi0 = (Vector(2) << 1.0, 0.0).finished();

  Vector p0 = mode_distribution(markov, 0);
  CHECK(p0(0) == doctest::Approx(1.0));
  Vector p1 = mode_distribution(markov, 1);
  CHECK(p1(0) == doctest::Approx(0.5));
  CHECK(p1(1) == doctest::Approx(0.5));
  Vector p2 = mode_distribution(markov, 2);
  CHECK(p2(0) == doctest::Approx(0.375));
  CHECK(p2(1) == doctest::Approx(0.625));
  CHECK(p2.sum() == doctest::Approx(1.0));

  CHECK_THROWS_AS(mode_distribution(markov, -1), Error);
}

TEST_CASE("equilibrium cost reproduces the solution value per mode") {
  for (const char* name : {"scalar_game.json", "multi.json", "multi_p2.json"}) {
    CAPTURE(name);
    ProblemSpec spec = fixtures::load(name);
    StabilizingSolution sol = stabilizing_solve(spec);
    REQUIRE(sol.status == SolveStatus::Converged);
    StateFeedback pair = equilibrium_pair(spec, sol);

    std::mt19937 rng(7);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int rep = 0; rep < 3; ++rep) {
      Vector x0(spec.dims.n);
      for (int j = 0; j < spec.dims.n; ++j) x0(j) = dist(rng);
      for (long t0 : {0L, 3L}) {
        CostReport cost = exact_cost(spec, pair, x0, t0);
        REQUIRE(cost.stable);
        const SymTuple& xt = sol.x[static_cast<size_t>(spec.phase(t0))];
        for (int i = 0; i < spec.dims.N; ++i) {
          double expect = x0.dot(xt[i] * x0);
          CHECK(cost.value_per_mode(i) ==
                doctest::Approx(expect).epsilon(1e-8));
        }
        Vector pi = mode_distribution(spec.markov, t0);
        CHECK(cost.expected_value ==
              doctest::Approx(game_value(sol, x0, t0, pi)).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("zero dynamics reduce the cost tuple to the stage weight") {
  ProblemSpec spec = fixtures::load("scalar_game.json");
  for (auto& phase : spec.sys.A)
    for (auto& channel : phase) channel.assign(channel.size(), Matrix::Zero(1, 1));
  for (auto& phase : spec.sys.B)
    for (auto& channel : phase) channel.assign(channel.size(), Matrix::Zero(1, 2));

  StateFeedback pair{constant_schedule(spec, 1, 0.3),
                     constant_schedule(spec, 1, -0.4)};
  Vector x0 = (Vector(1) << 2.0).finished();
  CostReport cost = exact_cost(spec, pair, x0, 0);
  REQUIRE(cost.stable);
  CHECK(cost.rho == doctest::Approx(0.0).epsilon(1e-12));

  Matrix f = (Matrix(2, 1) << 0.3, -0.4).finished();
  Matrix stage = spec.M(0, 0) + spec.L(0, 0) * f + f.transpose() * spec.L(0, 0).transpose() +
                 f.transpose() * spec.R(0, 0) * f;
  CHECK(cost.expected_value == doctest::Approx(4.0 * stage(0, 0)).epsilon(1e-12));
  CHECK(cost.z[0][0](0, 0) == doctest::Approx(stage(0, 0)).epsilon(1e-12));
}

TEST_CASE("cost is quadratic in the initial state") {
  ProblemSpec spec = fixtures::load("scalar_game.json");
  StabilizingSolution sol = stabilizing_solve(spec);
  StateFeedback pair = equilibrium_pair(spec, sol);
  Vector x0 = (Vector(1) << 1.5).finished();
  double base = exact_cost(spec, pair, x0, 0).expected_value;
  double doubled = exact_cost(spec, pair, 2.0 * x0, 0).expected_value;
  CHECK(doubled == doctest::Approx(4.0 * base).epsilon(1e-10));
  CHECK(exact_cost(spec, pair, Vector::Zero(1), 0).expected_value ==
        doctest::Approx(0.0));
}

TEST_CASE("unilateral deviations move the cost in opposite directions") {
  ProblemSpec spec = fixtures::load("scalar_game.json");
  StabilizingSolution sol = stabilizing_solve(spec);
  REQUIRE(sol.sign_class == SignClass::Strong);
  StateFeedback pair = equilibrium_pair(spec, sol);
  Vector x0 = (Vector(1) << 1.0).finished();
  double value = exact_cost(spec, pair, x0, 0).expected_value;

  StateFeedback up = pair;
  add_schedule(up.f1, constant_schedule(spec, 1, 0.1));
  CostReport c1 = exact_cost(spec, up, x0, 0);
  REQUIRE(c1.stable);
  CHECK(c1.expected_value < value - 1e-6);

  StateFeedback down = pair;
  add_schedule(down.f2, constant_schedule(spec, 1, 0.1));
  CostReport c2 = exact_cost(spec, down, x0, 0);
  REQUIRE(c2.stable);
  CHECK(c2.expected_value > value + 1e-6);
}

TEST_CASE("saddle verification matches gaps with their decompositions") {
  for (const char* name : {"scalar_game.json", "multi.json"}) {
    CAPTURE(name);
    ProblemSpec spec = fixtures::load(name);
    StabilizingSolution sol = stabilizing_solve(spec);
    REQUIRE(sol.status == SolveStatus::Converged);

    std::mt19937 rng(11);
    std::vector<GainPerturbation> deltas;
    for (int rep = 0; rep < 4; ++rep) {
      deltas.push_back(
          {1, random_schedule(spec, spec.dims.m1, 0.05 * (rep + 1), rng)});
      deltas.push_back(
          {2, random_schedule(spec, spec.dims.m2, 0.05 * (rep + 1), rng)});
    }
    Vector x0 = Vector::Ones(spec.dims.n);
    SaddleReport report = verify_saddle_point(spec, sol, deltas, x0);
    CHECK(report.strong);
    CHECK(report.mu1 > 1e-6);
    CHECK(report.mu2 > 1e-6);
    CHECK(report.all_ok);
    CHECK(report.skipped == 0);
    REQUIRE(report.outcomes.size() == deltas.size());
    for (const auto& out : report.outcomes) {
      REQUIRE(out.es);
      CHECK(std::abs(out.gap - out.predicted_gap) <=
            1e-8 * (1.0 + std::abs(report.equilibrium_value) +
                    std::abs(out.gap)));
      if (out.player == 1) CHECK(out.gap <= 1e-10);
      if (out.player == 2) CHECK(out.gap >= -1e-10);
    }
  }
}

TEST_CASE("destabilizing perturbations are screened out and reported") {
  ProblemSpec spec = fixtures::load("scalar_game.json");
  StabilizingSolution sol = stabilizing_solve(spec);
  std::vector<GainPerturbation> deltas;
  deltas.push_back({2, constant_schedule(spec, 1, 5.0)});
  deltas.push_back({1, constant_schedule(spec, 1, 0.1)});
  SaddleReport report = verify_saddle_point(spec, sol, deltas, Vector::Ones(1));
  CHECK(report.skipped == 1);
  REQUIRE(report.outcomes.size() == 2);
  CHECK_FALSE(report.outcomes[0].es);
  CHECK(report.outcomes[0].rho > 1.0);
  CHECK(report.outcomes[1].es);
  CHECK(report.all_ok);
}

TEST_CASE("joint deviations split into signed factor-weighted penalties") {
  for (const char* name : {"scalar_game.json", "multi.json"}) {
    CAPTURE(name);
    ProblemSpec spec = fixtures::load(name);
    StabilizingSolution sol = stabilizing_solve(spec);
    auto [f1, f2] = split_gain(sol.f, spec.dims);
    Vector x0 = Vector::Ones(spec.dims.n);
    Vector pi = mode_distribution(spec.markov, 0);
    double value = game_value(sol, x0, 0, pi);

    std::mt19937 rng(23);
    for (int rep = 0; rep < 5; ++rep) {
      GainSchedule d1 = random_schedule(spec, spec.dims.m1, 0.08, rng);
      GainSchedule d2 = random_schedule(spec, spec.dims.m2, 0.08, rng);
      StateFeedback pair{f1, f2};
      add_schedule(pair.f1, d1);
      add_schedule(pair.f2, d2);
      CostReport cost = exact_cost(spec, pair, x0, 0);
      REQUIRE(cost.stable);

      // cost = value + |V21 d1 + V22 d2|^2 term - |V11 d1|^2 term, each term
      // an accumulated quadratic over the jointly perturbed loop.
      GainSchedule f = stack_gains(pair.f1, pair.f2);
      auto op = LyapunovOperator::from_spec(spec, &f);
      std::vector<SymTuple> plus(static_cast<size_t>(spec.dims.period));
      std::vector<SymTuple> minus(static_cast<size_t>(spec.dims.period));
      for (int t = 0; t < spec.dims.period; ++t) {
        VFactorization v =
            v_factorize(sol.iterates[static_cast<size_t>(t)], spec.dims);
        SymTuple pt(spec.dims.N, spec.dims.n);
        SymTuple mt(spec.dims.N, spec.dims.n);
        for (int i = 0; i < spec.dims.N; ++i) {
          size_t st = static_cast<size_t>(t), si = static_cast<size_t>(i);
          Matrix mix = v.v21[si] * d1[st][si] + v.v22[si] * d2[st][si];
          Matrix neg = v.v11[si] * d1[st][si];
          pt.set(i, Matrix(mix.transpose() * mix));
          mt.set(i, Matrix(neg.transpose() * neg));
        }
        plus[static_cast<size_t>(t)] = pt;
        minus[static_cast<size_t>(t)] = mt;
      }
      auto gp = solve_periodic_backward(op, plus);
      auto gm = solve_periodic_backward(op, minus);
      double plus_term = 0.0, minus_term = 0.0;
      for (int i = 0; i < spec.dims.N; ++i) {
        plus_term += pi(i) * x0.dot(gp[0][i] * x0);
        minus_term += pi(i) * x0.dot(gm[0][i] * x0);
      }
      CHECK(plus_term >= -1e-12);
      CHECK(minus_term >= -1e-12);
      double decomposed = value + plus_term - minus_term;
      CHECK(cost.expected_value ==
            doctest::Approx(decomposed).epsilon(1e-8));
    }
  }
}

TEST_CASE("responder play turns deviations into a pure penalty") {
  for (const char* name : {"scalar_game.json", "scalar_lqr.json", "multi.json"}) {
    CAPTURE(name);
    ProblemSpec spec = fixtures::load(name);
    StabilizingSolution sol = stabilizing_solve(spec);
    Vector x0 = Vector::Ones(spec.dims.n);

    GainSchedule zero = constant_schedule(spec, spec.dims.m1, 0.0);
    FullInformationReport at_eq =
        full_information_value_identity(spec, sol, zero, x0);
    REQUIRE(at_eq.stable);
    CHECK(at_eq.ok);
    CHECK(at_eq.penalty == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(at_eq.direct_cost ==
          doctest::Approx(at_eq.equilibrium_value).epsilon(1e-8));

    std::mt19937 rng(31);
    for (int rep = 0; rep < 3; ++rep) {
      GainSchedule delta = random_schedule(spec, spec.dims.m1, 0.05, rng);
      FullInformationReport rep_out =
          full_information_value_identity(spec, sol, delta, x0);
      REQUIRE(rep_out.stable);
      CHECK(rep_out.ok);
      CHECK(rep_out.penalty >= -1e-10);
      CHECK(rep_out.direct_cost <= rep_out.equilibrium_value + 1e-8);
      CHECK(rep_out.direct_cost ==
            doctest::Approx(rep_out.decomposed_cost).epsilon(1e-8));
    }
  }
}

TEST_CASE("cost is equivariant under mode relabeling") {
  ProblemSpec spec = fixtures::load("multi.json");
  REQUIRE(spec.dims.N == 2);
  StabilizingSolution sol = stabilizing_solve(spec);
  StateFeedback pair = equilibrium_pair(spec, sol);
  StateFeedback bumped = pair;
  add_schedule(bumped.f1, constant_schedule(spec, spec.dims.m1, 0.05));

  ProblemSpec permuted = spec;
  std::vector<int> perm = {1, 0};
  for (int t = 0; t < spec.dims.period; ++t) {
    size_t st = static_cast<size_t>(t);
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        permuted.markov.P[st](a, b) =
            spec.markov.P[st](perm[static_cast<size_t>(a)],
                              perm[static_cast<size_t>(b)]);
      }
      permuted.markov.pi0(a) = spec.markov.pi0(perm[static_cast<size_t>(a)]);
      size_t sa = static_cast<size_t>(a);
      size_t pa = static_cast<size_t>(perm[sa]);
      for (int k = 0; k <= spec.dims.r; ++k) {
        permuted.sys.A[st][static_cast<size_t>(k)][sa] =
            spec.sys.A[st][static_cast<size_t>(k)][pa];
        permuted.sys.B[st][static_cast<size_t>(k)][sa] =
            spec.sys.B[st][static_cast<size_t>(k)][pa];
      }
      permuted.weights.M[st][sa] = spec.weights.M[st][pa];
      permuted.weights.L[st][sa] = spec.weights.L[st][pa];
      permuted.weights.R[st][sa] = spec.weights.R[st][pa];
    }
  }
  StateFeedback permuted_pair = bumped;
  for (int t = 0; t < spec.dims.period; ++t) {
    size_t st = static_cast<size_t>(t);
    for (int a = 0; a < 2; ++a) {
      permuted_pair.f1[st][static_cast<size_t>(a)] =
          bumped.f1[st][static_cast<size_t>(perm[static_cast<size_t>(a)])];
      permuted_pair.f2[st][static_cast<size_t>(a)] =
          bumped.f2[st][static_cast<size_t>(perm[static_cast<size_t>(a)])];
    }
  }

  Vector x0 = (Vector(2) << 1.0, -0.5).finished();
  CostReport original = exact_cost(spec, bumped, x0, 0);
  CostReport relabeled = exact_cost(permuted, permuted_pair, x0, 0);
  REQUIRE(original.stable);
  REQUIRE(relabeled.stable);
  CHECK(original.expected_value ==
        doctest::Approx(relabeled.expected_value).epsilon(1e-10));
  CHECK(original.value_per_mode(0) ==
        doctest::Approx(relabeled.value_per_mode(1)).epsilon(1e-10));
  CHECK(original.value_per_mode(1) ==
        doctest::Approx(relabeled.value_per_mode(0)).epsilon(1e-10));
}

TEST_CASE("game value weights the solution by the mode distribution") {
  ProblemSpec spec = fixtures::load("scalar_lqr.json");
  StabilizingSolution sol = stabilizing_solve(spec);
  Vector pi = (Vector(1) << 1.0).finished();
  Vector x0 = (Vector(1) << 2.0).finished();
  double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  CHECK(game_value(sol, x0, 0, pi) == doctest::Approx(4.0 * golden).epsilon(1e-9));
  CHECK(game_value(sol, Vector::Zero(1), 0, pi) == doctest::Approx(0.0));

  ProblemSpec multi = fixtures::load("multi.json");
  StabilizingSolution msol = stabilizing_solve(multi);
  Vector mx0 = (Vector(2) << 0.5, 1.0).finished();
  Vector mpi = (Vector(2) << 0.3, 0.7).finished();
  double manual = 0.3 * mx0.dot(msol.x[0][0] * mx0) + 0.7 * mx0.dot(msol.x[0][1] * mx0);
  CHECK(game_value(msol, mx0, 0, mpi) == doctest::Approx(manual).epsilon(1e-12));
  CHECK_THROWS_AS(game_value(msol, mx0, 0, Vector::Ones(3)), Error);
}

TEST_CASE("period-two values select the phase of the start time") {
  ProblemSpec spec = fixtures::load("period2.json");
  StabilizingSolution sol = stabilizing_solve(spec);
  REQUIRE(sol.status == SolveStatus::Converged);
  StateFeedback pair = equilibrium_pair(spec, sol);
  Vector x0 = (Vector(1) << 1.0).finished();
  CostReport at0 = exact_cost(spec, pair, x0, 0);
  CostReport at1 = exact_cost(spec, pair, x0, 1);
  CHECK(at0.expected_value == doctest::Approx(sol.x[0][0](0, 0)).epsilon(1e-8));
  CHECK(at1.expected_value == doctest::Approx(sol.x[1][0](0, 0)).epsilon(1e-8));
  CHECK(std::abs(at0.expected_value - at1.expected_value) > 1e-6);
}

TEST_CASE("unstable pairs are reported without values") {
  ProblemSpec spec = fixtures::load("scalar_game.json");
  StateFeedback pair{constant_schedule(spec, 1, 4.0),
                     constant_schedule(spec, 1, 0.0)};
  CostReport cost = exact_cost(spec, pair, Vector::Ones(1), 0);
  CHECK_FALSE(cost.stable);
  CHECK(cost.rho > 1.0);
  CHECK(cost.value_per_mode.size() == 0);
  CHECK(std::isnan(cost.expected_value));
  CHECK(cost.z.empty());
}

TEST_CASE("malformed strategy schedules are rejected") {
  ProblemSpec spec = fixtures::load("scalar_game.json");
  StateFeedback pair{constant_schedule(spec, 1, 0.0),
                     constant_schedule(spec, 1, 0.0)};
  StateFeedback bad = pair;
  bad.f1[0].pop_back();
  CHECK_THROWS_AS(exact_cost(spec, bad, Vector::Ones(1), 0), Error);
  StateFeedback wide = pair;
  wide.f2[0][0] = Matrix::Zero(2, 1);
  CHECK_THROWS_AS(exact_cost(spec, wide, Vector::Ones(1), 0), Error);
  CHECK_THROWS_AS(exact_cost(spec, pair, Vector::Ones(2), 0), Error);
}
