#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"
#include "gdtre/riccati.hpp"

#include <cmath>
#include <random>

using namespace gdtre;

namespace {

SymTuple scalar_tuple(double v) {
  SymTuple x(1, 1);
  x.set(0, (Matrix(1, 1) << v).finished());
  return x;
}

// A spec with B = 0 so that Rcal = R exactly; used to drive classification
// and factorization with hand-picked R matrices.
ProblemSpec weight_probe(int m1, int m2, const Matrix& R) {
  ProblemSpec spec = fixtures::load("scalar_lqr.json");
  spec.dims.m1 = m1;
  spec.dims.m2 = m2;
  spec.sys.B[0][0][0] = Matrix::Zero(1, m1 + m2);
  spec.weights.L[0][0] = Matrix::Zero(1, m1 + m2);
  spec.weights.R[0][0] = R;
  return spec;
}

RiccatiIterate probe_iterate(int m1, int m2, const Matrix& R) {
  ProblemSpec spec = weight_probe(m1, m2, R);
  return riccati_step(spec, 0, scalar_tuple(0.0)).iterate;
}

}  // namespace

TEST_CASE("riccati step from the zero tuple") {
  ProblemSpec spec = fixtures::load("scalar_game.json");
  StepResult step = riccati_step(spec, 0, scalar_tuple(0.0));
  CHECK(step.iterate.x[0](0, 0) == doctest::Approx(1.0));
  CHECK(step.gains[0].norm() == 0.0);
  CHECK((step.iterate.rcal[0] - spec.R(0, 0)).norm() == 0.0);
}

TEST_CASE("riccati step reproduces the scalar map") {
  ProblemSpec lqr = fixtures::load("scalar_lqr.json");
  for (double x : {0.5, 1.0, 3.0}) {
    StepResult step = riccati_step(lqr, 0, scalar_tuple(x));
    CHECK(step.iterate.x[0](0, 0) ==
          doctest::Approx(1.0 + x - x * x / (1.0 + x)).epsilon(1e-14));
  }
  ProblemSpec game = fixtures::load("scalar_game.json");
  for (double x : {0.25, 1.0, 2.0}) {
    StepResult step = riccati_step(game, 0, scalar_tuple(x));
    CHECK(step.iterate.x[0](0, 0) ==
          doctest::Approx(1.0 + x - 4 * x * x / (5 + 4 * x)).epsilon(1e-14));
    CHECK(step.gains[0](0, 0) == doctest::Approx(x / (5 + 4 * x)));
    CHECK(step.gains[0](1, 0) == doctest::Approx(-5 * x / (5 + 4 * x)));
  }
}

TEST_CASE("a singular Rcal fails loudly") {
  ProblemSpec spec = fixtures::load("scalar_lqr.json");
  spec.weights.R[0][0](0, 0) = 0.0;  // B1 column is zero, so Rcal11 stays 0
  try {
    riccati_step(spec, 0, scalar_tuple(1.0));
    FAIL("expected SingularRcal");
  } catch (const Error& e) {
    CHECK(e.code == ErrorCode::SingularRcal);
  }
}

TEST_CASE("sign classification on hand-picked weight matrices") {
  Dims d;
  d.m1 = 1;
  d.m2 = 1;

  RiccatiIterate strong = probe_iterate(1, 1, (Matrix(2, 2) << -1, 0, 0, 1).finished());
  CHECK(strong.sign.cls == SignClass::Strong);
  CHECK(strong.sign.delta1 == doctest::Approx(1.0));
  CHECK(strong.sign.delta2 == doctest::Approx(1.0));
  CHECK(strong.sign.delta3 == doctest::Approx(1.0));
  CHECK(strong.inertia[0].negatives == 1);
  CHECK(strong.inertia[0].positives == 1);

  RiccatiIterate wide = probe_iterate(1, 1, (Matrix(2, 2) << -1, 2, 2, 1).finished());
  CHECK(wide.sign.cls == SignClass::Strong);
  CHECK(wide.sign.delta1 == doctest::Approx(5.0));

  // R11 positive but the Schur complement still negative: Admissible only.
  RiccatiIterate admissible =
      probe_iterate(1, 1, (Matrix(2, 2) << 1, 2, 2, 1).finished());
  CHECK(admissible.sign.cls == SignClass::Admissible);
  CHECK(admissible.sign.delta1 == doctest::Approx(3.0));
  CHECK(admissible.sign.delta3 == doctest::Approx(-1.0));

  // Correct inertia but the R22 block is negative: IndefiniteOnly.
  RiccatiIterate indefinite =
      probe_iterate(1, 1, (Matrix(2, 2) << 1, 0, 0, -1).finished());
  CHECK(indefinite.sign.cls == SignClass::IndefiniteOnly);

  RiccatiIterate degenerate =
      probe_iterate(1, 1, (Matrix(2, 2) << 1, 0, 0, 1).finished());
  CHECK(degenerate.sign.cls == SignClass::Degenerate);
}

TEST_CASE("V-factorization on closed-form cases") {
  Dims d;
  d.m1 = 1;
  d.m2 = 1;
  RiccatiIterate diag = probe_iterate(1, 1, (Matrix(2, 2) << -4, 0, 0, 9).finished());
  VFactorization v = v_factorize(diag, d);
  CHECK(v.v11[0](0, 0) == doctest::Approx(2.0));
  CHECK(v.v21[0](0, 0) == doctest::Approx(0.0));
  CHECK(v.v22[0](0, 0) == doctest::Approx(3.0));

  RiccatiIterate wide = probe_iterate(1, 1, (Matrix(2, 2) << -1, 2, 2, 1).finished());
  VFactorization vw = v_factorize(wide, d);
  CHECK(vw.v11[0](0, 0) == doctest::Approx(std::sqrt(5.0)));
  CHECK(vw.v21[0](0, 0) == doctest::Approx(2.0));
  CHECK(vw.v22[0](0, 0) == doctest::Approx(1.0));
}

TEST_CASE("V-factorization reconstructs random admissible matrices") {
  std::mt19937_64 gen(71);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto rand_mat = [&](int rows, int cols) {
    Matrix m(rows, cols);
    for (int p = 0; p < rows; ++p)
      for (int q = 0; q < cols; ++q) m(p, q) = u(gen);
    return m;
  };
  Dims d;
  d.m1 = 2;
  d.m2 = 2;
  for (int rep = 0; rep < 20; ++rep) {
    Matrix a = rand_mat(2, 2), b = rand_mat(2, 2), c = rand_mat(2, 2);
    Matrix R(4, 4);
    R << -(a.transpose() * a + Matrix::Identity(2, 2)), c, c.transpose(),
        b.transpose() * b + Matrix::Identity(2, 2);
    RiccatiIterate it;
    it.x = SymTuple(1, 1);
    it.rcal = {0.5 * (R + R.transpose().eval())};
    Inertia inertia;
    inertia.negatives = 2;
    inertia.positives = 2;
    it.inertia = {inertia};
    it.sign = classify_sign(it, d);
    REQUIRE((it.sign.cls == SignClass::Admissible ||
             it.sign.cls == SignClass::Strong));
    VFactorization v = v_factorize(it, d);
    Matrix V(4, 4);
    V << v.v11[0], Matrix::Zero(2, 2), v.v21[0], v.v22[0];
    Matrix J = Matrix::Identity(4, 4);
    J(0, 0) = J(1, 1) = -1.0;
    Matrix rebuilt = V.transpose() * J * V;
    CHECK((rebuilt - it.rcal[0]).norm() <= 1e-10 * it.rcal[0].norm());
  }
}

TEST_CASE("V-factorization refuses non-admissible iterates") {
  Dims d;
  d.m1 = 1;
  d.m2 = 1;
  RiccatiIterate degenerate =
      probe_iterate(1, 1, (Matrix(2, 2) << 1, 0, 0, 1).finished());
  try {
    v_factorize(degenerate, d);
    FAIL("expected NotAdmissible");
  } catch (const Error& e) {
    CHECK(e.code == ErrorCode::NotAdmissible);
  }
}

TEST_CASE("finite horizon recursion: base case, limit, monotonicity") {
  ProblemSpec lqr = fixtures::load("scalar_lqr.json");
  std::vector<StepResult> base = finite_horizon_solve(lqr, 0);
  CHECK(base[0].iterate.x[0](0, 0) == doctest::Approx(1.0));

  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<StepResult> run = finite_horizon_solve(lqr, 40);
  CHECK(run[0].iterate.x[0](0, 0) == doctest::Approx(golden).epsilon(1e-10));

  ProblemSpec game = fixtures::load("scalar_game.json");
  std::vector<StepResult> five = finite_horizon_solve(game, 5);
  std::vector<StepResult> ten = finite_horizon_solve(game, 10);
  for (long t = 0; t <= 5; ++t) {
    const double gap = ten[static_cast<size_t>(t)].iterate.x[0](0, 0) -
                       five[static_cast<size_t>(t)].iterate.x[0](0, 0);
    CHECK(gap >= -1e-12);
  }

  ProblemSpec multi = fixtures::load("multi.json");
  std::vector<StepResult> m5 = finite_horizon_solve(multi, 5);
  std::vector<StepResult> m10 = finite_horizon_solve(multi, 10);
  for (int i = 0; i < multi.dims.N; ++i) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m10[0].iterate.x[i] -
                                             m5[0].iterate.x[i]);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("stabilizing solve on the scalar regulator") {
  ProblemSpec spec = fixtures::load("scalar_lqr.json");
  StabilizingSolution sol = stabilizing_solve(spec);
  REQUIRE(sol.status == SolveStatus::Converged);
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  CHECK(sol.x[0][0](0, 0) == doctest::Approx(golden).epsilon(1e-10));
  CHECK(sol.f[0][0](1, 0) == doctest::Approx(-golden / (1 + golden)).epsilon(1e-9));
  CHECK(sol.rho_closed ==
        doctest::Approx(1.0 / ((1 + golden) * (1 + golden))).epsilon(1e-8));
  CHECK(sol.residual <= 1e-8);
  CHECK(sol.sign_class == SignClass::Strong);
  CHECK(sol.min_eig_x >= 0.0);
}

TEST_CASE("stabilizing solve on the scalar game, cross-checked") {
  ProblemSpec spec = fixtures::load("scalar_game.json");
  StabilizingSolution sol = stabilizing_solve(spec);
  REQUIRE(sol.status == SolveStatus::Converged);

  // Independent fixed-point iteration of the scalar map.
  double x = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const double next = 1.0 + x - 4 * x * x / (5 + 4 * x);
    if (std::abs(next - x) < 1e-13 * (1 + std::abs(next))) {
      x = next;
      break;
    }
    x = next;
  }
  const double closed_form = (1.0 + std::sqrt(6.0)) / 2.0;
  CHECK(x == doctest::Approx(closed_form).epsilon(1e-12));
  CHECK(sol.x[0][0](0, 0) == doctest::Approx(x).epsilon(1e-10));
  CHECK(sol.f[0][0](0, 0) == doctest::Approx(x / (5 + 4 * x)).epsilon(1e-9));
  CHECK(sol.f[0][0](1, 0) ==
        doctest::Approx(-5 * x / (5 + 4 * x)).epsilon(1e-9));
  const double a_cl = 1 + x / (5 + 4 * x) - 5 * x / (5 + 4 * x);
  CHECK(sol.rho_closed == doctest::Approx(a_cl * a_cl).epsilon(1e-8));
  CHECK(sol.sign_class == SignClass::Strong);
  CHECK(sol.delta3 == doctest::Approx(5.0 - x).epsilon(1e-9));
}

TEST_CASE("all solvable fixtures converge to admissible solutions") {
  for (const std::string& name : fixtures::solvable_names()) {
    INFO(name);
    ProblemSpec spec = fixtures::load(name);
    StabilizingSolution sol = stabilizing_solve(spec);
    REQUIRE(sol.status == SolveStatus::Converged);
    CHECK(sol.residual <= 1e-8);
    CHECK(sol.rho_closed < 1.0);
    CHECK((sol.sign_class == SignClass::Admissible ||
           sol.sign_class == SignClass::Strong));
    CHECK(sol.delta1 > 1e-6);
    CHECK(sol.delta2 > 1e-6);
    CHECK(sol.min_eig_x >= -1e-8);
    for (const RiccatiIterate& it : sol.iterates)
      for (const Inertia& in : it.inertia) {
        CHECK(in.negatives == spec.dims.m1);
        CHECK(in.zeros == 0);
        CHECK(in.positives == spec.dims.m2);
      }
  }
}

TEST_CASE("periodic solutions satisfy the wraparound equation") {
  ProblemSpec spec = fixtures::load("period2.json");
  StabilizingSolution sol = stabilizing_solve(spec);
  REQUIRE(sol.status == SolveStatus::Converged);
  CHECK(sol.x[0][0](0, 0) != doctest::Approx(sol.x[1][0](0, 0)).epsilon(1e-3));
  for (int t = 0; t < 2; ++t) {
    StepResult redo = riccati_step(spec, t, sol.x[static_cast<size_t>((t + 1) % 2)]);
    CHECK(rel_change(sol.x[static_cast<size_t>(t)], redo.iterate.x) <= 1e-10);
  }
}

TEST_CASE("horizon schedules agree on the limit") {
  for (const std::string& name : {std::string("scalar_game.json"),
                                  std::string("multi_p2.json")}) {
    INFO(name);
    ProblemSpec spec = fixtures::load(name);
    StabilizingSolution a = stabilizing_solve(spec);
    SolveOptions geo;
    geo.schedule = Schedule::Geometric;
    geo.initial_sweeps = 3;
    StabilizingSolution b = stabilizing_solve(spec, geo);
    REQUIRE(a.status == SolveStatus::Converged);
    REQUIRE(b.status == SolveStatus::Converged);
    for (int t = 0; t < spec.dims.period; ++t)
      CHECK(rel_change(a.x[static_cast<size_t>(t)],
                       b.x[static_cast<size_t>(t)]) <= 1e-8);
  }
}

TEST_CASE("sweep budget exhaustion reports NoConvergence") {
  ProblemSpec spec = fixtures::load("scalar_game.json");
  SolveOptions opts;
  opts.max_sweeps = 1;
  StabilizingSolution sol = stabilizing_solve(spec, opts);
  CHECK(sol.status == SolveStatus::NoConvergence);
  CHECK(sol.last_delta > 0.0);
}

TEST_CASE("divergent recursions report NoConvergence") {
  ProblemSpec spec = fixtures::load("scalar_lqr.json");
  spec.sys.A[0][0][0](0, 0) = 2.0;
  spec.sys.B[0][0][0] = Matrix::Zero(1, 2);
  StabilizingSolution sol = stabilizing_solve(spec);
  CHECK(sol.status == SolveStatus::NoConvergence);
}

TEST_CASE("a non-stabilizing limit is reported with the limit attached") {
  // Uncontrolled marginally stable system with zero cost: the recursion is
  // stationary at zero but the closed loop sits on the unit circle.
  ProblemSpec spec = fixtures::load("scalar_lqr.json");
  spec.sys.B[0][0][0] = Matrix::Zero(1, 2);
  spec.weights.M[0][0](0, 0) = 0.0;
  StabilizingSolution sol = stabilizing_solve(spec);
  CHECK(sol.status == SolveStatus::NotStabilizing);
  REQUIRE(sol.x.size() == 1);
  CHECK(sol.x[0][0](0, 0) == doctest::Approx(0.0));
  CHECK(sol.rho_closed == doctest::Approx(1.0));
}

TEST_CASE("weight monotonicity propagates to the iterates") {
  ProblemSpec spec = fixtures::load("scalar_game.json");
  ComparisonReport same = compare_solutions(spec, spec, 8);
  CHECK(same.min_gap == doctest::Approx(0.0));

  ProblemSpec bigger = spec;
  bigger.weights.M[0][0](0, 0) += 1.0;
  ComparisonReport up = compare_solutions(spec, bigger, 12);
  CHECK(up.min_gap >= -1e-10);

  ProblemSpec multi = fixtures::load("multi.json");
  ProblemSpec multi_up = multi;
  for (auto& row : multi_up.weights.M)
    for (auto& m : row) m += Matrix::Identity(m.rows(), m.cols());
  ComparisonReport mup = compare_solutions(multi, multi_up, 10);
  CHECK(mup.min_gap >= -1e-10);

  try {
    compare_solutions(bigger, spec, 4);
    FAIL("expected PreconditionFailed");
  } catch (const Error& e) {
    CHECK(e.code == ErrorCode::PreconditionFailed);
  }
}

TEST_CASE("gain reparametrization is an exact rewrite") {
  std::mt19937_64 gen(83);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const std::string& name :
       {std::string("scalar_game.json"), std::string("multi.json")}) {
    INFO(name);
    ProblemSpec spec = fixtures::load(name);
    const Dims& d = spec.dims;
    SymTuple x(d.N, d.n);
    for (int i = 0; i < d.N; ++i) {
      Matrix raw(d.n, d.n);
      for (int p = 0; p < d.n; ++p)
        for (int q = 0; q < d.n; ++q) raw(p, q) = u(gen);
      x.set(i, raw.transpose() * raw);  // keep Rcal comfortably invertible
    }
    StepResult step = riccati_step(spec, 0, x);
    for (int rep = 0; rep < 100; ++rep) {
      std::vector<Matrix> gamma;
      for (int i = 0; i < d.N; ++i) {
        Matrix g(d.m(), d.n);
        for (int p = 0; p < d.m(); ++p)
          for (int q = 0; q < d.n; ++q) g(p, q) = u(gen);
        gamma.push_back(g);
      }
      SymTuple rhs = reparametrized_rhs(spec, 0, x, gamma);
      CHECK(rel_change(rhs, step.iterate.x) <= 1e-12);
    }
    // The defining cases: gamma = F and gamma = 0.
    CHECK(rel_change(reparametrized_rhs(spec, 0, x, step.gains),
                     step.iterate.x) <= 1e-13);
    std::vector<Matrix> zero(static_cast<size_t>(d.N),
                             Matrix::Zero(d.m(), d.n));
    CHECK(rel_change(reparametrized_rhs(spec, 0, x, zero), step.iterate.x) <=
          1e-13);
  }
}
