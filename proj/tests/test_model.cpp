#include <cmath>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "doctest.h"
#include "rslq/model.hpp"
#include "test_models.hpp"

using namespace rslq;

namespace {

Matrix random_matrix(std::mt19937& rng, int rows, int cols, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = u(rng);
  return M;
}

// Random generator matrix: nonnegative off-diagonals, rows summing to zero.
Matrix random_generator(std::mt19937& rng, int m0, double scale) {
  std::uniform_real_distribution<double> u(0.0, scale);
  Matrix L = Matrix::Zero(m0, m0);
  for (int i = 0; i < m0; ++i) {
    for (int j = 0; j < m0; ++j) {
      if (i == j) continue;
      L(i, j) = u(rng);
      L(i, i) -= L(i, j);
    }
  }
  return L;
}

}  // namespace

TEST_CASE("time grid nodes and lookup") {
  TimeGrid grid(0.0, 2.0, 1e-3);
  CHECK(grid.num_steps == 2000);
  CHECK(grid.num_nodes() == 2001);
  CHECK(grid.node(0) == 0.0);
  CHECK(grid.node(2000) == 2.0);  // endpoint exact by construction
  CHECK(std::abs(grid.node(700) - 0.7) < 1e-15);
  CHECK(grid.index_of(0.0) == 0);
  CHECK(grid.index_of(1.0) == 1000);
  CHECK(grid.index_of(2.0) == 2000);
  CHECK_THROWS_AS(grid.index_of(0.0005), ModelError);
  CHECK_THROWS_AS(grid.index_of(2.5), ModelError);
  CHECK_THROWS_AS(grid.index_of(-0.1), ModelError);

  CHECK_THROWS_AS(TimeGrid(0.0, 1.0, 0.0), ModelError);
  CHECK_THROWS_AS(TimeGrid(1.0, 1.0, 0.1), ModelError);
  CHECK_THROWS_AS(TimeGrid(0.0, 1.05, 0.1), ModelError);
}

TEST_CASE("signal lookup: intervals, zero before support, tail after") {
  SignalSet sg = SignalSet::zero(1, 1, 1);
  sg.breakpoints = {1.0, 2.0, 3.0};
  sg.b = {{Vector::Constant(1, 5.0), Vector::Constant(1, 7.0)}};
  sg.sigma = {{Vector::Zero(1), Vector::Zero(1)}};
  sg.q = {{Vector::Zero(1), Vector::Zero(1)}};
  sg.r = {{Vector::Zero(1), Vector::Zero(1)}};

  CHECK(sg.b_at(0.5, 0)(0) == 0.0);   // before the first breakpoint
  CHECK(sg.b_at(1.0, 0)(0) == 5.0);   // left endpoint included
  CHECK(sg.b_at(1.9, 0)(0) == 5.0);
  CHECK(sg.b_at(2.0, 0)(0) == 7.0);   // jump at the breakpoint
  CHECK(sg.b_at(2.9, 0)(0) == 7.0);
  CHECK(sg.b_at(3.0, 0)(0) == 0.0);   // no tail declared
  CHECK(sg.b_at(100.0, 0)(0) == 0.0);
  CHECK(!sg.is_zero());
  CHECK(sg.tail_is_zero());

  sg.has_tail = true;
  sg.b_tail = {Vector::Constant(1, -2.0)};
  CHECK(sg.b_at(3.0, 0)(0) == -2.0);
  CHECK(sg.b_at(100.0, 0)(0) == -2.0);
  CHECK(!sg.tail_is_zero());

  // No breakpoints: the tail value applies everywhere.
  SignalSet flat = SignalSet::zero(1, 1, 1);
  flat.has_tail = true;
  flat.b_tail = {Vector::Constant(1, 4.0)};
  CHECK(flat.b_at(0.0, 0)(0) == 4.0);
  CHECK(flat.b_at(9.0, 0)(0) == 4.0);
  CHECK(!flat.is_zero());

  CHECK(SignalSet::zero(2, 1, 3).is_zero());
  CHECK(SignalSet::zero(2, 1, 3).tail_is_zero());
}

TEST_CASE("signal breakpoints must land on solver grid nodes") {
  SignalSet sg = SignalSet::zero(1, 1, 1);
  sg.breakpoints = {0.0, 0.5};
  sg.b = {{Vector::Constant(1, 1.0)}};
  sg.sigma = {{Vector::Zero(1)}};
  sg.q = {{Vector::Zero(1)}};
  sg.r = {{Vector::Zero(1)}};

  CHECK_NOTHROW(sg.require_aligned(TimeGrid(0.0, 2.0, 0.1)));
  CHECK_THROWS_AS(sg.require_aligned(TimeGrid(0.0, 2.0, 0.3)), ModelError);
  // Breakpoints outside the window are ignored.
  sg.breakpoints = {0.0, 7.03};
  CHECK_NOTHROW(sg.require_aligned(TimeGrid(0.0, 2.0, 0.1)));
}

TEST_CASE("validate_model accepts the fixed test models") {
  for (const LQModel& model :
       {testm::scalar_benchmark(), testm::two_regime(), testm::scalar_noisy(),
        testm::three_regime()}) {
    const ValidationReport report = validate_model(model);
    CHECK(report.pass);
    for (const auto& item : report.items) CHECK(item.pass);
  }
}

TEST_CASE("validate_model flags broken hypotheses by name") {
  LQModel model = testm::two_regime();
  model.regimes[1].R = testm::m1x1(-0.5);
  model.regimes[0].Q(0, 0) = 0.0;
  model.gen.lambda(0, 1) = -1.0;  // negative rate; row sums also break
  const ValidationReport report = validate_model(model);
  CHECK(!report.pass);

  auto item = [&](const std::string& name) -> const ValidationItem& {
    for (const auto& it : report.items)
      if (it.name == name) return it;
    static ValidationItem missing;
    REQUIRE(false);
    return missing;
  };
  CHECK(!item("R positive definite (regime 2)").pass);
  CHECK(item("R positive definite (regime 2)").margin < 0.0);
  CHECK(!item("Q positive definite (regime 1)").pass);
  CHECK(!item("generator off-diagonal rates nonnegative").pass);
  CHECK(!item("generator rows sum to zero").pass);
  // Regime 1 weights are untouched aside from Q.
  CHECK(item("R positive definite (regime 1)").pass);
}

TEST_CASE("validate_model flags an indefinite completed square") {
  // Q and R positive definite but Q - S'R^{-1}S is not (S too large).
  LQModel model = testm::scalar(0, 1, 0, 0, 1.0, 2.0, 1.0);
  const ValidationReport report = validate_model(model);
  CHECK(!report.pass);
  bool found = false;
  for (const auto& item : report.items) {
    if (item.name == "Q - S' R^{-1} S positive definite (regime 1)") {
      found = true;
      CHECK(!item.pass);
      CHECK(item.margin == doctest::Approx(-3.0));
    }
  }
  CHECK(found);
}

TEST_CASE("validate_model throws on dimension mismatches") {
  LQModel model = testm::two_regime();
  model.regimes[0].B = Matrix::Zero(1, 2);
  CHECK_THROWS_AS(validate_model(model), ModelError);

  LQModel short_chain = testm::two_regime();
  short_chain.regimes.pop_back();
  CHECK_THROWS_AS(validate_model(short_chain), ModelError);
}

TEST_CASE("generator action matches the double-sum definition") {
  std::mt19937 rng(42);
  Generator gen;
  gen.m0 = 3;
  gen.lambda = random_generator(rng, 3, 2.0);

  MatFamily F;
  for (int i = 0; i < 3; ++i) F.push_back(random_matrix(rng, 2, 2, 1.0));
  const MatFamily LF = generator_apply(gen, F);

  for (int i = 0; i < 3; ++i) {
    Matrix direct = Matrix::Zero(2, 2);
    for (int j = 0; j < 3; ++j) {
      if (j == i) continue;
      direct += gen.lambda(i, j) * (F[j] - F[i]);
    }
    CHECK((LF[i] - direct).cwiseAbs().maxCoeff() < 1e-14);
  }

  VecFamily V;
  for (int i = 0; i < 3; ++i)
    V.push_back(random_matrix(rng, 2, 1, 1.0).col(0));
  const VecFamily LV = generator_apply(gen, V);
  for (int i = 0; i < 3; ++i) {
    Vector direct = Vector::Zero(2);
    for (int j = 0; j < 3; ++j) {
      if (j == i) continue;
      direct += gen.lambda(i, j) * (V[j] - V[i]);
    }
    CHECK((LV[i] - direct).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("chain law matches the matrix exponential") {
  std::mt19937 rng(7);
  Generator gen;
  gen.m0 = 3;
  gen.lambda = random_generator(rng, 3, 1.5);

  const TimeGrid grid(0.0, 5.0, 1e-3);
  const int i0 = 1;
  const auto law = chain_law(gen, i0, grid);
  REQUIRE(static_cast<int>(law.size()) == grid.num_nodes());

  Vector e0 = Vector::Zero(3);
  e0(i0) = 1.0;
  for (double t : {0.0, 1.0, 2.5, 5.0}) {
    const Matrix expm = (gen.lambda.transpose() * t).exp();
    const Vector exact = expm * e0;
    const Vector got = law[static_cast<size_t>(grid.index_of(t))];
    CHECK((got - exact).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(std::abs(got.sum() - 1.0) < 1e-12);
    CHECK(got.minCoeff() >= 0.0);
  }
}

TEST_CASE("chain law matches sampled exponential-clock paths") {
  Generator gen;
  gen.m0 = 2;
  gen.lambda = Matrix::Zero(2, 2);
  gen.lambda << -2.0, 2.0, 0.5, -0.5;

  const TimeGrid grid(0.0, 2.0, 1e-2);
  const auto law = chain_law(gen, 0, grid);

  const int paths = 100000;
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double probes[] = {1.0, 2.0};
  int hits[2] = {0, 0};  // times in regime 1 at each probe
  for (int p = 0; p < paths; ++p) {
    int state = 0;
    double t = 0.0;
    int idx = 0;
    while (idx < 2) {
      const double rate = -gen.lambda(state, state);
      const double hold = -std::log(1.0 - u(rng)) / rate;
      while (idx < 2 && t + hold >= probes[idx]) {
        if (state == 0) ++hits[idx];
        ++idx;
      }
      t += hold;
      state = 1 - state;  // two states: the jump target is forced
    }
  }
  for (int idx = 0; idx < 2; ++idx) {
    const double p_hat = static_cast<double>(hits[idx]) / paths;
    const double p_exact =
        law[static_cast<size_t>(grid.index_of(probes[idx]))](0);
    const double se = std::sqrt(p_exact * (1.0 - p_exact) / paths);
    CHECK(std::abs(p_hat - p_exact) <= 3.0 * se);
  }
}

TEST_CASE("stationary distribution") {
  Generator two;
  two.m0 = 2;
  two.lambda = Matrix::Zero(2, 2);
  two.lambda << -1.0, 1.0, 0.8, -0.8;
  const Vector pi = stationary_distribution(two);
  // Closed form: pi proportional to (lambda_21, lambda_12).
  CHECK(std::abs(pi(0) - 0.8 / 1.8) < 1e-12);
  CHECK(std::abs(pi(1) - 1.0 / 1.8) < 1e-12);

  std::mt19937 rng(99);
  Generator four;
  four.m0 = 4;
  four.lambda = random_generator(rng, 4, 3.0);
  const Vector pi4 = stationary_distribution(four);
  CHECK(std::abs(pi4.sum() - 1.0) < 1e-12);
  CHECK(pi4.minCoeff() > 0.0);
  CHECK((four.lambda.transpose() * pi4).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("chain-averaged squared signal size") {
  const LQModel model = testm::two_regime();  // b = (.5,-.3), sigma = (.2,.1)
  const TimeGrid grid(0.0, 2.0, 1e-2);
  const int i0 = 0;
  const auto xi = xi_profile(model.signals, model.gen, i0, grid);
  REQUIRE(static_cast<int>(xi.size()) == grid.num_nodes());

  const auto law = chain_law(model.gen, i0, grid);
  const double w1 = 0.5 * 0.5 + 0.2 * 0.2;  // |b|^2 + |sigma|^2, regime 1
  const double w2 = 0.3 * 0.3 + 0.1 * 0.1;
  for (double t : {0.0, 0.5, 2.0}) {
    const auto k = static_cast<size_t>(grid.index_of(t));
    const double expected = law[k](0) * w1 + law[k](1) * w2;
    CHECK(std::abs(xi[static_cast<size_t>(k)] - expected) < 1e-14);
  }
  CHECK(xi[0] == doctest::Approx(w1).epsilon(1e-12));  // starts at regime 1

  const Vector pi = stationary_distribution(model.gen);
  const double tail = xi_tail_value(model.signals, model.gen);
  CHECK(std::abs(tail - (pi(0) * w1 + pi(1) * w2)) < 1e-14);

  // Zero signals give a zero profile.
  const LQModel flat = testm::scalar_benchmark();
  const auto xi0 = xi_profile(flat.signals, flat.gen, 0, grid);
  for (double v : xi0) CHECK(v == 0.0);
  CHECK(xi_tail_value(flat.signals, flat.gen) == 0.0);
}
