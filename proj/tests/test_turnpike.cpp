#include <cmath>
#include <random>

#include "doctest.h"
#include "rslq/turnpike.hpp"
#include "test_models.hpp"

using namespace rslq;

TEST_CASE("exponentially weighted convolution against closed forms") {
  const TimeGrid grid(0.0, 10.0, 1e-2);
  const double rate = 2.0;

  // Constant profile with a matching tail: h(t) = (2 - e^{-rate t}) / rate.
  std::vector<double> flat(static_cast<size_t>(grid.num_nodes()), 1.0);
  const auto h_flat = forcing_convolution(flat, grid, rate, 1.0);
  REQUIRE(h_flat.size() == flat.size());
  for (double t : {0.0, 1.0, 5.0, 10.0}) {
    const double exact = (2.0 - std::exp(-rate * t)) / rate;
    const double got = h_flat[static_cast<size_t>(grid.index_of(t))];
    CHECK(std::abs(got - exact) < 1e-4);
  }

  // Smooth decaying profile xi(s) = e^{-s}, rate 2:
  // h(t) = (4/3) e^{-t} - e^{-2t} (tail contribution below 1e-8).
  std::vector<double> decay;
  for (int k = 0; k < grid.num_nodes(); ++k)
    decay.push_back(std::exp(-grid.node(k)));
  const auto h_decay = forcing_convolution(decay, grid, rate, decay.back());
  for (double t : {0.0, 2.0, 6.0}) {
    const double exact = (4.0 / 3.0) * std::exp(-t) - std::exp(-2.0 * t);
    const double got = h_decay[static_cast<size_t>(grid.index_of(t))];
    CHECK(std::abs(got - exact) < 1e-4);
  }

  // Zero profile stays zero.
  std::vector<double> zero(static_cast<size_t>(grid.num_nodes()), 0.0);
  for (double v : forcing_convolution(zero, grid, rate, 0.0)) CHECK(v == 0.0);

  CHECK_THROWS_AS(forcing_convolution(flat, grid, 0.0, 1.0), ModelError);
  CHECK_THROWS_AS(forcing_convolution({1.0, 2.0}, grid, rate, 0.0),
                  ModelError);
}

TEST_CASE("exponential fit recovers planted decays") {
  std::vector<std::pair<double, double>> series;
  for (int k = 0; k < 10; ++k) {
    const double x = k;
    series.emplace_back(x, 3.0 * std::exp(-0.5 * x));
  }
  const auto fit = fit_exponential_rates(series, 0.0, 1e300);
  REQUIRE(fit.has_value());
  CHECK(std::abs(fit->K - 3.0) < 1e-12);
  CHECK(std::abs(fit->rate - 0.5) < 1e-13);
  CHECK(fit->r_squared >= 1.0 - 1e-12);
  CHECK(fit->points_used == 10);

  // Window filtering drops points outside [lo, hi] but the fit is unchanged.
  const auto windowed = fit_exponential_rates(series, 3e-2, 1.9);
  REQUIRE(windowed.has_value());
  CHECK(windowed->points_used < 10);
  CHECK(std::abs(windowed->rate - 0.5) < 1e-12);

  // Multiplicative noise: constants within a few percent.
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  std::vector<std::pair<double, double>> noisy;
  for (int k = 0; k < 20; ++k) {
    const double x = 0.5 * k;
    noisy.emplace_back(x, 3.0 * std::exp(-0.5 * x + u(rng)));
  }
  const auto nfit = fit_exponential_rates(noisy, 0.0, 1e300);
  REQUIRE(nfit.has_value());
  CHECK(std::abs(nfit->rate - 0.5) < 0.025);
  CHECK(std::abs(nfit->K - 3.0) < 0.3);
  CHECK(nfit->r_squared >= 0.99);

  // Degenerate inputs give no fit.
  CHECK(!fit_exponential_rates({{0, 1.0}, {1, 0.5}, {2, 0.25}}, 0.0, 1e300)
             .has_value());
  CHECK(!fit_exponential_rates(series, 1e250, 1e300).has_value());
  std::vector<std::pair<double, double>> negatives(
      8, std::pair<double, double>{1.0, -2.0});
  CHECK(!fit_exponential_rates(negatives, 0.0, 1e300).has_value());
}

TEST_CASE("homogeneous benchmark run produces a coherent report") {
  const LQModel model = testm::scalar_benchmark();
  const std::vector<double> T_list = {3.0, 5.0, 8.0, 12.0};
  const Vector x = Vector::Ones(1);
  const TurnpikeReport report = run_turnpike_experiment(
      model, model.signals, x, x, 0, T_list, 0.02);

  REQUIRE(!report.error.has_value());
  CHECK(report.horizons == T_list);
  CHECK(std::abs(report.delta_cert - 2.0) < 1e-6);
  REQUIRE(report.per_horizon.size() == 4);
  REQUIRE(report.midpoint_series.size() == 4);

  for (size_t h = 0; h < 4; ++h) {
    const HorizonErrors& he = report.per_horizon[h];
    CHECK(he.T == T_list[h]);
    const auto nodes = static_cast<size_t>(he.grid.num_nodes());
    CHECK(he.xhat_sq.size() == nodes);
    CHECK(he.uhat_sq.size() == nodes);
    CHECK(he.bound_lhs.size() == nodes);
    CHECK(he.bound_rhs.size() == nodes);
    CHECK(he.midpoint == report.midpoint_series[h]);
    // No signals: offsets vanish identically on both sides.
    for (double g : he.gap_h) CHECK(g == 0.0);
    for (double g : he.gap_v) CHECK(g == 0.0);
    // Both trajectories start at x: the difference starts at zero.
    CHECK(he.xhat_sq.front() == 0.0);
    // Quadrature of the horizon-T law against the quadratic value.
    CHECK(std::abs(he.J - 0.5 * std::tanh(he.T)) < 5e-4);
    // Ergodic table mirrors the per-horizon costs.
    CHECK(report.ergodic.J_over_T[h] == doctest::Approx(he.J / he.T));
  }

  // Midpoints fall geometrically for the homogeneous case.
  CHECK(report.midpoint_monotone);
  for (size_t h = 1; h < 4; ++h)
    CHECK(report.midpoint_series[h] < report.midpoint_series[h - 1]);
  REQUIRE(report.fitted.has_value());
  CHECK(report.fitted->rate > 0.0);
  CHECK(report.min_bound_pass_rate >= 0.99);

  // Zero-tail signals: the integrated gap collapses along the list.
  const CaseVerdict integrable =
      check_integrable_case(report, model.signals);
  CHECK(integrable.pass);
  REQUIRE(integrable.values.size() == 4);
  CHECK(integrable.values.back() <= 0.05 * integrable.values.front());

  // The same report against constant-tail signals must refuse the check.
  const CaseVerdict wrong =
      check_integrable_case(report, testm::scalar_constant(1.0).signals);
  CHECK(!wrong.pass);
  CHECK(!wrong.detail.empty());
}

TEST_CASE("compact forcing keeps the integrated gap summable") {
  const LQModel model = testm::scalar_compact(1.0, 1.0);
  const std::vector<double> T_list = {2.0, 4.0, 8.0, 12.0};
  const Vector x = Vector::Ones(1);
  const TurnpikeReport report = run_turnpike_experiment(
      model, model.signals, x, x, 0, T_list, 0.02);

  REQUIRE(!report.error.has_value());
  // Forcing is live on [0,1], so offsets differ between the horizons.
  CHECK(report.per_horizon[0].gap_v.front() > 0.0);

  const CaseVerdict verdict = check_integrable_case(report, model.signals);
  CHECK(verdict.pass);
  CHECK(verdict.values.back() <= 0.05 * verdict.values.front());
}

TEST_CASE("ergodic cost of the constant-drift benchmark approaches beta^2/2") {
  const double beta = 1.0;
  const LQModel model = testm::scalar_constant(beta);
  const CaseVerdict verdict = check_ergodic_case(
      model, model.signals, Vector::Zero(1), 0, {10.0, 20.0, 40.0}, 0.01);

  CHECK(verdict.pass);
  CHECK(std::abs(verdict.limit - 0.5 * beta * beta) < 1e-6);
  REQUIRE(verdict.values.size() == 3);
  // |J/T - limit| shrinks along the list.
  CHECK(verdict.values[2] <= verdict.values[0]);

  const CaseVerdict degenerate = check_ergodic_case(
      model, model.signals, Vector::Zero(1), 0, {10.0}, 0.01);
  CHECK(!degenerate.pass);
  CHECK(!degenerate.detail.empty());
}

TEST_CASE("experiment preconditions") {
  const LQModel model = testm::scalar_benchmark();
  const Vector x = Vector::Ones(1);
  CHECK_THROWS_AS(
      run_turnpike_experiment(model, model.signals, x, x, 0, {}, 0.01),
      ModelError);
  CHECK_THROWS_AS(run_turnpike_experiment(model, model.signals, x, x, 0,
                                          {4.0, 2.0}, 0.01),
                  ModelError);
  CHECK_THROWS_AS(run_turnpike_experiment(model, model.signals, x, x, 0,
                                          {2.0, 2.0}, 0.01),
                  ModelError);
  // A horizon that is not a step multiple fails inside the pipeline and is
  // reported rather than thrown, so completed horizons survive.
  const TurnpikeReport broken = run_turnpike_experiment(
      model, model.signals, x, x, 0, {1.0, 1.03}, 0.02);
  REQUIRE(broken.error.has_value());
  CHECK(broken.per_horizon.size() == 1);  // T = 1 completed first
  CHECK_THROWS_AS(run_turnpike_experiment(model, model.signals,
                                          Vector::Ones(2), x, 0, {2.0}, 0.01),
                  ModelError);
}
