#include <cmath>

#include "doctest.h"
#include "rslq/offsets.hpp"
#include "test_models.hpp"

using namespace rslq;

namespace {

double sech(double x) { return 1.0 / std::cosh(x); }

VecFamily h_refined(const LQModel& model, double T, double step) {
  const DRESolution dre = solve_dre(model, T, step);
  return solve_offset_finite(model, dre, model.signals).h[0];
}

double vec_family_gap(const VecFamily& a, const VecFamily& b) {
  double v = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    v = std::max(v, (a[i] - b[i]).cwiseAbs().maxCoeff());
  return v;
}

}  // namespace

TEST_CASE("constant drift signal has a sech-shaped offset") {
  const double beta = 0.7;
  const double T = 3.0;
  const LQModel model = testm::scalar_constant(beta);
  const DRESolution dre = solve_dre(model, T, 1e-3);
  const OffsetSolution off = solve_offset_finite(model, dre, model.signals);

  REQUIRE(off.kind == OffsetSolution::Kind::finite);
  REQUIRE(static_cast<int>(off.h.size()) == dre.grid.num_nodes());
  double worst_h = 0.0, worst_v = 0.0, worst_phi = 0.0;
  for (int k = 0; k < dre.grid.num_nodes(); ++k) {
    const double s = T - dre.grid.node(k);
    const double h_exact = beta * (1.0 - sech(s));
    const auto ku = static_cast<size_t>(k);
    worst_h = std::max(worst_h, std::abs(off.h[ku][0](0) - h_exact));
    // v = -(R + D'PD)^{-1} (B'h + r) = -h here.
    worst_v = std::max(worst_v, std::abs(off.v[ku][0](0) + h_exact));
    // phi = P b = tanh(s) beta.
    worst_phi =
        std::max(worst_phi, std::abs(off.phi[ku][0](0) - std::tanh(s) * beta));
  }
  CHECK(worst_h < 1e-10);
  CHECK(worst_v < 1e-10);
  CHECK(worst_phi < 1e-10);
  CHECK(off.h.back()[0](0) == 0.0);  // terminal value
}

TEST_CASE("compactly supported drift: offset vanishes past the support") {
  const double beta = 0.7;
  const double c = 1.0;
  const double T = 3.0;
  const LQModel model = testm::scalar_compact(beta, c);
  const DRESolution dre = solve_dre(model, T, 1e-3);
  const OffsetSolution off = solve_offset_finite(model, dre, model.signals);

  double worst = 0.0;
  for (int k = 0; k < dre.grid.num_nodes(); ++k) {
    const double t = dre.grid.node(k);
    const double exact =
        t >= c ? 0.0
               : beta * (1.0 - std::cosh(T - c) / std::cosh(T - t));
    worst = std::max(worst, std::abs(off.h[static_cast<size_t>(k)][0](0) -
                                     exact));
  }
  CHECK(worst < 1e-10);
  CHECK(off.h_at(2.0)[0](0) == 0.0);  // exactly zero: no forcing past c
}

TEST_CASE("infinite-horizon offsets settle at the stationary tail") {
  const double beta = 0.7;
  const LQModel model = testm::scalar_constant(beta);
  const ARESolution are = solve_are(model);

  InfiniteOffsetOptions opts;
  opts.T_max = 10.0;
  const OffsetSolution off = solve_offset_infinite(model, are, model.signals,
                                                   opts);
  REQUIRE(off.kind == OffsetSolution::Kind::infinite);
  CHECK(std::abs(off.h_tail[0](0) - beta) < 1e-12);
  CHECK(off.tail_gap < 1e-9);
  CHECK(off.delta == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(off.t_pad > 10.0);  // (8/delta) log(1/tol)
  for (double t : {0.0, 5.0, 10.0}) {
    CHECK(std::abs(off.h_at(t)[0](0) - beta) < 1e-10);
    CHECK(std::abs(off.v_at(t)[0](0) + beta) < 1e-10);
  }

  // Long finite horizons approach the same value at t = 0 (closed form:
  // the gap is beta * sech(T)).
  for (double T : {6.0, 9.0, 12.0}) {
    const double h0 = h_refined(model, T, 1e-3)[0](0);
    CHECK(std::abs(h0 - beta * (1.0 - sech(T))) < 1e-10);
  }
}

TEST_CASE("regime-distinct forcing converges under grid refinement") {
  LQModel model = testm::two_regime();
  model.signals.q_tail = {Vector::Constant(1, 0.5),
                          Vector::Constant(1, -0.2)};
  const double T = 2.0;

  const VecFamily ref = h_refined(model, T, 1e-2 / 16.0);
  const double e_coarse = vec_family_gap(h_refined(model, T, 1e-2), ref);
  const double e_fine = vec_family_gap(h_refined(model, T, 5e-3), ref);
  CHECK(e_fine < 1e-8);
  CHECK(std::log2(e_coarse / e_fine) >= 3.5);
}

TEST_CASE("finite-to-infinite offset gap decays in time-to-go") {
  const LQModel model = testm::scalar_constant(1.0);
  const double T = 6.0;
  const DRESolution dre = solve_dre(model, T, 1e-3);
  const OffsetSolution fin = solve_offset_finite(model, dre, model.signals);

  const ARESolution are = solve_are(model);
  InfiniteOffsetOptions opts;
  opts.T_max = T;
  const OffsetSolution inf = solve_offset_infinite(model, are, model.signals,
                                                   opts);

  const OffsetGapTable gaps = offset_gap(fin, inf);
  REQUIRE(gaps.fit_h.has_value());
  REQUIRE(gaps.fit_v.has_value());
  // Closed form: e_h(t) ~ sech(T - t) ~ 2 e^{-(T-t)}; rate 1 = delta/2.
  CHECK(gaps.fit_h->rate >= 0.5);
  CHECK(gaps.fit_h->rate == doctest::Approx(1.0).epsilon(0.05));
  CHECK(gaps.fit_h->r_squared >= 0.99);
  CHECK(gaps.fit_v->rate >= 0.5);
  CHECK(gaps.fit_v->r_squared >= 0.99);
  // Gaps increase toward the terminal time.
  CHECK(gaps.e_h.front() < gaps.e_h[gaps.e_h.size() / 2]);
}

TEST_CASE("jump compensation is the difference of regime offsets") {
  LQModel model = testm::two_regime();
  model.signals.q_tail = {Vector::Constant(1, 0.5),
                          Vector::Constant(1, -0.2)};
  const DRESolution dre = solve_dre(model, 2.0, 1e-2);
  const OffsetSolution off = solve_offset_finite(model, dre, model.signals);
  const Vector j01 = off.jump(0, 0, 1);
  CHECK(j01(0) == off.h[0][1](0) - off.h[0][0](0));
  CHECK(off.jump(0, 1, 0)(0) == -j01(0));
  CHECK(off.jump(0, 1, 1)(0) == 0.0);
}

TEST_CASE("offset preconditions") {
  // Breakpoint off the solver grid.
  const LQModel model = testm::scalar_compact(1.0, 0.55);
  const DRESolution dre = solve_dre(model, 2.0, 1e-1);
  CHECK_THROWS_AS(solve_offset_finite(model, dre, model.signals), ModelError);

  // Infinite window must reach past the last breakpoint.
  const LQModel compact = testm::scalar_compact(1.0, 5.0);
  const ARESolution are = solve_are(compact);
  InfiniteOffsetOptions opts;
  opts.T_max = 4.0;
  CHECK_THROWS_AS(solve_offset_infinite(compact, are, compact.signals, opts),
                  ModelError);
}
