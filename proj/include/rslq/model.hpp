#pragma once

// Problem data for linear-quadratic stochastic control with regime switching.
//
// The state follows
//   dX = [A(i) X + B(i) u + b(t,i)] dt + [C(i) X + D(i) u + sigma(t,i)] dW
// where i is a finite-state Markov chain with generator matrix lambda, and
// the running cost is
//   1/2 <[[Q, S'],[S, R]] (x,u), (x,u)> + <q(t,i), x> + <r(t,i), u>.
// Signals b, sigma, q, r are piecewise-constant in time per regime.

#include <optional>
#include <string>
#include <vector>

#include "rslq/family.hpp"

namespace rslq {

// Generator of a continuous-time Markov chain: off-diagonal entries are jump
// rates (>= 0), rows sum to zero.
struct Generator {
  int m0 = 1;             // number of chain states
  Matrix lambda;          // m0 x m0

  double rate(int from, int to) const { return lambda(from, to); }
};

// Uniform time grid on [t0, t1] with node spacing `step`.
struct TimeGrid {
  double t0 = 0.0;
  double t1 = 0.0;
  double step = 0.0;
  int num_steps = 0;      // number of intervals; nodes = num_steps + 1

  TimeGrid() = default;
  TimeGrid(double t0_, double t1_, double step_);

  int num_nodes() const { return num_steps + 1; }
  double node(int k) const {
    return (k == num_steps) ? t1 : t0 + step * static_cast<double>(k);
  }
  // Index of the node equal to t (throws if t is not a node).
  int index_of(double t) const;
};

// Piecewise-constant signal set. On [breakpoints[j], breakpoints[j+1]) the
// value is values[j]; past the last breakpoint the tail value applies (zero
// when no tail is declared). With no breakpoints the tail (or zero) applies
// everywhere. Before the first breakpoint the value is zero.
struct SignalSet {
  int n = 0;   // state dimension
  int m = 0;   // control dimension
  int m0 = 1;  // number of regimes

  std::vector<double> breakpoints;             // strictly increasing
  // values[regime][interval]; intervals between consecutive breakpoints.
  std::vector<std::vector<Vector>> b, sigma, q;  // n-vectors
  std::vector<std::vector<Vector>> r;            // m-vectors
  bool has_tail = false;
  VecFamily b_tail, sigma_tail, q_tail, r_tail;  // per regime

  static SignalSet zero(int n, int m, int m0);
  bool is_zero() const;
  // True when the signal is identically zero past the last breakpoint.
  bool tail_is_zero() const;

  Vector b_at(double t, int regime) const;
  Vector sigma_at(double t, int regime) const;
  Vector q_at(double t, int regime) const;
  Vector r_at(double t, int regime) const;

  // Throws unless every breakpoint coincides with a node of `grid` (the
  // solvers sample signals per step and need jumps aligned with steps).
  void require_aligned(const TimeGrid& grid) const;
};

// Per-regime coefficient matrices of one regime.
struct RegimeData {
  Matrix A;  // n x n
  Matrix B;  // n x m
  Matrix C;  // n x n
  Matrix D;  // n x m
  Matrix Q;  // n x n, symmetric positive definite
  Matrix S;  // m x n
  Matrix R;  // m x m, symmetric positive definite
};

struct LQModel {
  int n = 0;
  int m = 0;
  Generator gen;
  std::vector<RegimeData> regimes;  // size gen.m0
  SignalSet signals;                // dimensions n, m, gen.m0

  int m0() const { return gen.m0; }
  const RegimeData& regime(int i) const { return regimes[static_cast<size_t>(i)]; }
};

struct ValidationItem {
  std::string name;
  bool pass = false;
  double margin = 0.0;   // signed numerical margin backing the verdict
  std::string message;
};

struct ValidationReport {
  bool pass = false;
  std::vector<ValidationItem> items;
  std::vector<std::string> warnings;
};

// Checks the standing hypotheses: generator structure, symmetry and positive
// definiteness of Q and R, positive definiteness of Q - S' R^{-1} S, and
// finiteness of the signal values. Dimension mismatches throw ModelError.
ValidationReport validate_model(const LQModel& model);

// Generator applied to a regime-indexed family:
//   (L F)(i) = sum_{j != i} lambda_ij (F(j) - F(i)).
MatFamily generator_apply(const Generator& gen, const MatFamily& F);
VecFamily generator_apply(const Generator& gen, const VecFamily& F);

// Marginal law of the chain started at `i0`, obtained by integrating the
// forward equation  dp/dt = lambda' p  on the grid (classical 4th-order
// one-step scheme). Rows sum to one; entries clamped to [0, 1].
std::vector<Vector> chain_law(const Generator& gen, int i0,
                              const TimeGrid& grid);

// Stationary distribution pi of the chain (pi' lambda = 0, sum pi = 1).
Vector stationary_distribution(const Generator& gen);

// Chain-averaged squared signal size
//   xi(t) = sum_i p(t,i) (|b(t,i)|^2 + |sigma(t,i)|^2 + |q(t,i)|^2 + |r(t,i)|^2)
// evaluated at the grid nodes.
std::vector<double> xi_profile(const SignalSet& signals, const Generator& gen,
                               int i0, const TimeGrid& grid);

// Value of xi under the stationary chain law and tail signal values.
double xi_tail_value(const SignalSet& signals, const Generator& gen);

}  // namespace rslq
