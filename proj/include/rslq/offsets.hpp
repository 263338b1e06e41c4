#pragma once

// Offset (inhomogeneous) backward equations induced by the signals. With
// regime-modulated deterministic signals the martingale integrand vanishes
// and the backward equation reduces to coupled ODEs for h(t, i):
//   d/dt h + (L h)(i) + A_cl(t,i)' h(i) + phi(t,i) = 0,  terminal value 0,
//   phi(t,i) = P(t,i) b(t,i) + C_cl(t,i)' P(t,i) sigma(t,i)
//              + Theta(t,i)' r(t,i) + q(t,i),
// and the open-loop control offset
//   v(t,i) = -(R + D'PD)^{-1} [D'P sigma + B'h + r](t,i).

#include <optional>
#include <vector>

#include "rslq/expfit.hpp"
#include "rslq/model.hpp"
#include "rslq/riccati.hpp"

namespace rslq {

struct OffsetSolution {
  enum class Kind { finite, infinite };
  Kind kind = Kind::finite;
  TimeGrid grid;
  std::vector<VecFamily> h;    // [node][regime], n-vectors
  std::vector<VecFamily> v;    // [node][regime], m-vectors
  std::vector<VecFamily> phi;  // [node][regime], forcing at the nodes

  // Infinite kind only: stationary tail value and the recorded padding data.
  VecFamily h_tail;
  double tail_gap = 0.0;  // ||h(T_max) - h_tail|| over regimes
  double t_pad = 0.0;     // padding length used
  double delta = 0.0;     // certified decay rate backing the padding

  // Jump compensation between regimes: h(t, to) - h(t, from).
  Vector jump(int node, int from, int to) const {
    const auto k = static_cast<size_t>(node);
    return h[k][static_cast<size_t>(to)] - h[k][static_cast<size_t>(from)];
  }

  const VecFamily& h_at(double t) const {
    return h[static_cast<size_t>(grid.index_of(t))];
  }
  const VecFamily& v_at(double t) const {
    return v[static_cast<size_t>(grid.index_of(t))];
  }
};

// Finite-horizon offsets on the grid of `dre`. The Riccati flow is
// re-advanced alongside h so all integration stages see consistent values;
// the stored nodes of `dre` are cross-checked against the re-advanced flow.
OffsetSolution solve_offset_finite(const LQModel& model, const DRESolution& dre,
                                   const SignalSet& signals);

struct InfiniteOffsetOptions {
  double T_max = 20.0;   // window on which the solution is reported
  double tol = 1e-10;    // padding target accuracy
  double step = 1e-3;    // node spacing
  double max_pad = 1e4;  // hard cap on the padding length
};

// Infinite-horizon offsets via a padded backward solve: integration starts at
// T_max + T_pad with zero value, T_pad = (8/delta) log(1/tol) where delta is
// the certified decay rate of the stationary loop. For constant-tail signals
// the result at T_max is checked against the stationary tail value h_bar
// solving (L h)(i) + A_cl(i)' h(i) + phi_tail(i) = 0.
OffsetSolution solve_offset_infinite(const LQModel& model,
                                     const ARESolution& are,
                                     const SignalSet& signals,
                                     const InfiniteOffsetOptions& opts = {});

struct OffsetGapTable {
  std::vector<double> t;
  std::vector<double> e_h;  // max over regimes of |h_T(t,i) - h_inf(t,i)|
  std::vector<double> e_v;  // same for v
  std::optional<ExpFit> fit_h;  // fitted against T - t
  std::optional<ExpFit> fit_v;
};

// Node-wise distance between finite and infinite-horizon offsets, fitted
// against time-to-go over the value window.
OffsetGapTable offset_gap(const OffsetSolution& fin, const OffsetSolution& inf,
                          double window_lo = 1e-10, double window_hi = 1e-2);

}  // namespace rslq
