#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rslq/expfit.hpp"
#include "rslq/moments.hpp"
#include "rslq/offsets.hpp"
#include "rslq/riccati.hpp"
#include "rslq/stability.hpp"

namespace rslq {

// Exponentially weighted convolution h(t_k) = int_0^inf e^{-rate |t_k - s|}
// xi(s) ds, with xi given at the grid nodes, extended past the grid by the
// constant `tail_value` (pass 0 for signals that vanish beyond the grid).
// Trapezoid inside the grid, closed form for the tail.
std::vector<double> forcing_convolution(const std::vector<double>& xi,
                                        const TimeGrid& grid, double rate,
                                        double tail_value);

// Everything measured for a single horizon T against the horizon-free law.
struct HorizonErrors {
  double T = 0.0;
  TimeGrid grid;  // node spacing used for the moment comparison
  std::vector<double> xhat_sq;  // E|X_T(t) - X_inf(t)|^2 per node
  std::vector<double> uhat_sq;  // E|u_T(t) - u_inf(t)|^2 per node
  std::vector<double> gap_h;    // max-regime |h_T(t) - h_inf(t)| per node
  std::vector<double> gap_v;    // max-regime |v_T(t) - v_inf(t)| per node
  // Two-sided comparison filled in after the global fit: the left side is
  // E|Xhat(t)|^2 + int_0^t e^{-(delta/4)(t-s)} E|uhat(s)|^2 ds, the right
  // side is the fitted envelope
  //   K [ e^{-(delta/4) t} |x - x_inf|^2
  //       + e^{-(delta/8)(T-t)} ( e^{-(delta/4) t} |x|^2 + h_xi(t) ) ].
  std::vector<double> bound_lhs;
  std::vector<double> bound_rhs;
  std::vector<char> bound_ok;     // lhs <= rhs per node
  double bound_pass_rate = 0.0;   // fraction of nodes with bound_ok
  double midpoint = 0.0;          // E|Xhat(T/2)|^2
  double integrated_gap = 0.0;    // trapezoid of xhat_sq + uhat_sq over [0,T]
  double J = 0.0;                 // cost of the horizon-T law from x
};

struct ErgodicTable {
  std::vector<double> T;
  std::vector<double> J_over_T;
  double limit = 0.0;  // secant extrapolation over the two largest horizons
};

struct TurnpikeReport {
  std::vector<double> horizons;
  double grid_step = 0.0;
  double delta_cert = 0.0;  // dissipativity rate of the stationary loop
  Vector x, x_inf;
  int i0 = 0;
  std::vector<HorizonErrors> per_horizon;  // completed horizons, in order
  std::vector<double> midpoint_series;     // E|Xhat(T/2)|^2 per horizon
  std::optional<ExpFit> fitted;            // K-hat, beta-hat of the midpoints
  // Midpoint series decreasing (ratio <= 1.05) once values drop below 1e-4.
  bool midpoint_monotone = true;
  double min_bound_pass_rate = 0.0;  // worst per-horizon bound pass rate
  ErgodicTable ergodic;              // J/T of the horizon-T laws
  // Set when a horizon pipeline failed; completed horizons are still present.
  std::optional<std::string> error;
};

// Full pipeline: one stationary solve (gain, certificate, offsets), then per
// horizon T a Riccati/offset solve and a joint moment integration of the two
// closed loops started at (x, x_inf). Requires every T/2 and T to be grid
// multiples. `grid_step` is the moment-comparison spacing; the backward
// solves run at grid_step/2 so law tables land on the integrator stages.
TurnpikeReport run_turnpike_experiment(const LQModel& model,
                                       const SignalSet& signals,
                                       const Vector& x, const Vector& x_inf,
                                       int i0,
                                       const std::vector<double>& T_list,
                                       double grid_step);

struct CaseVerdict {
  bool pass = false;
  std::vector<double> T;
  std::vector<double> values;  // per-horizon diagnostic (see detail)
  double limit = 0.0;          // ergodic limit estimate when applicable
  std::string detail;
};

// Vanishing integrated gap for signals with zero tail: I(T) = int_0^T
// (E|Xhat|^2 + E|uhat|^2) dt must fall to <= 5% of its value at the first
// horizon (identically-zero series pass trivially).
CaseVerdict check_integrable_case(const TurnpikeReport& report,
                                  const SignalSet& signals);

// Ergodic cost of the horizon-free law on growing windows: J(T)/T per
// horizon, limit estimated from the secant of the two largest horizons,
// |J/T - limit| decreasing across the list.
CaseVerdict check_ergodic_case(const LQModel& model, const SignalSet& signals,
                               const Vector& x, int i0,
                               const std::vector<double>& T_list,
                               double grid_step);

}  // namespace rslq
