#pragma once

// Closed-loop laws u = Theta(t,i) x + v(t,i), exact moment ODEs of the closed
// loop, a joint difference system for comparing two laws under common noise,
// Monte Carlo simulation, and cost quadrature.
//
// With F = A + B Theta, f = B v + b, G = C + D Theta, g = D v + sigma, the
// occupation-weighted moments p(i) = P(chain = i), m1(i) = E[X 1_i],
// M2(i) = E[X X' 1_i] satisfy
//   dp/dt (i)  = sum_j l_ji p(j)
//   dm1/dt (i) = F m1(i) + f p(i) + sum_j l_ji m1(j)
//   dM2/dt (i) = F M2 + M2 F' + G M2 G' + f m1' + m1 f' + G m1 g' + g m1' G'
//                + g g' p + sum_j l_ji M2(j).

#include <cstdint>
#include <vector>

#include "rslq/model.hpp"
#include "rslq/offsets.hpp"
#include "rslq/riccati.hpp"

namespace rslq {

// Piecewise-constant vector of time: values[j] applies on
// [breakpoints[j], breakpoints[j+1]) and the last value persists. Empty
// means identically zero.
struct PiecewiseVec {
  std::vector<double> breakpoints;  // strictly increasing
  std::vector<Vector> values;       // same length as breakpoints

  bool empty() const { return breakpoints.empty(); }
  Vector at(double t, int dim) const;
};

// Feedback law tables. Time-varying tables are sampled on `grid`; the moment
// integrator requires grid.step to be half the integration step so every
// integration stage lands on a table node. The control offset v is
// reconstructed per stage from (P, h) and the signal values of the enclosing
// step, so signal jumps are sampled on the correct side:
//   v = -(R + D'PD)^{-1} [D'P sigma + B'h + r]  (+ v_extra).
struct FeedbackLaw {
  int n = 0, m = 0, m0 = 1;
  bool stationary_gain = false;    // Theta, P constant in time
  bool with_offsets = true;        // false: v = v_extra only (plain gain law)
  TimeGrid grid;                   // tabulation grid (single-entry tables if unused)
  std::vector<MatFamily> Theta;    // [node][regime] m x n
  std::vector<MatFamily> P;        // [node][regime] n x n
  std::vector<VecFamily> h;        // [node][regime] n
  std::vector<VecFamily> v;        // reference table (right-limit signals)
  PiecewiseVec v_extra;            // open-loop perturbation, regime-independent

  const MatFamily& Theta_node(int k) const {
    return Theta[stationary_gain ? 0 : static_cast<size_t>(k)];
  }
  const MatFamily& P_node(int k) const {
    return P[stationary_gain ? 0 : static_cast<size_t>(k)];
  }
  const VecFamily& h_node(int k) const {
    return h.size() == 1 ? h[0] : h[static_cast<size_t>(k)];
  }
};

// Law built from the finite-horizon solutions (tables on the dre grid).
FeedbackLaw finite_horizon_law(const LQModel& model, const DRESolution& dre,
                               const OffsetSolution& offsets);

// Stationary gain with the infinite-horizon offset table.
FeedbackLaw infinite_horizon_law(const LQModel& model, const ARESolution& are,
                                 const OffsetSolution& offsets);

// Pure gain law u = Theta x (time-invariant, no offsets).
FeedbackLaw plain_gain_law(const LQModel& model, const MatFamily& Theta);

struct MomentTrajectory {
  TimeGrid grid;
  std::vector<Vector> p;        // [node](m0)
  std::vector<VecFamily> m1;    // [node][regime] n
  std::vector<MatFamily> M2;    // [node][regime] n x n, symmetric PSD
  double m2_min_eig = 0.0;      // smallest M2 eigenvalue seen over all nodes

  double abs2(int node) const {  // E |X|^2
    double acc = 0.0;
    for (const auto& M : M2[static_cast<size_t>(node)]) acc += M.trace();
    return acc;
  }
  Vector mean(int node) const {  // E X
    Vector acc = Vector::Zero(m1[static_cast<size_t>(node)][0].size());
    for (const auto& x : m1[static_cast<size_t>(node)]) acc += x;
    return acc;
  }
};

// Exact moments of the closed loop from the deterministic pair (x0, i0).
// Requires signal breakpoints on the grid and, for time-varying laws, the
// law tabulated at half the grid step.
MomentTrajectory closed_loop_moments(const LQModel& model,
                                     const FeedbackLaw& law,
                                     const SignalSet& signals, const Vector& x0,
                                     int i0, const TimeGrid& grid);

// Joint moments of two closed loops driven by the same Brownian motion and
// chain. Integrated in the stacked basis Z = (X_a, Xhat) with
// Xhat = X_b - X_a, which keeps the difference channels well conditioned when
// they are many orders of magnitude below the states themselves; the blocks
// of the (X_a, X_b) stacking are recoverable from the accessors.
struct JointMomentTrajectory {
  TimeGrid grid;
  int n = 0;                    // dimension of one state
  std::vector<Vector> p;        // [node](m0)
  std::vector<VecFamily> m1;    // [node][regime] 2n, basis (X_a, Xhat)
  std::vector<MatFamily> M2;    // [node][regime] 2n x 2n, same basis
  std::vector<double> xhat_sq;  // E |X_b - X_a|^2 per node
  std::vector<double> uhat_sq;  // E |u_b - u_a|^2 per node

  MomentTrajectory marginal_a() const;
  MomentTrajectory marginal_b() const;
};

JointMomentTrajectory joint_difference_moments(
    const LQModel& model, const FeedbackLaw& law_a, const FeedbackLaw& law_b,
    const SignalSet& signals, const Vector& x_a, const Vector& x_b, int i0,
    const TimeGrid& grid);

// Monte Carlo estimate of the same moments: Euler-Maruyama between chain
// jumps, jump times sampled exactly from the exponential holding clocks and
// the state step split at each jump. Each path derives its own generator
// from (seed, path index); partial sums are merged in a fixed block order so
// the result does not depend on the number of worker threads.
struct MCResult {
  TimeGrid grid;
  std::int64_t paths = 0;
  std::uint64_t seed = 0;
  std::vector<Vector> p_hat;        // [node](m0)
  std::vector<Vector> p_se;
  std::vector<VecFamily> m1_hat;    // [node][regime]
  std::vector<VecFamily> m1_se;
  std::vector<MatFamily> M2_hat;
  std::vector<MatFamily> M2_se;
  std::vector<double> abs2_hat;     // E |X|^2
  std::vector<double> abs2_se;
};

MCResult monte_carlo_simulate(const LQModel& model, const FeedbackLaw& law,
                              const SignalSet& signals, const Vector& x0,
                              int i0, const TimeGrid& grid, std::int64_t paths,
                              std::uint64_t seed, int workers = 0);

// Expected running cost of a closed-loop trajectory, integrated with the
// trapezoid rule per step (signal values taken from the open step, so jumps
// at breakpoints are handled exactly).
struct CostBreakdown {
  double J = 0.0;
  std::vector<double> t_left, t_right, segment;  // per-step quadrature table

  // Instantaneous expected cost rate at the last node (right-limit signals).
  double terminal_rate = 0.0;
};

CostBreakdown evaluate_cost(const LQModel& model, const FeedbackLaw& law,
                            const SignalSet& signals,
                            const MomentTrajectory& traj);

}  // namespace rslq
