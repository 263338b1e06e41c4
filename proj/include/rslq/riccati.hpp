#pragma once

// Coupled Riccati equations for the regime-switching LQ problem.
//
// Finite horizon (terminal value zero, written in time-to-go s = T - t):
//   dP/ds (i) = (L P)(i) + P A + A'P + C'P C + Q
//               - (B'P + D'P C + S)' (R + D'P D)^{-1} (B'P + D'P C + S)
// where L is the chain generator acting on the regime index. The stationary
// equation sets the same right-hand side to zero.

#include <optional>
#include <vector>

#include "rslq/expfit.hpp"
#include "rslq/model.hpp"

namespace rslq {

struct DRESolution {
  double T = 0.0;
  TimeGrid grid;                 // on [0, T]
  std::vector<MatFamily> P;      // P[k][i] at grid.node(k), symmetric PSD
  double regularity_margin = 0.0;  // min over nodes/regimes of eig_min(R + D'PD)
  double psd_margin = 0.0;         // min over nodes/regimes of eig_min(P)

  const MatFamily& at_time(double t) const {
    return P[static_cast<size_t>(grid.index_of(t))];
  }
};

struct ARESolution {
  MatFamily P;       // stationary solution, per regime
  MatFamily Theta;   // stationary feedback gain, per regime
  double residual = 0.0;           // max Frobenius residual over regimes
  double regularity_margin = 0.0;  // min eig of R + D'PD over regimes
  double rho = 0.0;      // spectral abscissa of the closed-loop second-moment
                         // generator (negative = mean-square stable)
  double horizon = 0.0;  // continuation length at convergence
  double final_diff = 0.0;  // last successive-horizon difference (Frobenius)
};

struct FeedbackGain {
  MatFamily Theta;  // m x n per regime
  MatFamily A_cl;   // A + B Theta
  MatFamily C_cl;   // C + D Theta
};

// Stage data of one backward step (step `ds` in time-to-go). Exposed so that
// equations coupled to the Riccati flow can advance with identical samples.
struct DREStep {
  MatFamily k1, k2, k3, k4;  // stage slopes dP/ds
  MatFamily next;            // symmetrized end-of-step value
};

// Right-hand side of the backward flow at the family P.
MatFamily dre_backward_rhs(const LQModel& model, const MatFamily& P);

DREStep dre_backward_step(const LQModel& model, const MatFamily& P, double ds);

// Integrates the backward flow from the zero terminal value over [0, T] with
// the given node spacing. Throws SolverError on blow-up, loss of regularity
// of R + D'PD (reported with the offending time and regime), or loss of
// positive semidefiniteness.
DRESolution solve_dre(const LQModel& model, double T, double step);

// Feedback gain induced by a per-regime value family P:
//   Theta(i) = -(R + D'PD)^{-1} (B'P + D'P C + S).
FeedbackGain feedback_gain(const LQModel& model, const MatFamily& P);

// Max Frobenius norm over regimes of the stationary equation residual at P.
double are_residual(const LQModel& model, const MatFamily& P);

// Stationary solution by horizon continuation: the backward flow is extended
// in blocks of `t_step` until the start-value family moves by less than `tol`
// (max Frobenius norm over regimes) across one block. Monotone growth is
// asserted along the way (eigenvalues of each increment >= -1e-9). Throws
// SolverError when `t_max` is reached without convergence, when the flow
// blows up, or when the converged gain fails the mean-square stability check.
struct AREOptions {
  double tol = 1e-10;
  double t_step = 5.0;
  double t_max = 500.0;
  double step = 1e-3;          // integration node spacing
  double residual_tol = 1e-6;  // declared bound on the stationary residual
};
ARESolution solve_are(const LQModel& model, const AREOptions& opts = {});

// Per-node distance between the finite-horizon solution and the stationary
// one, with an exponential fit of the gap against time-to-go.
struct GapTable {
  std::vector<double> t;           // grid nodes
  std::vector<double> gap_P;       // max over regimes of ||P_inf - P_T(t)||_2
  std::vector<double> gap_Theta;   // same for the gains
  std::optional<ExpFit> fit_P;     // fitted against T - t
  std::optional<ExpFit> fit_Theta;
};

// Asserts P_inf - P_T(t,i) >= -1e-9 (in the semidefinite order) at every
// node and fits the decay of the gaps over the value window
// [window_lo, window_hi].
GapTable dre_are_gap(const LQModel& model, const DRESolution& dre,
                     const ARESolution& are, double window_lo = 1e-10,
                     double window_hi = 1e-2);

}  // namespace rslq
