#include "rslq/riccati.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rslq/stability.hpp"

namespace rslq {

namespace {

constexpr double kBlowUpNorm = 1e12;

Matrix solve_spd(const Matrix& R_tilde, const Matrix& rhs, int regime) {
  Eigen::LLT<Matrix> llt(symmetrize(R_tilde));
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "R + D'PD lost positive definiteness (regime " << regime + 1 << ")";
    throw SolverError(os.str());
  }
  return llt.solve(rhs);
}

}  // namespace

MatFamily dre_backward_rhs(const LQModel& model, const MatFamily& P) {
  const int m0 = model.m0();
  const MatFamily LP = generator_apply(model.gen, P);
  MatFamily out(static_cast<size_t>(m0));
  for (int i = 0; i < m0; ++i) {
    const RegimeData& rg = model.regime(i);
    const size_t si = static_cast<size_t>(i);
    const Matrix U =
        rg.B.transpose() * P[si] + rg.D.transpose() * P[si] * rg.C + rg.S;
    const Matrix R_tilde = rg.R + rg.D.transpose() * P[si] * rg.D;
    const Matrix RU = solve_spd(R_tilde, U, i);
    out[si] = LP[si] + P[si] * rg.A + rg.A.transpose() * P[si] +
              rg.C.transpose() * P[si] * rg.C + rg.Q - U.transpose() * RU;
  }
  return out;
}

DREStep dre_backward_step(const LQModel& model, const MatFamily& P, double ds) {
  DREStep st;
  const size_t m0 = P.size();
  st.k1 = dre_backward_rhs(model, P);
  MatFamily tmp(m0);
  for (size_t i = 0; i < m0; ++i) tmp[i] = P[i] + 0.5 * ds * st.k1[i];
  st.k2 = dre_backward_rhs(model, tmp);
  for (size_t i = 0; i < m0; ++i) tmp[i] = P[i] + 0.5 * ds * st.k2[i];
  st.k3 = dre_backward_rhs(model, tmp);
  for (size_t i = 0; i < m0; ++i) tmp[i] = P[i] + ds * st.k3[i];
  st.k4 = dre_backward_rhs(model, tmp);
  st.next.resize(m0);
  for (size_t i = 0; i < m0; ++i) {
    st.next[i] = symmetrize(P[i] + (ds / 6.0) * (st.k1[i] + 2.0 * st.k2[i] +
                                                 2.0 * st.k3[i] + st.k4[i]));
    if (!st.next[i].allFinite() || st.next[i].norm() > kBlowUpNorm) {
      throw SolverError("Riccati flow blew up (horizon or model not sane?)");
    }
  }
  return st;
}

namespace {

// Records the running regularity and semidefiniteness margins of a family.
void update_margins(const LQModel& model, const MatFamily& P, double t,
                    double* regularity_margin, double* psd_margin) {
  for (int i = 0; i < model.m0(); ++i) {
    const RegimeData& rg = model.regime(i);
    const size_t si = static_cast<size_t>(i);
    const double reg =
        min_eig_sym(rg.R + rg.D.transpose() * P[si] * rg.D);
    if (reg <= 0.0) {
      std::ostringstream os;
      os << "R + D'PD lost positive definiteness at t = " << t << ", regime "
         << i + 1;
      throw SolverError(os.str());
    }
    const double psd = min_eig_sym(P[si]);
    if (psd < -1e-9) {
      std::ostringstream os;
      os << "Riccati solution lost positive semidefiniteness at t = " << t
         << ", regime " << i + 1;
      throw SolverError(os.str());
    }
    *regularity_margin = std::min(*regularity_margin, reg);
    *psd_margin = std::min(*psd_margin, psd);
  }
}

}  // namespace

DRESolution solve_dre(const LQModel& model, double T, double step) {
  DRESolution sol;
  sol.T = T;
  sol.grid = TimeGrid(0.0, T, step);
  const int N = sol.grid.num_steps;
  sol.P.assign(static_cast<size_t>(N + 1),
               zero_mat_family(model.m0(), model.n, model.n));
  sol.regularity_margin = std::numeric_limits<double>::infinity();
  sol.psd_margin = std::numeric_limits<double>::infinity();

  // March in time-to-go s = T - t; the value at s lands on node N - j.
  MatFamily P = zero_mat_family(model.m0(), model.n, model.n);
  update_margins(model, P, T, &sol.regularity_margin, &sol.psd_margin);
  for (int j = 0; j < N; ++j) {
    P = dre_backward_step(model, P, step).next;
    const double t = sol.grid.node(N - j - 1);
    update_margins(model, P, t, &sol.regularity_margin, &sol.psd_margin);
    sol.P[static_cast<size_t>(N - j - 1)] = P;
  }
  return sol;
}

FeedbackGain feedback_gain(const LQModel& model, const MatFamily& P) {
  const int m0 = model.m0();
  FeedbackGain gain;
  gain.Theta.resize(static_cast<size_t>(m0));
  gain.A_cl.resize(static_cast<size_t>(m0));
  gain.C_cl.resize(static_cast<size_t>(m0));
  for (int i = 0; i < m0; ++i) {
    const RegimeData& rg = model.regime(i);
    const size_t si = static_cast<size_t>(i);
    const Matrix U =
        rg.B.transpose() * P[si] + rg.D.transpose() * P[si] * rg.C + rg.S;
    const Matrix R_tilde = rg.R + rg.D.transpose() * P[si] * rg.D;
    gain.Theta[si] = -solve_spd(R_tilde, U, i);
    gain.A_cl[si] = rg.A + rg.B * gain.Theta[si];
    gain.C_cl[si] = rg.C + rg.D * gain.Theta[si];
  }
  return gain;
}

double are_residual(const LQModel& model, const MatFamily& P) {
  const MatFamily rhs = dre_backward_rhs(model, P);
  double res = 0.0;
  for (const auto& M : rhs) res = std::max(res, M.norm());
  return res;
}

ARESolution solve_are(const LQModel& model, const AREOptions& opts) {
  if (!(opts.tol > 0.0) || !(opts.t_step > 0.0) || !(opts.t_max > 0.0)) {
    throw ModelError("stationary solve options must be positive");
  }
  const int steps_per_block =
      std::max(1, static_cast<int>(std::llround(opts.t_step / opts.step)));

  MatFamily P = zero_mat_family(model.m0(), model.n, model.n);
  MatFamily snapshot = P;
  double horizon = 0.0;
  double diff = std::numeric_limits<double>::infinity();
  bool converged = false;
  while (horizon < opts.t_max - 0.5 * opts.step) {
    for (int k = 0; k < steps_per_block; ++k) {
      P = dre_backward_step(model, P, opts.step).next;
    }
    horizon += steps_per_block * opts.step;
    diff = 0.0;
    for (int i = 0; i < model.m0(); ++i) {
      const size_t si = static_cast<size_t>(i);
      const Matrix inc = P[si] - snapshot[si];
      diff = std::max(diff, inc.norm());
      if (min_eig_sym(inc) < -1e-9) {
        throw SolverError(
            "horizon continuation lost monotone growth of the value family");
      }
    }
    snapshot = P;
    if (diff < opts.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    std::ostringstream os;
    os << "stationary Riccati continuation did not converge within t_max = "
       << opts.t_max << " (last increment " << diff
       << "); the model may not be stabilizable";
    throw SolverError(os.str());
  }

  ARESolution sol;
  sol.P = P;
  sol.horizon = horizon;
  sol.final_diff = diff;
  const FeedbackGain gain = feedback_gain(model, P);
  sol.Theta = gain.Theta;
  sol.residual = are_residual(model, P);
  if (sol.residual > opts.residual_tol) {
    std::ostringstream os;
    os << "stationary residual " << sol.residual
       << " exceeds the declared tolerance " << opts.residual_tol;
    throw SolverError(os.str());
  }
  sol.regularity_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < model.m0(); ++i) {
    const RegimeData& rg = model.regime(i);
    const size_t si = static_cast<size_t>(i);
    sol.regularity_margin =
        std::min(sol.regularity_margin,
                 min_eig_sym(rg.R + rg.D.transpose() * P[si] * rg.D));
  }
  const StabilityVerdict verdict = is_stabilizer(model, sol.Theta);
  sol.rho = verdict.rho;
  if (!verdict.stable) {
    std::ostringstream os;
    os << "converged stationary gain is not mean-square stabilizing (rho = "
       << verdict.rho << ")";
    throw SolverError(os.str());
  }
  return sol;
}

GapTable dre_are_gap(const LQModel& model, const DRESolution& dre,
                     const ARESolution& are, double window_lo,
                     double window_hi) {
  GapTable table;
  const int N = dre.grid.num_steps;
  table.t.reserve(static_cast<size_t>(N + 1));
  table.gap_P.reserve(static_cast<size_t>(N + 1));
  table.gap_Theta.reserve(static_cast<size_t>(N + 1));
  std::vector<std::pair<double, double>> series_P, series_Theta;
  for (int k = 0; k <= N; ++k) {
    const double t = dre.grid.node(k);
    const MatFamily& Pt = dre.P[static_cast<size_t>(k)];
    const FeedbackGain gain = feedback_gain(model, Pt);
    double gp = 0.0, gth = 0.0;
    for (int i = 0; i < model.m0(); ++i) {
      const size_t si = static_cast<size_t>(i);
      const Matrix dP = are.P[si] - Pt[si];
      if (min_eig_sym(dP) < -1e-9) {
        std::ostringstream os;
        os << "finite-horizon value exceeds the stationary one at t = " << t
           << ", regime " << i + 1;
        throw SolverError(os.str());
      }
      gp = std::max(gp, max_eig_sym(dP));  // spectral norm of a PSD matrix
      Eigen::JacobiSVD<Matrix> svd(are.Theta[si] - gain.Theta[si]);
      gth = std::max(gth, svd.singularValues()(0));
    }
    table.t.push_back(t);
    table.gap_P.push_back(gp);
    table.gap_Theta.push_back(gth);
    series_P.emplace_back(dre.T - t, gp);
    series_Theta.emplace_back(dre.T - t, gth);
  }
  table.fit_P = fit_exponential_rates(series_P, window_lo, window_hi);
  table.fit_Theta = fit_exponential_rates(series_Theta, window_lo, window_hi);
  return table;
}

}  // namespace rslq
