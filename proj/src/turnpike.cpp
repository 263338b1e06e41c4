#include "rslq/turnpike.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace rslq {

namespace {

// One-sided exponentially discounted running integral
//   out[k] = int_0^{t_k} e^{-rate (t_k - s)} f(s) ds
// by the weighted trapezoid recursion (exact for piecewise-linear f).
std::vector<double> discounted_integral(const std::vector<double>& f,
                                        double step, double rate) {
  std::vector<double> out(f.size(), 0.0);
  const double d = std::exp(-rate * step);
  for (size_t k = 0; k + 1 < f.size(); ++k) {
    out[k + 1] = d * out[k] + 0.5 * step * (d * f[k] + f[k + 1]);
  }
  return out;
}

double trapezoid(const std::vector<double>& f, double step) {
  double acc = 0.0;
  for (size_t k = 0; k + 1 < f.size(); ++k) acc += 0.5 * step * (f[k] + f[k + 1]);
  return acc;
}

}  // namespace

std::vector<double> forcing_convolution(const std::vector<double>& xi,
                                        const TimeGrid& grid, double rate,
                                        double tail_value) {
  if (rate <= 0.0) throw ModelError("convolution rate must be positive");
  if (xi.size() != static_cast<size_t>(grid.num_nodes())) {
    throw ModelError("profile length does not match the grid");
  }
  const size_t N = xi.size();
  const double h = grid.step;
  const double d = std::exp(-rate * h);
  std::vector<double> left(N, 0.0), right(N, 0.0);
  for (size_t k = 0; k + 1 < N; ++k) {
    left[k + 1] = d * left[k] + 0.5 * h * (d * xi[k] + xi[k + 1]);
  }
  right[N - 1] = tail_value / rate;
  for (size_t k = N - 1; k > 0; --k) {
    right[k - 1] = d * right[k] + 0.5 * h * (xi[k - 1] + d * xi[k]);
  }
  std::vector<double> out(N);
  for (size_t k = 0; k < N; ++k) out[k] = left[k] + right[k];
  return out;
}

TurnpikeReport run_turnpike_experiment(const LQModel& model,
                                       const SignalSet& signals,
                                       const Vector& x, const Vector& x_inf,
                                       int i0,
                                       const std::vector<double>& T_list,
                                       double grid_step) {
  if (T_list.empty()) throw ModelError("horizon list is empty");
  if (!std::is_sorted(T_list.begin(), T_list.end()) ||
      std::adjacent_find(T_list.begin(), T_list.end()) != T_list.end()) {
    throw ModelError("horizon list must be strictly increasing");
  }
  if (grid_step <= 0.0) throw ModelError("grid step must be positive");
  if (x.size() != model.n || x_inf.size() != model.n) {
    throw ModelError("initial states have wrong size");
  }

  TurnpikeReport report;
  report.horizons = T_list;
  report.grid_step = grid_step;
  report.x = x;
  report.x_inf = x_inf;
  report.i0 = i0;

  const double half = 0.5 * grid_step;

  // Stationary side, shared by all horizons. The stationary solve runs at
  // the same step as the horizon solves so both law tables are points of one
  // discrete flow: their difference then decays to machine zero instead of
  // flooring at the O(step^4) mismatch of two different discretizations.
  AREOptions are_opts;
  are_opts.step = half;
  const ARESolution are = solve_are(model, are_opts);
  const DissipativityCertificate cert = dissipativity_certificate(model, are.Theta);
  report.delta_cert = cert.delta;

  InfiniteOffsetOptions off_opts;
  off_opts.T_max = T_list.back();
  off_opts.step = half;
  const OffsetSolution off_inf = solve_offset_infinite(model, are, signals, off_opts);
  const FeedbackLaw law_inf = infinite_horizon_law(model, are, off_inf);

  for (double T : T_list) {
    try {
      const DRESolution dre = solve_dre(model, T, half);
      const OffsetSolution off_fin = solve_offset_finite(model, dre, signals);
      const FeedbackLaw law_T = finite_horizon_law(model, dre, off_fin);

      const TimeGrid mg(0.0, T, grid_step);
      const JointMomentTrajectory joint = joint_difference_moments(
          model, law_T, law_inf, signals, x, x_inf, i0, mg);

      HorizonErrors he;
      he.T = T;
      he.grid = mg;
      he.xhat_sq = joint.xhat_sq;
      he.uhat_sq = joint.uhat_sq;
      const int nodes = mg.num_nodes();
      he.gap_h.resize(static_cast<size_t>(nodes));
      he.gap_v.resize(static_cast<size_t>(nodes));
      for (int k = 0; k < nodes; ++k) {
        // Moment node k sits at offset-table node 2k (half-step tables).
        const size_t fk = static_cast<size_t>(2 * k);
        double gh = 0.0, gv = 0.0;
        for (int i = 0; i < model.m0(); ++i) {
          const size_t si = static_cast<size_t>(i);
          gh = std::max(gh, (off_fin.h[fk][si] - off_inf.h[fk][si]).norm());
          gv = std::max(gv, (off_fin.v[fk][si] - off_inf.v[fk][si]).norm());
        }
        he.gap_h[static_cast<size_t>(k)] = gh;
        he.gap_v[static_cast<size_t>(k)] = gv;
      }
      const int k_mid = static_cast<int>(std::llround(0.5 * T / grid_step));
      he.midpoint = he.xhat_sq[static_cast<size_t>(
          std::min(std::max(k_mid, 0), nodes - 1))];
      {
        std::vector<double> total(he.xhat_sq.size());
        for (size_t k = 0; k < total.size(); ++k) {
          total[k] = he.xhat_sq[k] + he.uhat_sq[k];
        }
        he.integrated_gap = trapezoid(total, grid_step);
      }
      he.J = evaluate_cost(model, law_T, signals, joint.marginal_a()).J;
      report.per_horizon.push_back(std::move(he));
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "horizon T = " << T << " failed: " << e.what();
      report.error = os.str();
      break;
    }
  }

  for (const HorizonErrors& he : report.per_horizon) {
    report.midpoint_series.push_back(he.midpoint);
  }

  // Fit log E|Xhat(T/2)|^2 = log K - beta T over the completed horizons.
  {
    std::vector<std::pair<double, double>> pts;
    for (const HorizonErrors& he : report.per_horizon) {
      pts.emplace_back(he.T, he.midpoint);
    }
    report.fitted = fit_exponential_rates(pts, 1e-280,
                                          std::numeric_limits<double>::infinity());
  }

  report.midpoint_monotone = true;
  for (size_t k = 0; k + 1 < report.midpoint_series.size(); ++k) {
    if (report.midpoint_series[k] < 1e-4 &&
        report.midpoint_series[k + 1] > 1.05 * report.midpoint_series[k]) {
      report.midpoint_monotone = false;
    }
  }

  // Envelope comparison with the fitted constant (left side includes the
  // discounted control gap; see HorizonErrors).
  const double K_hat = report.fitted ? report.fitted->K : 0.0;
  const double delta = report.delta_cert;
  const double x_gap_sq = (x - x_inf).squaredNorm();
  const double x_sq = x.squaredNorm();
  const double xi_tail = xi_tail_value(signals, model.gen);
  report.min_bound_pass_rate = report.per_horizon.empty() ? 0.0 : 1.0;
  for (HorizonErrors& he : report.per_horizon) {
    const std::vector<double> xi = xi_profile(signals, model.gen, i0, he.grid);
    const std::vector<double> h_xi =
        forcing_convolution(xi, he.grid, 0.25 * delta, xi_tail);
    const std::vector<double> u_conv =
        discounted_integral(he.uhat_sq, he.grid.step, 0.25 * delta);
    const int nodes = he.grid.num_nodes();
    he.bound_lhs.resize(static_cast<size_t>(nodes));
    he.bound_rhs.resize(static_cast<size_t>(nodes));
    he.bound_ok.resize(static_cast<size_t>(nodes));
    int ok_count = 0;
    for (int k = 0; k < nodes; ++k) {
      const double t = he.grid.node(k);
      const size_t sk = static_cast<size_t>(k);
      const double lhs = he.xhat_sq[sk] + u_conv[sk];
      const double rhs =
          K_hat * (std::exp(-0.25 * delta * t) * x_gap_sq +
                   std::exp(-0.125 * delta * (he.T - t)) *
                       (std::exp(-0.25 * delta * t) * x_sq + h_xi[sk]));
      he.bound_lhs[sk] = lhs;
      he.bound_rhs[sk] = rhs;
      const bool ok = lhs <= rhs * (1.0 + 1e-12) + 1e-300;
      he.bound_ok[sk] = ok ? 1 : 0;
      if (ok) ++ok_count;
    }
    he.bound_pass_rate = static_cast<double>(ok_count) / nodes;
    report.min_bound_pass_rate =
        std::min(report.min_bound_pass_rate, he.bound_pass_rate);
  }

  for (const HorizonErrors& he : report.per_horizon) {
    report.ergodic.T.push_back(he.T);
    report.ergodic.J_over_T.push_back(he.J / he.T);
  }
  const size_t nh = report.ergodic.T.size();
  if (nh >= 2) {
    const double J1 = report.ergodic.J_over_T[nh - 2] * report.ergodic.T[nh - 2];
    const double J2 = report.ergodic.J_over_T[nh - 1] * report.ergodic.T[nh - 1];
    report.ergodic.limit =
        (J2 - J1) / (report.ergodic.T[nh - 1] - report.ergodic.T[nh - 2]);
  } else if (nh == 1) {
    report.ergodic.limit = report.ergodic.J_over_T[0];
  }

  return report;
}

CaseVerdict check_integrable_case(const TurnpikeReport& report,
                                  const SignalSet& signals) {
  CaseVerdict v;
  for (const HorizonErrors& he : report.per_horizon) {
    v.T.push_back(he.T);
    v.values.push_back(he.integrated_gap);
  }
  if (!signals.tail_is_zero()) {
    v.detail = "signals keep a nonzero tail; integrated gap need not vanish";
    return v;
  }
  if (v.values.size() < 2) {
    v.detail = "need at least two completed horizons";
    return v;
  }
  const double first = v.values.front();
  const double last = v.values.back();
  std::ostringstream os;
  if (first <= 1e-300) {
    v.pass = last <= 1e-300;
    os << "integrated gap identically zero";
  } else {
    v.pass = last <= 0.05 * first;
    os << "integrated gap fell from " << first << " to " << last << " ("
       << 100.0 * last / first << "% of the initial value)";
  }
  v.detail = os.str();
  return v;
}

CaseVerdict check_ergodic_case(const LQModel& model, const SignalSet& signals,
                               const Vector& x, int i0,
                               const std::vector<double>& T_list,
                               double grid_step) {
  CaseVerdict v;
  if (T_list.size() < 2 || !std::is_sorted(T_list.begin(), T_list.end())) {
    v.detail = "need at least two increasing horizons";
    return v;
  }

  const double half = 0.5 * grid_step;
  AREOptions are_opts;
  are_opts.step = half;
  const ARESolution are = solve_are(model, are_opts);
  InfiniteOffsetOptions off_opts;
  off_opts.T_max = T_list.back();
  off_opts.step = half;
  const OffsetSolution off_inf = solve_offset_infinite(model, are, signals, off_opts);
  const FeedbackLaw law = infinite_horizon_law(model, are, off_inf);

  std::vector<double> J_over_T;
  for (double T : T_list) {
    const TimeGrid mg(0.0, T, grid_step);
    const MomentTrajectory traj =
        closed_loop_moments(model, law, signals, x, i0, mg);
    J_over_T.push_back(evaluate_cost(model, law, signals, traj).J / T);
  }

  const size_t nh = T_list.size();
  const double J1 = J_over_T[nh - 2] * T_list[nh - 2];
  const double J2 = J_over_T[nh - 1] * T_list[nh - 1];
  v.limit = (J2 - J1) / (T_list[nh - 1] - T_list[nh - 2]);

  v.T = T_list;
  v.pass = true;
  std::ostringstream os;
  for (size_t k = 0; k < nh; ++k) {
    v.values.push_back(std::abs(J_over_T[k] - v.limit));
    if (k > 0 &&
        v.values[k] > v.values[k - 1] + 1e-10 * (1.0 + std::abs(v.limit))) {
      v.pass = false;
    }
  }
  os << "window averages approach " << v.limit;
  if (!v.pass) os << " non-monotonically";
  v.detail = os.str();
  return v;
}

}  // namespace rslq
