#include "rslq/offsets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rslq/stability.hpp"

namespace rslq {

namespace {

// phi(t,i) for given value family, gain and signal values at one time.
VecFamily forcing(const LQModel& model, const MatFamily& P,
                  const FeedbackGain& gain, const SignalSet& signals,
                  double t_signal) {
  VecFamily phi(static_cast<size_t>(model.m0()));
  for (int i = 0; i < model.m0(); ++i) {
    const RegimeData& rg = model.regime(i);
    const size_t si = static_cast<size_t>(i);
    phi[si] = P[si] * signals.b_at(t_signal, i) +
              gain.C_cl[si].transpose() * P[si] * signals.sigma_at(t_signal, i) +
              gain.Theta[si].transpose() * signals.r_at(t_signal, i) +
              signals.q_at(t_signal, i);
  }
  return phi;
}

// dh/ds in time-to-go: (L h)(i) + A_cl' h(i) + phi(i).
VecFamily offset_rhs(const Generator& gen, const MatFamily& A_cl,
                     const VecFamily& h, const VecFamily& phi) {
  VecFamily out = generator_apply(gen, h);
  for (size_t i = 0; i < h.size(); ++i) {
    out[i] += A_cl[i].transpose() * h[i] + phi[i];
  }
  return out;
}

VecFamily control_offset(const LQModel& model, const MatFamily& P,
                         const VecFamily& h, const SignalSet& signals,
                         double t) {
  VecFamily v(static_cast<size_t>(model.m0()));
  for (int i = 0; i < model.m0(); ++i) {
    const RegimeData& rg = model.regime(i);
    const size_t si = static_cast<size_t>(i);
    const Matrix R_tilde = rg.R + rg.D.transpose() * P[si] * rg.D;
    const Vector rhs = rg.D.transpose() * P[si] * signals.sigma_at(t, i) +
                       rg.B.transpose() * h[si] + signals.r_at(t, i);
    Eigen::LLT<Matrix> llt(symmetrize(R_tilde));
    if (llt.info() != Eigen::Success) {
      throw SolverError("R + D'PD lost positive definiteness in the offset");
    }
    v[si] = -llt.solve(rhs);
  }
  return v;
}

void check_signal_dims(const LQModel& model, const SignalSet& signals) {
  if (signals.n != model.n || signals.m != model.m ||
      signals.m0 != model.m0()) {
    throw ModelError("signal set dimensions do not match the model");
  }
}

}  // namespace

OffsetSolution solve_offset_finite(const LQModel& model,
                                   const DRESolution& dre,
                                   const SignalSet& signals) {
  check_signal_dims(model, signals);
  signals.require_aligned(dre.grid);

  const int m0 = model.m0();
  const int N = dre.grid.num_steps;
  const double ds = dre.grid.step;
  const double T = dre.T;

  OffsetSolution sol;
  sol.kind = OffsetSolution::Kind::finite;
  sol.grid = dre.grid;
  sol.h.assign(static_cast<size_t>(N + 1), zero_vec_family(m0, model.n));
  sol.v.assign(static_cast<size_t>(N + 1), zero_vec_family(m0, model.m));
  sol.phi.assign(static_cast<size_t>(N + 1), zero_vec_family(m0, model.n));

  MatFamily P = zero_mat_family(m0, model.n, model.n);
  VecFamily h = zero_vec_family(m0, model.n);

  auto record = [&](int node, const MatFamily& P_node, const VecFamily& h_node) {
    const double t = dre.grid.node(node);
    // Cross-check against the stored Riccati nodes: the re-advanced flow must
    // agree (same stepping, same arithmetic).
    const MatFamily& stored = dre.P[static_cast<size_t>(node)];
    for (int i = 0; i < m0; ++i) {
      if ((stored[static_cast<size_t>(i)] - P_node[static_cast<size_t>(i)])
              .cwiseAbs()
              .maxCoeff() > 1e-9) {
        throw SolverError("offset solve does not match the supplied Riccati "
                          "solution (grid mismatch?)");
      }
    }
    const FeedbackGain gain = feedback_gain(model, P_node);
    sol.h[static_cast<size_t>(node)] = h_node;
    sol.phi[static_cast<size_t>(node)] =
        forcing(model, P_node, gain, signals, t);
    sol.v[static_cast<size_t>(node)] =
        control_offset(model, P_node, h_node, signals, t);
  };

  record(N, P, h);
  for (int j = 0; j < N; ++j) {
    // Step in time-to-go from s to s + ds, i.e. t from T - s to T - s - ds.
    const double t_right = T - static_cast<double>(j) * ds;
    const double t_mid = t_right - 0.5 * ds;  // signal value on the open step

    const DREStep pstep = dre_backward_step(model, P, ds);
    MatFamily P2(P.size()), P3(P.size()), P4(P.size());
    for (size_t i = 0; i < P.size(); ++i) {
      P2[i] = P[i] + 0.5 * ds * pstep.k1[i];
      P3[i] = P[i] + 0.5 * ds * pstep.k2[i];
      P4[i] = P[i] + ds * pstep.k3[i];
    }
    const FeedbackGain g1 = feedback_gain(model, P);
    const FeedbackGain g2 = feedback_gain(model, P2);
    const FeedbackGain g3 = feedback_gain(model, P3);
    const FeedbackGain g4 = feedback_gain(model, P4);

    const VecFamily l1 = offset_rhs(model.gen, g1.A_cl, h,
                                    forcing(model, P, g1, signals, t_mid));
    VecFamily tmp(h.size());
    for (size_t i = 0; i < h.size(); ++i) tmp[i] = h[i] + 0.5 * ds * l1[i];
    const VecFamily l2 = offset_rhs(model.gen, g2.A_cl, tmp,
                                    forcing(model, P2, g2, signals, t_mid));
    for (size_t i = 0; i < h.size(); ++i) tmp[i] = h[i] + 0.5 * ds * l2[i];
    const VecFamily l3 = offset_rhs(model.gen, g3.A_cl, tmp,
                                    forcing(model, P3, g3, signals, t_mid));
    for (size_t i = 0; i < h.size(); ++i) tmp[i] = h[i] + ds * l3[i];
    const VecFamily l4 = offset_rhs(model.gen, g4.A_cl, tmp,
                                    forcing(model, P4, g4, signals, t_mid));
    for (size_t i = 0; i < h.size(); ++i) {
      h[i] += (ds / 6.0) * (l1[i] + 2.0 * l2[i] + 2.0 * l3[i] + l4[i]);
      if (!h[i].allFinite()) {
        throw SolverError("offset integration blew up");
      }
    }
    P = pstep.next;
    record(N - j - 1, P, h);
  }
  return sol;
}

OffsetSolution solve_offset_infinite(const LQModel& model,
                                     const ARESolution& are,
                                     const SignalSet& signals,
                                     const InfiniteOffsetOptions& opts) {
  check_signal_dims(model, signals);
  if (!(opts.tol > 0.0) || !(opts.step > 0.0) || !(opts.T_max > 0.0)) {
    throw ModelError("infinite-horizon offset options must be positive");
  }
  if (!signals.breakpoints.empty() &&
      signals.breakpoints.back() > opts.T_max + 1e-12) {
    throw ModelError("T_max must lie beyond the last signal breakpoint");
  }

  const int m0 = model.m0();
  const DissipativityCertificate cert =
      dissipativity_certificate(model, are.Theta);
  const double t_pad_raw = (8.0 / cert.delta) * std::log(1.0 / opts.tol);
  if (t_pad_raw > opts.max_pad) {
    std::ostringstream os;
    os << "cannot certify padding: required length " << t_pad_raw
       << " exceeds the cap " << opts.max_pad;
    throw SolverError(os.str());
  }
  const int pad_steps =
      static_cast<int>(std::ceil(t_pad_raw / opts.step - 1e-12));
  const double t_end = opts.T_max + pad_steps * opts.step;

  OffsetSolution sol;
  sol.kind = OffsetSolution::Kind::infinite;
  sol.grid = TimeGrid(0.0, opts.T_max, opts.step);
  sol.delta = cert.delta;
  sol.t_pad = pad_steps * opts.step;
  const int N = sol.grid.num_steps;
  sol.h.assign(static_cast<size_t>(N + 1), zero_vec_family(m0, model.n));
  sol.v.assign(static_cast<size_t>(N + 1), zero_vec_family(m0, model.m));
  sol.phi.assign(static_cast<size_t>(N + 1), zero_vec_family(m0, model.n));

  const TimeGrid full_grid(0.0, t_end, opts.step);
  signals.require_aligned(full_grid);
  const FeedbackGain gain = feedback_gain(model, are.P);

  const double ds = opts.step;
  VecFamily h = zero_vec_family(m0, model.n);
  auto record = [&](int node, const VecFamily& h_node) {
    const double t = sol.grid.node(node);
    sol.h[static_cast<size_t>(node)] = h_node;
    sol.phi[static_cast<size_t>(node)] =
        forcing(model, are.P, gain, signals, t);
    sol.v[static_cast<size_t>(node)] =
        control_offset(model, are.P, h_node, signals, t);
  };

  const int total_steps = full_grid.num_steps;
  for (int j = 0; j < total_steps; ++j) {
    const double t_right = t_end - static_cast<double>(j) * ds;
    const double t_mid = t_right - 0.5 * ds;
    const VecFamily phi = forcing(model, are.P, gain, signals, t_mid);

    const VecFamily l1 = offset_rhs(model.gen, gain.A_cl, h, phi);
    VecFamily tmp(h.size());
    for (size_t i = 0; i < h.size(); ++i) tmp[i] = h[i] + 0.5 * ds * l1[i];
    const VecFamily l2 = offset_rhs(model.gen, gain.A_cl, tmp, phi);
    for (size_t i = 0; i < h.size(); ++i) tmp[i] = h[i] + 0.5 * ds * l2[i];
    const VecFamily l3 = offset_rhs(model.gen, gain.A_cl, tmp, phi);
    for (size_t i = 0; i < h.size(); ++i) tmp[i] = h[i] + ds * l3[i];
    const VecFamily l4 = offset_rhs(model.gen, gain.A_cl, tmp, phi);
    for (size_t i = 0; i < h.size(); ++i) {
      h[i] += (ds / 6.0) * (l1[i] + 2.0 * l2[i] + 2.0 * l3[i] + l4[i]);
      if (!h[i].allFinite()) {
        throw SolverError("offset integration blew up");
      }
    }
    const int node = total_steps - j - 1;  // node index on the full grid
    if (node <= N) record(node, h);
  }

  // Stationary tail value: (L h)(i) + A_cl(i)' h(i) + phi_tail(i) = 0,
  // solved as one stacked linear system.
  {
    const int n = model.n;
    Matrix M = Matrix::Zero(m0 * n, m0 * n);
    Vector rhs = Vector::Zero(m0 * n);
    const double t_tail =
        signals.breakpoints.empty() ? 0.0 : signals.breakpoints.back();
    const VecFamily phi_tail =
        forcing(model, are.P, gain, signals, t_tail + 1.0);
    for (int i = 0; i < m0; ++i) {
      for (int j2 = 0; j2 < m0; ++j2) {
        Matrix block = model.gen.lambda(i, j2) * Matrix::Identity(n, n);
        if (i == j2) {
          block += gain.A_cl[static_cast<size_t>(i)].transpose();
        }
        M.block(i * n, j2 * n, n, n) = block;
      }
      rhs.segment(i * n, n) = -phi_tail[static_cast<size_t>(i)];
    }
    const Vector hbar = M.colPivHouseholderQr().solve(rhs);
    if (!hbar.allFinite()) {
      throw SolverError("stationary tail solve failed");
    }
    sol.h_tail.resize(static_cast<size_t>(m0));
    double gap = 0.0;
    double hbar_norm = 0.0;
    for (int i = 0; i < m0; ++i) {
      sol.h_tail[static_cast<size_t>(i)] = hbar.segment(i * n, n);
      gap = std::max(gap, (sol.h[static_cast<size_t>(N)][static_cast<size_t>(i)] -
                           sol.h_tail[static_cast<size_t>(i)])
                              .norm());
      hbar_norm =
          std::max(hbar_norm, sol.h_tail[static_cast<size_t>(i)].norm());
    }
    sol.tail_gap = gap;
    if (gap > 10.0 * opts.tol * (1.0 + hbar_norm)) {
      std::ostringstream os;
      os << "padded solve did not reach the stationary tail (gap " << gap
         << ")";
      throw SolverError(os.str());
    }
  }
  return sol;
}

OffsetGapTable offset_gap(const OffsetSolution& fin, const OffsetSolution& inf,
                          double window_lo, double window_hi) {
  if (std::abs(fin.grid.step - inf.grid.step) > 1e-12) {
    throw ModelError("offset gap needs solutions on grids with equal steps");
  }
  if (fin.grid.t1 > inf.grid.t1 + 1e-12) {
    throw ModelError("infinite-horizon offsets do not cover the window");
  }
  OffsetGapTable table;
  std::vector<std::pair<double, double>> series_h, series_v;
  const double T = fin.grid.t1;
  for (int k = 0; k <= fin.grid.num_steps; ++k) {
    const double t = fin.grid.node(k);
    const auto ki = static_cast<size_t>(inf.grid.index_of(t));
    double eh = 0.0, ev = 0.0;
    for (size_t i = 0; i < fin.h[static_cast<size_t>(k)].size(); ++i) {
      eh = std::max(eh, (fin.h[static_cast<size_t>(k)][i] - inf.h[ki][i]).norm());
      ev = std::max(ev, (fin.v[static_cast<size_t>(k)][i] - inf.v[ki][i]).norm());
    }
    table.t.push_back(t);
    table.e_h.push_back(eh);
    table.e_v.push_back(ev);
    series_h.emplace_back(T - t, eh);
    series_v.emplace_back(T - t, ev);
  }
  table.fit_h = fit_exponential_rates(series_h, window_lo, window_hi);
  table.fit_v = fit_exponential_rates(series_v, window_lo, window_hi);
  return table;
}

}  // namespace rslq
