#include "rslq/moments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

namespace rslq {

namespace {

constexpr double kAlignTol = 1e-9;

// --------------------------------------------------------------------------
// Law stage evaluation

struct StageCoef {
  MatFamily F, G;  // closed-loop drift/diffusion matrices
  VecFamily f, g;  // affine parts
};

struct LawStage {
  const MatFamily* Theta = nullptr;
  StageCoef coef;
  VecFamily v;
};

Vector law_offset(const LQModel& model, const FeedbackLaw& law,
                  const MatFamily& P, const VecFamily& h, int regime,
                  double sig_t, const SignalSet& signals) {
  const RegimeData& rg = model.regime(regime);
  const size_t si = static_cast<size_t>(regime);
  Vector v = Vector::Zero(model.m);
  if (law.with_offsets) {
    const Matrix R_tilde = rg.R + rg.D.transpose() * P[si] * rg.D;
    const Vector rhs = rg.D.transpose() * P[si] * signals.sigma_at(sig_t, regime) +
                       rg.B.transpose() * h[si] + signals.r_at(sig_t, regime);
    Eigen::LLT<Matrix> llt(symmetrize(R_tilde));
    if (llt.info() != Eigen::Success) {
      throw SolverError("R + D'PD lost positive definiteness in the law");
    }
    v = -llt.solve(rhs);
  }
  if (!law.v_extra.empty()) v += law.v_extra.at(sig_t, model.m);
  return v;
}

LawStage make_stage(const LQModel& model, const FeedbackLaw& law, int node_idx,
                    double sig_t, const SignalSet& signals) {
  LawStage st;
  st.Theta = &law.Theta_node(node_idx);
  const MatFamily& P = law.P_node(node_idx);
  const VecFamily& h = law.h_node(node_idx);
  const int m0 = model.m0();
  st.coef.F.resize(static_cast<size_t>(m0));
  st.coef.G.resize(static_cast<size_t>(m0));
  st.coef.f.resize(static_cast<size_t>(m0));
  st.coef.g.resize(static_cast<size_t>(m0));
  st.v.resize(static_cast<size_t>(m0));
  for (int i = 0; i < m0; ++i) {
    const RegimeData& rg = model.regime(i);
    const size_t si = static_cast<size_t>(i);
    const Matrix& Th = (*st.Theta)[si];
    st.coef.F[si] = rg.A + rg.B * Th;
    st.coef.G[si] = rg.C + rg.D * Th;
    st.v[si] = law_offset(model, law, P, h, i, sig_t, signals);
    st.coef.f[si] = rg.B * st.v[si] + signals.b_at(sig_t, i);
    st.coef.g[si] = rg.D * st.v[si] + signals.sigma_at(sig_t, i);
  }
  return st;
}

// Stage of the stacked system Z = (X_a, Xhat), Xhat = X_b - X_a. The lower
// rows are driven by B Theta_hat and B v_hat directly so the difference
// channels never go through a large-minus-large subtraction.
StageCoef make_joint_stage(const LQModel& model, const LawStage& a,
                           const LawStage& b) {
  const int n = model.n;
  const int m0 = model.m0();
  StageCoef out;
  out.F.resize(static_cast<size_t>(m0));
  out.G.resize(static_cast<size_t>(m0));
  out.f.resize(static_cast<size_t>(m0));
  out.g.resize(static_cast<size_t>(m0));
  for (int i = 0; i < m0; ++i) {
    const RegimeData& rg = model.regime(i);
    const size_t si = static_cast<size_t>(i);
    const Matrix Theta_hat = (*b.Theta)[si] - (*a.Theta)[si];
    const Vector v_hat = b.v[si] - a.v[si];
    Matrix F = Matrix::Zero(2 * n, 2 * n);
    F.topLeftCorner(n, n) = a.coef.F[si];
    F.bottomLeftCorner(n, n) = rg.B * Theta_hat;
    F.bottomRightCorner(n, n) = b.coef.F[si];
    Matrix G = Matrix::Zero(2 * n, 2 * n);
    G.topLeftCorner(n, n) = a.coef.G[si];
    G.bottomLeftCorner(n, n) = rg.D * Theta_hat;
    G.bottomRightCorner(n, n) = b.coef.G[si];
    Vector f(2 * n), g(2 * n);
    f.head(n) = a.coef.f[si];
    f.tail(n) = rg.B * v_hat;
    g.head(n) = a.coef.g[si];
    g.tail(n) = rg.D * v_hat;
    out.F[si] = std::move(F);
    out.G[si] = std::move(G);
    out.f[si] = std::move(f);
    out.g[si] = std::move(g);
  }
  return out;
}

// --------------------------------------------------------------------------
// Moment ODE integration

struct MomentState {
  Vector p;
  VecFamily m1;
  MatFamily M2;
};

// sum_j l_ji Y(j): chain redistribution seen by occupation-weighted moments.
template <typename Family>
Family chain_adjoint(const Generator& gen, const Family& Y) {
  Family out(Y.size());
  for (int i = 0; i < gen.m0; ++i) {
    auto acc = (Y[0] * gen.lambda(0, i)).eval();
    for (int j = 1; j < gen.m0; ++j) acc += gen.lambda(j, i) * Y[static_cast<size_t>(j)];
    out[static_cast<size_t>(i)] = acc;
  }
  return out;
}

MomentState moment_rhs(const Generator& gen, const StageCoef& c,
                       const MomentState& s) {
  const int m0 = gen.m0;
  MomentState d;
  d.p = gen.lambda.transpose() * s.p;
  d.m1 = chain_adjoint(gen, s.m1);
  d.M2 = chain_adjoint(gen, s.M2);
  for (int i = 0; i < m0; ++i) {
    const size_t si = static_cast<size_t>(i);
    d.m1[si] += c.F[si] * s.m1[si] + c.f[si] * s.p(i);
    const Matrix GM = c.G[si] * s.M2[si];
    const Vector Gm = c.G[si] * s.m1[si];
    d.M2[si] += c.F[si] * s.M2[si] + s.M2[si] * c.F[si].transpose() +
                GM * c.G[si].transpose() + c.f[si] * s.m1[si].transpose() +
                s.m1[si] * c.f[si].transpose() + Gm * c.g[si].transpose() +
                c.g[si] * Gm.transpose() + (c.g[si] * c.g[si].transpose()) * s.p(i);
  }
  return d;
}

MomentState axpy(const MomentState& s, double a, const MomentState& k) {
  MomentState out;
  out.p = s.p + a * k.p;
  out.m1.resize(s.m1.size());
  out.M2.resize(s.M2.size());
  for (size_t i = 0; i < s.m1.size(); ++i) {
    out.m1[i] = s.m1[i] + a * k.m1[i];
    out.M2[i] = s.M2[i] + a * k.M2[i];
  }
  return out;
}

void rk4_moment_step(const Generator& gen, const StageCoef& c0,
                     const StageCoef& cm, const StageCoef& c1, double h,
                     MomentState* s) {
  const MomentState k1 = moment_rhs(gen, c0, *s);
  const MomentState k2 = moment_rhs(gen, cm, axpy(*s, 0.5 * h, k1));
  const MomentState k3 = moment_rhs(gen, cm, axpy(*s, 0.5 * h, k2));
  const MomentState k4 = moment_rhs(gen, c1, axpy(*s, h, k3));
  s->p += (h / 6.0) * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p);
  for (size_t i = 0; i < s->m1.size(); ++i) {
    s->m1[i] += (h / 6.0) * (k1.m1[i] + 2.0 * k2.m1[i] + 2.0 * k3.m1[i] + k4.m1[i]);
    s->M2[i] = symmetrize(s->M2[i] + (h / 6.0) * (k1.M2[i] + 2.0 * k2.M2[i] +
                                                  2.0 * k3.M2[i] + k4.M2[i]));
  }
  if (!s->p.allFinite() || std::abs(s->p.sum() - 1.0) > 1e-9) {
    throw SolverError("moment integration lost chain-law normalization");
  }
}

// --------------------------------------------------------------------------
// Validation helpers

bool law_needs_grid(const FeedbackLaw& law) {
  return !law.stationary_gain || law.h.size() > 1;
}

void check_law_alignment(const FeedbackLaw& law, const TimeGrid& grid) {
  if (!law_needs_grid(law)) return;
  if (std::abs(law.grid.t0 - grid.t0) > kAlignTol ||
      std::abs(law.grid.step - 0.5 * grid.step) > kAlignTol * grid.step ||
      law.grid.t1 < grid.t1 - kAlignTol) {
    throw ModelError(
        "law tables must start with the grid, cover it, and be sampled at "
        "half the integration step");
  }
}

void check_piecewise_aligned(const PiecewiseVec& w, const TimeGrid& grid) {
  for (double bp : w.breakpoints) {
    if (bp <= grid.t0 || bp >= grid.t1) continue;
    const double pos = (bp - grid.t0) / grid.step;
    if (std::abs(pos - std::llround(pos)) > kAlignTol / grid.step) {
      throw ModelError("perturbation breakpoints must lie on grid nodes");
    }
  }
}

void check_common_inputs(const LQModel& model, const SignalSet& signals,
                         const Vector& x0, int i0, const TimeGrid& grid) {
  if (x0.size() != model.n) throw ModelError("initial state has wrong size");
  if (i0 < 0 || i0 >= model.m0()) throw ModelError("initial regime out of range");
  if (std::abs(grid.t0) > kAlignTol) {
    throw ModelError("moment grids must start at t = 0");
  }
  if (signals.n != model.n || signals.m != model.m ||
      signals.m0 != model.m0()) {
    throw ModelError("signal set dimensions do not match the model");
  }
  signals.require_aligned(grid);
}

}  // namespace

// --------------------------------------------------------------------------

Vector PiecewiseVec::at(double t, int dim) const {
  if (breakpoints.empty()) return Vector::Zero(dim);
  if (t < breakpoints.front()) return Vector::Zero(dim);
  auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
  const size_t j = static_cast<size_t>(it - breakpoints.begin()) - 1;
  return values[j];
}

FeedbackLaw finite_horizon_law(const LQModel& model, const DRESolution& dre,
                               const OffsetSolution& offsets) {
  if (std::abs(offsets.grid.step - dre.grid.step) > kAlignTol ||
      std::abs(offsets.grid.t1 - dre.grid.t1) > kAlignTol) {
    throw ModelError("offsets were not solved on the Riccati grid");
  }
  FeedbackLaw law;
  law.n = model.n;
  law.m = model.m;
  law.m0 = model.m0();
  law.stationary_gain = false;
  law.with_offsets = true;
  law.grid = dre.grid;
  const int N = dre.grid.num_steps;
  law.Theta.resize(static_cast<size_t>(N + 1));
  law.P = dre.P;
  law.h = offsets.h;
  law.v = offsets.v;
  for (int k = 0; k <= N; ++k) {
    law.Theta[static_cast<size_t>(k)] =
        feedback_gain(model, dre.P[static_cast<size_t>(k)]).Theta;
  }
  return law;
}

FeedbackLaw infinite_horizon_law(const LQModel& model, const ARESolution& are,
                                 const OffsetSolution& offsets) {
  FeedbackLaw law;
  law.n = model.n;
  law.m = model.m;
  law.m0 = model.m0();
  law.stationary_gain = true;
  law.with_offsets = true;
  law.grid = offsets.grid;
  law.Theta = {are.Theta};
  law.P = {are.P};
  law.h = offsets.h;
  law.v = offsets.v;
  return law;
}

FeedbackLaw plain_gain_law(const LQModel& model, const MatFamily& Theta) {
  FeedbackLaw law;
  law.n = model.n;
  law.m = model.m;
  law.m0 = model.m0();
  law.stationary_gain = true;
  law.with_offsets = false;
  law.Theta = {Theta};
  law.P = {zero_mat_family(model.m0(), model.n, model.n)};
  law.h = {zero_vec_family(model.m0(), model.n)};
  law.v = {zero_vec_family(model.m0(), model.m)};
  return law;
}

MomentTrajectory closed_loop_moments(const LQModel& model,
                                     const FeedbackLaw& law,
                                     const SignalSet& signals, const Vector& x0,
                                     int i0, const TimeGrid& grid) {
  check_common_inputs(model, signals, x0, i0, grid);
  check_law_alignment(law, grid);
  check_piecewise_aligned(law.v_extra, grid);

  const int m0 = model.m0();
  const bool tab = law_needs_grid(law);
  MomentTrajectory traj;
  traj.grid = grid;
  traj.m2_min_eig = std::numeric_limits<double>::infinity();
  const int N = grid.num_steps;
  traj.p.reserve(static_cast<size_t>(N + 1));
  traj.m1.reserve(static_cast<size_t>(N + 1));
  traj.M2.reserve(static_cast<size_t>(N + 1));

  MomentState s;
  s.p = Vector::Zero(m0);
  s.p(i0) = 1.0;
  s.m1 = zero_vec_family(m0, model.n);
  s.M2 = zero_mat_family(m0, model.n, model.n);
  s.m1[static_cast<size_t>(i0)] = x0;
  s.M2[static_cast<size_t>(i0)] = x0 * x0.transpose();

  auto record = [&](const MomentState& st) {
    traj.p.push_back(st.p);
    traj.m1.push_back(st.m1);
    traj.M2.push_back(st.M2);
    for (const auto& M : st.M2) {
      traj.m2_min_eig = std::min(traj.m2_min_eig, min_eig_sym(M));
    }
  };

  record(s);
  for (int k = 0; k < N; ++k) {
    const double sig_t = grid.node(k) + 0.5 * grid.step;
    const LawStage st0 = make_stage(model, law, tab ? 2 * k : 0, sig_t, signals);
    const LawStage stm = make_stage(model, law, tab ? 2 * k + 1 : 0, sig_t, signals);
    const LawStage st1 = make_stage(model, law, tab ? 2 * k + 2 : 0, sig_t, signals);
    rk4_moment_step(model.gen, st0.coef, stm.coef, st1.coef, grid.step, &s);
    record(s);
  }
  return traj;
}

JointMomentTrajectory joint_difference_moments(
    const LQModel& model, const FeedbackLaw& law_a, const FeedbackLaw& law_b,
    const SignalSet& signals, const Vector& x_a, const Vector& x_b, int i0,
    const TimeGrid& grid) {
  check_common_inputs(model, signals, x_a, i0, grid);
  if (x_b.size() != model.n) throw ModelError("initial state has wrong size");
  check_law_alignment(law_a, grid);
  check_law_alignment(law_b, grid);
  check_piecewise_aligned(law_a.v_extra, grid);
  check_piecewise_aligned(law_b.v_extra, grid);

  const int m0 = model.m0();
  const int n = model.n;
  const bool tab_a = law_needs_grid(law_a);
  const bool tab_b = law_needs_grid(law_b);

  JointMomentTrajectory traj;
  traj.grid = grid;
  traj.n = n;
  const int N = grid.num_steps;

  MomentState s;
  s.p = Vector::Zero(m0);
  s.p(i0) = 1.0;
  s.m1 = zero_vec_family(m0, 2 * n);
  s.M2 = zero_mat_family(m0, 2 * n, 2 * n);
  Vector z0(2 * n);
  z0.head(n) = x_a;
  z0.tail(n) = x_b - x_a;
  s.m1[static_cast<size_t>(i0)] = z0;
  s.M2[static_cast<size_t>(i0)] = z0 * z0.transpose();

  auto record = [&](const MomentState& st, int k) {
    traj.p.push_back(st.p);
    traj.m1.push_back(st.m1);
    traj.M2.push_back(st.M2);
    // Difference channels, evaluated with right-limit signal values.
    const double t = grid.node(k);
    const LawStage a = make_stage(model, law_a, tab_a ? 2 * k : 0, t, signals);
    const LawStage b = make_stage(model, law_b, tab_b ? 2 * k : 0, t, signals);
    double x2 = 0.0, u2 = 0.0;
    for (int i = 0; i < m0; ++i) {
      const size_t si = static_cast<size_t>(i);
      const Matrix& M = st.M2[si];
      const Matrix Maa = M.topLeftCorner(n, n);
      const Matrix Mah = M.topRightCorner(n, n);   // E[x_a xhat']
      const Matrix Mhh = M.bottomRightCorner(n, n);
      x2 += Mhh.trace();
      const Matrix& Th_b = (*b.Theta)[si];
      const Matrix Th_hat = Th_b - (*a.Theta)[si];
      const Vector v_hat = b.v[si] - a.v[si];
      const Vector m1a = st.m1[si].head(n);
      const Vector m1h = st.m1[si].tail(n);
      u2 += (Th_b.transpose() * Th_b * Mhh).trace() +
            (Th_hat.transpose() * Th_hat * Maa).trace() +
            2.0 * (Th_b.transpose() * Th_hat * Mah).trace() +
            2.0 * v_hat.dot(Th_b * m1h + Th_hat * m1a) +
            v_hat.squaredNorm() * st.p(i);
    }
    traj.xhat_sq.push_back(std::max(0.0, x2));
    traj.uhat_sq.push_back(std::max(0.0, u2));
  };

  record(s, 0);
  for (int k = 0; k < N; ++k) {
    const double sig_t = grid.node(k) + 0.5 * grid.step;
    const LawStage a0 = make_stage(model, law_a, tab_a ? 2 * k : 0, sig_t, signals);
    const LawStage am = make_stage(model, law_a, tab_a ? 2 * k + 1 : 0, sig_t, signals);
    const LawStage a1 = make_stage(model, law_a, tab_a ? 2 * k + 2 : 0, sig_t, signals);
    const LawStage b0 = make_stage(model, law_b, tab_b ? 2 * k : 0, sig_t, signals);
    const LawStage bm = make_stage(model, law_b, tab_b ? 2 * k + 1 : 0, sig_t, signals);
    const LawStage b1 = make_stage(model, law_b, tab_b ? 2 * k + 2 : 0, sig_t, signals);
    const StageCoef c0 = make_joint_stage(model, a0, b0);
    const StageCoef cm = make_joint_stage(model, am, bm);
    const StageCoef c1 = make_joint_stage(model, a1, b1);
    rk4_moment_step(model.gen, c0, cm, c1, grid.step, &s);
    record(s, k + 1);
  }
  return traj;
}

MomentTrajectory JointMomentTrajectory::marginal_a() const {
  MomentTrajectory out;
  out.grid = grid;
  out.m2_min_eig = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < p.size(); ++k) {
    out.p.push_back(p[k]);
    VecFamily m(m1[k].size());
    MatFamily M(M2[k].size());
    for (size_t i = 0; i < m1[k].size(); ++i) {
      m[i] = m1[k][i].head(n);
      M[i] = M2[k][i].topLeftCorner(n, n);
    }
    out.m1.push_back(std::move(m));
    out.M2.push_back(std::move(M));
  }
  return out;
}

MomentTrajectory JointMomentTrajectory::marginal_b() const {
  MomentTrajectory out;
  out.grid = grid;
  out.m2_min_eig = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < p.size(); ++k) {
    out.p.push_back(p[k]);
    VecFamily m(m1[k].size());
    MatFamily M(M2[k].size());
    for (size_t i = 0; i < m1[k].size(); ++i) {
      m[i] = m1[k][i].head(n) + m1[k][i].tail(n);
      const Matrix Maa = M2[k][i].topLeftCorner(n, n);
      const Matrix Mah = M2[k][i].topRightCorner(n, n);
      const Matrix Mhh = M2[k][i].bottomRightCorner(n, n);
      M[i] = Maa + Mah + Mah.transpose() + Mhh;
    }
    out.m1.push_back(std::move(m));
    out.M2.push_back(std::move(M));
  }
  return out;
}

// --------------------------------------------------------------------------
// Monte Carlo

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Per-node, per-regime closed-loop coefficients for the Euler stepper.
struct CoefTable {
  TimeGrid grid;
  bool constant = false;
  // [node][regime]
  std::vector<MatFamily> F, G;
  std::vector<VecFamily> f, g;
};

CoefTable build_coef_table(const LQModel& model, const FeedbackLaw& law,
                           const SignalSet& signals, const TimeGrid& mc_grid) {
  CoefTable tab;
  const bool needs_grid = law_needs_grid(law);
  const bool time_varying =
      needs_grid || !signals.is_zero() || !law.v_extra.empty();
  if (needs_grid) {
    if (law.grid.t0 > 1e-12 || law.grid.t1 < mc_grid.t1 - kAlignTol) {
      throw ModelError("law tables do not cover the simulation window");
    }
    tab.grid = law.grid;
  } else if (time_varying) {
    tab.grid = mc_grid;
  } else {
    tab.grid = TimeGrid(0.0, 1.0, 1.0);  // single placeholder interval
    tab.constant = true;
  }
  const int nodes = tab.constant ? 1 : tab.grid.num_nodes();
  tab.F.resize(static_cast<size_t>(nodes));
  tab.G.resize(static_cast<size_t>(nodes));
  tab.f.resize(static_cast<size_t>(nodes));
  tab.g.resize(static_cast<size_t>(nodes));
  for (int k = 0; k < nodes; ++k) {
    const double t = tab.grid.node(k);
    const LawStage st = make_stage(model, law, needs_grid ? k : 0, t, signals);
    tab.F[static_cast<size_t>(k)] = st.coef.F;
    tab.G[static_cast<size_t>(k)] = st.coef.G;
    tab.f[static_cast<size_t>(k)] = st.coef.f;
    tab.g[static_cast<size_t>(k)] = st.coef.g;
  }
  return tab;
}

}  // namespace

MCResult monte_carlo_simulate(const LQModel& model, const FeedbackLaw& law,
                              const SignalSet& signals, const Vector& x0,
                              int i0, const TimeGrid& grid, std::int64_t paths,
                              std::uint64_t seed, int workers) {
  check_common_inputs(model, signals, x0, i0, grid);
  if (paths < 1) throw ModelError("need at least one path");
  const int m0 = model.m0();
  const int n = model.n;
  double max_rate = 0.0;
  for (int i = 0; i < m0; ++i) {
    max_rate = std::max(max_rate, -model.gen.lambda(i, i));
  }
  if (grid.step * max_rate > 0.1 + 1e-12) {
    throw ModelError(
        "simulation step too coarse for the jump rates (need dt * max rate "
        "<= 0.1)");
  }

  const CoefTable tab = build_coef_table(model, law, signals, grid);
  const int num_nodes = grid.num_nodes();

  // Accumulator layout per node: for each regime [count, sum x, sum x^2comp,
  // sum xx', sum (xx')^2comp], then [sum |x|^2, sum |x|^4].
  const int per_regime = 1 + n + n + n * n + n * n;
  const int node_stride = m0 * per_regime + 2;
  const size_t acc_size =
      static_cast<size_t>(num_nodes) * static_cast<size_t>(node_stride);

  const std::int64_t block_size = 4096;
  const int num_blocks =
      static_cast<int>((paths + block_size - 1) / block_size);
  std::vector<std::vector<double>> partials(
      static_cast<size_t>(num_blocks));

  auto run_block = [&](int blk) {
    std::vector<double>& acc = partials[static_cast<size_t>(blk)];
    acc.assign(acc_size, 0.0);
    const std::int64_t first = static_cast<std::int64_t>(blk) * block_size;
    const std::int64_t last = std::min(paths, first + block_size);
    Vector x(n), drift(n), diff(n), fw(n), gw(n);
    Matrix Fw(n, n), Gw(n, n);
    for (std::int64_t path = first; path < last; ++path) {
      std::mt19937_64 rng(splitmix64(
          splitmix64(seed) ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(path + 1))));
      std::normal_distribution<double> normal(0.0, 1.0);
      std::uniform_real_distribution<double> uniform(0.0, 1.0);

      x = x0;
      int alpha = i0;
      double t = 0.0;
      auto draw_holding = [&]() {
        const double q = -model.gen.lambda(alpha, alpha);
        if (q <= 0.0) return std::numeric_limits<double>::infinity();
        return std::exponential_distribution<double>(q)(rng);
      };
      double next_jump = draw_holding() + t;

      auto euler_to = [&](double t_to) {
        while (t < t_to - 1e-15) {
          const double dt = t_to - t;
          // Blend the tabulated coefficients linearly at the left point.
          int idx;
          double w;
          if (tab.constant) {
            idx = 0;
            w = 0.0;
          } else {
            const double pos = (t - tab.grid.t0) / tab.grid.step;
            idx = std::min(tab.grid.num_steps - 1,
                           std::max(0, static_cast<int>(pos)));
            w = std::min(1.0, std::max(0.0, pos - idx));
          }
          const size_t k0 = static_cast<size_t>(idx);
          const size_t k1 = tab.constant ? k0 : k0 + 1;
          const size_t si = static_cast<size_t>(alpha);
          Fw = (1.0 - w) * tab.F[k0][si] + w * tab.F[k1][si];
          Gw = (1.0 - w) * tab.G[k0][si] + w * tab.G[k1][si];
          fw = (1.0 - w) * tab.f[k0][si] + w * tab.f[k1][si];
          gw = (1.0 - w) * tab.g[k0][si] + w * tab.g[k1][si];
          drift.noalias() = Fw * x;
          drift += fw;
          diff.noalias() = Gw * x;
          diff += gw;
          const double z = normal(rng);
          x += dt * drift + std::sqrt(dt) * z * diff;
          t = t_to;  // single Euler update per (sub)step
        }
      };

      for (int k = 1; k < num_nodes; ++k) {
        const double t_node = grid.node(k);
        while (next_jump < t_node) {
          euler_to(next_jump);
          // Jump: choose the target regime with probability rate/total.
          const double q = -model.gen.lambda(alpha, alpha);
          double u = uniform(rng) * q;
          int target = -1;
          for (int j = 0; j < m0; ++j) {
            if (j == alpha) continue;
            u -= model.gen.lambda(alpha, j);
            if (u <= 0.0) {
              target = j;
              break;
            }
          }
          if (target < 0) {  // numerical rounding: take the last rated state
            for (int j = m0 - 1; j >= 0; --j) {
              if (j != alpha && model.gen.lambda(alpha, j) > 0.0) {
                target = j;
                break;
              }
            }
          }
          alpha = target;
          next_jump = t + draw_holding();
        }
        euler_to(t_node);

        // Accumulate at the node.
        double* node_acc = acc.data() +
                           static_cast<size_t>(k) * static_cast<size_t>(node_stride);
        double* ra = node_acc + alpha * per_regime;
        ra[0] += 1.0;
        for (int c = 0; c < n; ++c) {
          ra[1 + c] += x(c);
          ra[1 + n + c] += x(c) * x(c);
        }
        double abs2 = 0.0;
        for (int c = 0; c < n; ++c) abs2 += x(c) * x(c);
        for (int c = 0; c < n; ++c) {
          for (int d = 0; d < n; ++d) {
            const double xx = x(c) * x(d);
            ra[1 + 2 * n + c * n + d] += xx;
            ra[1 + 2 * n + n * n + c * n + d] += xx * xx;
          }
        }
        node_acc[m0 * per_regime] += abs2;
        node_acc[m0 * per_regime + 1] += abs2 * abs2;
      }
    }
  };

  int nworkers = workers > 0
                     ? workers
                     : static_cast<int>(std::thread::hardware_concurrency());
  nworkers = std::max(1, std::min({nworkers, num_blocks, 32}));
  if (nworkers == 1) {
    for (int blk = 0; blk < num_blocks; ++blk) run_block(blk);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(nworkers));
    for (int w = 0; w < nworkers; ++w) {
      pool.emplace_back([&]() {
        int blk;
        while ((blk = next.fetch_add(1)) < num_blocks) run_block(blk);
      });
    }
    for (auto& th : pool) th.join();
  }

  // Merge the block partials in index order (fixed summation order).
  std::vector<double> acc(acc_size, 0.0);
  for (int blk = 0; blk < num_blocks; ++blk) {
    const auto& part = partials[static_cast<size_t>(blk)];
    for (size_t k = 0; k < acc_size; ++k) acc[k] += part[k];
  }

  MCResult res;
  res.grid = grid;
  res.paths = paths;
  res.seed = seed;
  const double N = static_cast<double>(paths);
  res.p_hat.assign(static_cast<size_t>(num_nodes), Vector::Zero(m0));
  res.p_se = res.p_hat;
  res.m1_hat.assign(static_cast<size_t>(num_nodes), zero_vec_family(m0, n));
  res.m1_se = res.m1_hat;
  res.M2_hat.assign(static_cast<size_t>(num_nodes), zero_mat_family(m0, n, n));
  res.M2_se = res.M2_hat;
  res.abs2_hat.assign(static_cast<size_t>(num_nodes), 0.0);
  res.abs2_se.assign(static_cast<size_t>(num_nodes), 0.0);

  // Node 0 is deterministic.
  res.p_hat[0](i0) = 1.0;
  res.m1_hat[0][static_cast<size_t>(i0)] = x0;
  res.M2_hat[0][static_cast<size_t>(i0)] = x0 * x0.transpose();
  res.abs2_hat[0] = x0.squaredNorm();

  for (int k = 1; k < num_nodes; ++k) {
    const double* node_acc =
        acc.data() + static_cast<size_t>(k) * static_cast<size_t>(node_stride);
    for (int i = 0; i < m0; ++i) {
      const double* ra = node_acc + i * per_regime;
      const double cnt = ra[0];
      const double p = cnt / N;
      res.p_hat[static_cast<size_t>(k)](i) = p;
      res.p_se[static_cast<size_t>(k)](i) =
          std::sqrt(std::max(0.0, p * (1.0 - p) / N));
      for (int c = 0; c < n; ++c) {
        const double mean = ra[1 + c] / N;
        const double var = std::max(0.0, ra[1 + n + c] / N - mean * mean);
        res.m1_hat[static_cast<size_t>(k)][static_cast<size_t>(i)](c) = mean;
        res.m1_se[static_cast<size_t>(k)][static_cast<size_t>(i)](c) =
            std::sqrt(var / N);
      }
      for (int c = 0; c < n; ++c) {
        for (int d = 0; d < n; ++d) {
          const double mean = ra[1 + 2 * n + c * n + d] / N;
          const double var = std::max(
              0.0, ra[1 + 2 * n + n * n + c * n + d] / N - mean * mean);
          res.M2_hat[static_cast<size_t>(k)][static_cast<size_t>(i)](c, d) = mean;
          res.M2_se[static_cast<size_t>(k)][static_cast<size_t>(i)](c, d) =
              std::sqrt(var / N);
        }
      }
    }
    const double mean2 = node_acc[m0 * per_regime] / N;
    const double var2 =
        std::max(0.0, node_acc[m0 * per_regime + 1] / N - mean2 * mean2);
    res.abs2_hat[static_cast<size_t>(k)] = mean2;
    res.abs2_se[static_cast<size_t>(k)] = std::sqrt(var2 / N);
  }
  return res;
}

// --------------------------------------------------------------------------
// Cost quadrature

namespace {

// Expected instantaneous cost rate at one node given a law stage.
double cost_rate(const LQModel& model, const LawStage& st, const Vector& p,
                 const VecFamily& m1, const MatFamily& M2,
                 const SignalSet& signals, double sig_t) {
  double total = 0.0;
  for (int i = 0; i < model.m0(); ++i) {
    const RegimeData& rg = model.regime(i);
    const size_t si = static_cast<size_t>(i);
    const Matrix& Th = (*st.Theta)[si];
    const Vector& v = st.v[si];
    const Vector q = signals.q_at(sig_t, i);
    const Vector r = signals.r_at(sig_t, i);
    double quad = (rg.Q * M2[si]).trace() +
                  2.0 * (Th.transpose() * rg.S * M2[si]).trace() +
                  (Th.transpose() * rg.R * Th * M2[si]).trace() +
                  2.0 * v.dot((rg.S + rg.R * Th) * m1[si]) +
                  v.dot(rg.R * v) * p(i);
    total += 0.5 * quad + q.dot(m1[si]) + r.dot(Th * m1[si] + v * p(i));
  }
  return total;
}

}  // namespace

CostBreakdown evaluate_cost(const LQModel& model, const FeedbackLaw& law,
                            const SignalSet& signals,
                            const MomentTrajectory& traj) {
  const TimeGrid& grid = traj.grid;
  check_law_alignment(law, grid);
  const bool tab = law_needs_grid(law);

  CostBreakdown out;
  const int N = grid.num_steps;
  out.t_left.reserve(static_cast<size_t>(N));
  out.t_right.reserve(static_cast<size_t>(N));
  out.segment.reserve(static_cast<size_t>(N));
  double J = 0.0;
  for (int k = 0; k < N; ++k) {
    const double sig_t = grid.node(k) + 0.5 * grid.step;
    const LawStage left = make_stage(model, law, tab ? 2 * k : 0, sig_t, signals);
    const LawStage right =
        make_stage(model, law, tab ? 2 * k + 2 : 0, sig_t, signals);
    const double gl = cost_rate(model, left, traj.p[static_cast<size_t>(k)],
                                traj.m1[static_cast<size_t>(k)],
                                traj.M2[static_cast<size_t>(k)], signals, sig_t);
    const double gr = cost_rate(model, right, traj.p[static_cast<size_t>(k + 1)],
                                traj.m1[static_cast<size_t>(k + 1)],
                                traj.M2[static_cast<size_t>(k + 1)], signals, sig_t);
    const double seg = 0.5 * grid.step * (gl + gr);
    out.t_left.push_back(grid.node(k));
    out.t_right.push_back(grid.node(k + 1));
    out.segment.push_back(seg);
    J += seg;
  }
  out.J = J;
  {
    const double t_last = grid.t1;
    const LawStage last =
        make_stage(model, law, tab ? 2 * N : 0, t_last, signals);
    out.terminal_rate = cost_rate(
        model, last, traj.p[static_cast<size_t>(N)],
        traj.m1[static_cast<size_t>(N)], traj.M2[static_cast<size_t>(N)],
        signals, t_last);
  }
  return out;
}

}  // namespace rslq
