#include "rslq/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rslq {

namespace {

constexpr double kGeneratorTol = 1e-12;
constexpr double kNodeMatchTol = 1e-9;

bool is_finite(const Matrix& M) { return M.allFinite(); }

void check_dim(const Matrix& M, int rows, int cols, const std::string& name,
               int regime) {
  if (M.rows() != rows || M.cols() != cols) {
    std::ostringstream os;
    os << "matrix " << name << " of regime " << regime + 1 << " is "
       << M.rows() << "x" << M.cols() << ", expected " << rows << "x" << cols;
    throw ModelError(os.str());
  }
}

}  // namespace

TimeGrid::TimeGrid(double t0_, double t1_, double step_)
    : t0(t0_), t1(t1_), step(step_) {
  if (!(step > 0.0)) throw ModelError("time grid step must be positive");
  if (!(t1 > t0)) throw ModelError("time grid needs t1 > t0");
  const double ratio = (t1 - t0) / step;
  num_steps = static_cast<int>(std::llround(ratio));
  if (num_steps < 1 || std::abs(ratio - num_steps) > 1e-6) {
    throw ModelError("time grid span is not an integer multiple of the step");
  }
}

int TimeGrid::index_of(double t) const {
  const double pos = (t - t0) / step;
  const int k = static_cast<int>(std::llround(pos));
  if (k < 0 || k > num_steps || std::abs(pos - k) > kNodeMatchTol / step) {
    std::ostringstream os;
    os << "time " << t << " is not a node of the grid";
    throw ModelError(os.str());
  }
  return k;
}

SignalSet SignalSet::zero(int n_, int m_, int m0_) {
  SignalSet s;
  s.n = n_;
  s.m = m_;
  s.m0 = m0_;
  s.b.assign(m0_, {});
  s.sigma.assign(m0_, {});
  s.q.assign(m0_, {});
  s.r.assign(m0_, {});
  return s;
}

bool SignalSet::is_zero() const {
  if (has_tail && !tail_is_zero()) return false;
  for (const auto* tab : {&b, &sigma, &q, &r}) {
    for (const auto& per_regime : *tab) {
      for (const auto& v : per_regime) {
        if (v.size() > 0 && v.cwiseAbs().maxCoeff() > 0.0) return false;
      }
    }
  }
  return true;
}

bool SignalSet::tail_is_zero() const {
  if (!has_tail) return true;
  for (const auto* tab : {&b_tail, &sigma_tail, &q_tail, &r_tail}) {
    for (const auto& v : *tab) {
      if (v.size() > 0 && v.cwiseAbs().maxCoeff() > 0.0) return false;
    }
  }
  return true;
}

namespace {

Vector signal_value(const std::vector<double>& bps,
                    const std::vector<Vector>& values, bool has_tail,
                    const Vector& tail, int dim, double t) {
  if (bps.empty()) {
    if (has_tail) return tail;
    return Vector::Zero(dim);
  }
  if (t < bps.front()) return Vector::Zero(dim);
  if (t >= bps.back()) {
    if (has_tail) return tail;
    return Vector::Zero(dim);
  }
  // Locate the interval [bps[j], bps[j+1]) containing t.
  const auto it = std::upper_bound(bps.begin(), bps.end(), t);
  const size_t j = static_cast<size_t>(it - bps.begin()) - 1;
  return values[j];
}

}  // namespace

Vector SignalSet::b_at(double t, int regime) const {
  const auto i = static_cast<size_t>(regime);
  return signal_value(breakpoints, b[i], has_tail,
                      has_tail ? b_tail[i] : Vector(), n, t);
}

Vector SignalSet::sigma_at(double t, int regime) const {
  const auto i = static_cast<size_t>(regime);
  return signal_value(breakpoints, sigma[i], has_tail,
                      has_tail ? sigma_tail[i] : Vector(), n, t);
}

Vector SignalSet::q_at(double t, int regime) const {
  const auto i = static_cast<size_t>(regime);
  return signal_value(breakpoints, q[i], has_tail,
                      has_tail ? q_tail[i] : Vector(), n, t);
}

Vector SignalSet::r_at(double t, int regime) const {
  const auto i = static_cast<size_t>(regime);
  return signal_value(breakpoints, r[i], has_tail,
                      has_tail ? r_tail[i] : Vector(), m, t);
}

void SignalSet::require_aligned(const TimeGrid& grid) const {
  for (double bp : breakpoints) {
    if (bp <= grid.t0 || bp >= grid.t1) continue;  // outside the window
    const double pos = (bp - grid.t0) / grid.step;
    if (std::abs(pos - std::llround(pos)) > kNodeMatchTol / grid.step) {
      std::ostringstream os;
      os << "signal breakpoint " << bp
         << " does not coincide with a grid node (step " << grid.step << ")";
      throw ModelError(os.str());
    }
  }
}

ValidationReport validate_model(const LQModel& model) {
  ValidationReport report;
  const int n = model.n;
  const int m = model.m;
  const int m0 = model.m0();
  if (n < 1 || m < 1 || m0 < 1) {
    throw ModelError("model dimensions must satisfy n >= 1, m >= 1, m0 >= 1");
  }
  if (model.gen.lambda.rows() != m0 || model.gen.lambda.cols() != m0) {
    throw ModelError("generator matrix must be m0 x m0");
  }
  if (static_cast<int>(model.regimes.size()) != m0) {
    throw ModelError("number of regime blocks must equal m0");
  }
  for (int i = 0; i < m0; ++i) {
    const RegimeData& rg = model.regime(i);
    check_dim(rg.A, n, n, "A", i);
    check_dim(rg.B, n, m, "B", i);
    check_dim(rg.C, n, n, "C", i);
    check_dim(rg.D, n, m, "D", i);
    check_dim(rg.Q, n, n, "Q", i);
    check_dim(rg.S, m, n, "S", i);
    check_dim(rg.R, m, m, "R", i);
  }
  if (model.signals.n != n || model.signals.m != m || model.signals.m0 != m0) {
    throw ModelError("signal set dimensions do not match the model");
  }

  auto add = [&](const std::string& name, bool pass, double margin,
                 const std::string& message) {
    report.items.push_back({name, pass, margin, message});
  };

  // Generator structure.
  {
    const Matrix& L = model.gen.lambda;
    double min_offdiag = 0.0;
    double max_rowsum = 0.0;
    double max_diag = -1.0;
    bool has_zero_rate = false;
    for (int i = 0; i < m0; ++i) {
      double rowsum = 0.0;
      for (int j = 0; j < m0; ++j) {
        rowsum += L(i, j);
        if (i != j) {
          min_offdiag = std::min(min_offdiag, L(i, j));
          if (L(i, j) == 0.0) has_zero_rate = true;
        }
      }
      max_rowsum = std::max(max_rowsum, std::abs(rowsum));
      max_diag = std::max(max_diag, L(i, i));
    }
    add("generator off-diagonal rates nonnegative", min_offdiag >= 0.0,
        min_offdiag, "");
    add("generator rows sum to zero", max_rowsum <= kGeneratorTol,
        kGeneratorTol - max_rowsum, "");
    add("generator diagonal nonpositive", max_diag <= kGeneratorTol, -max_diag,
        "");
    if (m0 > 1 && has_zero_rate) {
      report.warnings.push_back(
          "generator has a zero off-diagonal rate; the chain may not be "
          "irreducible");
    }
  }

  // Weights.
  for (int i = 0; i < m0; ++i) {
    const RegimeData& rg = model.regime(i);
    const std::string tag = " (regime " + std::to_string(i + 1) + ")";
    const double q_asym = (rg.Q - rg.Q.transpose()).cwiseAbs().maxCoeff();
    const double r_asym = (rg.R - rg.R.transpose()).cwiseAbs().maxCoeff();
    add("Q symmetric" + tag, q_asym <= kGeneratorTol, kGeneratorTol - q_asym,
        "");
    add("R symmetric" + tag, r_asym <= kGeneratorTol, kGeneratorTol - r_asym,
        "");
    const double q_min = min_eig_sym(rg.Q);
    const double r_min = min_eig_sym(rg.R);
    add("Q positive definite" + tag, q_min > 0.0, q_min, "");
    add("R positive definite" + tag, r_min > 0.0, r_min, "");
    if (r_min > 0.0) {
      const Matrix schur =
          rg.Q - rg.S.transpose() * rg.R.llt().solve(rg.S);
      const double schur_min = min_eig_sym(schur);
      add("Q - S' R^{-1} S positive definite" + tag, schur_min > 0.0,
          schur_min, "");
    }
    bool finite = is_finite(rg.A) && is_finite(rg.B) && is_finite(rg.C) &&
                  is_finite(rg.D) && is_finite(rg.Q) && is_finite(rg.S) &&
                  is_finite(rg.R);
    add("coefficients finite" + tag, finite, finite ? 0.0 : -1.0, "");
  }

  // Signals: strictly increasing breakpoints, consistent table sizes,
  // finite values.
  {
    const SignalSet& sg = model.signals;
    bool bp_sorted = true;
    for (size_t j = 1; j < sg.breakpoints.size(); ++j) {
      if (!(sg.breakpoints[j] > sg.breakpoints[j - 1])) bp_sorted = false;
    }
    add("signal breakpoints strictly increasing", bp_sorted,
        bp_sorted ? 0.0 : -1.0, "");
    const size_t intervals =
        sg.breakpoints.empty() ? 0 : sg.breakpoints.size() - 1;
    bool shape_ok = true;
    bool finite = true;
    auto check_table = [&](const std::vector<std::vector<Vector>>& tab,
                           int dim) {
      if (tab.size() != static_cast<size_t>(m0)) {
        shape_ok = false;
        return;
      }
      for (const auto& per_regime : tab) {
        if (per_regime.size() != intervals) shape_ok = false;
        for (const auto& v : per_regime) {
          if (v.size() != dim) shape_ok = false;
          else if (!v.allFinite()) finite = false;
        }
      }
    };
    check_table(sg.b, n);
    check_table(sg.sigma, n);
    check_table(sg.q, n);
    check_table(sg.r, m);
    if (sg.has_tail) {
      auto check_tail = [&](const VecFamily& tail, int dim) {
        if (tail.size() != static_cast<size_t>(m0)) {
          shape_ok = false;
          return;
        }
        for (const auto& v : tail) {
          if (v.size() != dim) shape_ok = false;
          else if (!v.allFinite()) finite = false;
        }
      };
      check_tail(sg.b_tail, n);
      check_tail(sg.sigma_tail, n);
      check_tail(sg.q_tail, n);
      check_tail(sg.r_tail, m);
    }
    if (!shape_ok) throw ModelError("signal tables have inconsistent shapes");
    add("signal values finite", finite, finite ? 0.0 : -1.0, "");
  }

  report.pass = true;
  for (const auto& item : report.items) report.pass = report.pass && item.pass;
  return report;
}

namespace {

template <typename Family>
Family generator_apply_impl(const Generator& gen, const Family& F) {
  const int m0 = gen.m0;
  if (static_cast<int>(F.size()) != m0) {
    throw ModelError("family size does not match the number of regimes");
  }
  Family out(F.size());
  for (int i = 0; i < m0; ++i) {
    auto acc = (F[0] * 0.0).eval();
    for (int j = 0; j < m0; ++j) {
      if (j == i) continue;
      acc += gen.lambda(i, j) * (F[j] - F[i]);
    }
    out[static_cast<size_t>(i)] = acc;
  }
  return out;
}

}  // namespace

MatFamily generator_apply(const Generator& gen, const MatFamily& F) {
  return generator_apply_impl(gen, F);
}

VecFamily generator_apply(const Generator& gen, const VecFamily& F) {
  return generator_apply_impl(gen, F);
}

std::vector<Vector> chain_law(const Generator& gen, int i0,
                              const TimeGrid& grid) {
  const int m0 = gen.m0;
  if (i0 < 0 || i0 >= m0) throw ModelError("initial regime out of range");
  const Matrix Lt = gen.lambda.transpose();
  auto rhs = [&](const Vector& p) -> Vector { return Lt * p; };

  std::vector<Vector> law(static_cast<size_t>(grid.num_nodes()));
  Vector p = Vector::Zero(m0);
  p(i0) = 1.0;
  law[0] = p;
  const double h = grid.step;
  for (int k = 0; k < grid.num_steps; ++k) {
    const Vector k1 = rhs(p);
    const Vector k2 = rhs(p + 0.5 * h * k1);
    const Vector k3 = rhs(p + 0.5 * h * k2);
    const Vector k4 = rhs(p + h * k3);
    p += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double total = p.sum();
    if (!p.allFinite() || std::abs(total - 1.0) > 1e-9) {
      throw SolverError("chain law integration lost normalization");
    }
    for (int i = 0; i < m0; ++i) {
      if (p(i) < 0.0) {
        if (p(i) < -1e-12) {
          throw SolverError("chain law produced a negative probability");
        }
        p(i) = 0.0;
      }
    }
    law[static_cast<size_t>(k + 1)] = p;
  }
  return law;
}

Vector stationary_distribution(const Generator& gen) {
  const int m0 = gen.m0;
  // Solve pi' lambda = 0 with the normalization sum pi = 1 appended.
  Matrix A(m0 + 1, m0);
  A.topRows(m0) = gen.lambda.transpose();
  A.bottomRows(1).setOnes();
  Vector rhs = Vector::Zero(m0 + 1);
  rhs(m0) = 1.0;
  Vector pi = A.colPivHouseholderQr().solve(rhs);
  if (!pi.allFinite() || pi.minCoeff() < -1e-9) {
    throw SolverError("stationary distribution solve failed");
  }
  return pi.cwiseMax(0.0);
}

std::vector<double> xi_profile(const SignalSet& signals, const Generator& gen,
                               int i0, const TimeGrid& grid) {
  const auto law = chain_law(gen, i0, grid);
  std::vector<double> xi(static_cast<size_t>(grid.num_nodes()), 0.0);
  for (int k = 0; k < grid.num_nodes(); ++k) {
    const double t = grid.node(k);
    double acc = 0.0;
    for (int i = 0; i < gen.m0; ++i) {
      const double size = signals.b_at(t, i).squaredNorm() +
                          signals.sigma_at(t, i).squaredNorm() +
                          signals.q_at(t, i).squaredNorm() +
                          signals.r_at(t, i).squaredNorm();
      acc += law[static_cast<size_t>(k)](i) * size;
    }
    xi[static_cast<size_t>(k)] = acc;
  }
  return xi;
}

double xi_tail_value(const SignalSet& signals, const Generator& gen) {
  if (!signals.has_tail) return 0.0;
  const Vector pi = stationary_distribution(gen);
  double acc = 0.0;
  for (int i = 0; i < gen.m0; ++i) {
    acc += pi(i) * (signals.b_tail[static_cast<size_t>(i)].squaredNorm() +
                    signals.sigma_tail[static_cast<size_t>(i)].squaredNorm() +
                    signals.q_tail[static_cast<size_t>(i)].squaredNorm() +
                    signals.r_tail[static_cast<size_t>(i)].squaredNorm());
  }
  return acc;
}

}  // namespace rslq
