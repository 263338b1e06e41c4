#pragma once

// Fixed test models shared by the suite. Constants are frozen here so solver
// regressions show up against known inputs; several have closed-form
// solutions noted next to the builder.

#include <vector>

#include "rslq/model.hpp"

namespace testm {

using rslq::LQModel;
using rslq::Matrix;
using rslq::RegimeData;
using rslq::SignalSet;
using rslq::Vector;

inline Matrix m1x1(double v) { return Matrix::Constant(1, 1, v); }

// Chain-free scalar model with free coefficients: dX = (a X + b u) dt
// + (c X + d u) dW, cost weights q, s, r.
inline LQModel scalar(double a, double b, double c, double d, double q,
                      double s, double r) {
  LQModel model;
  model.n = 1;
  model.m = 1;
  model.gen.m0 = 1;
  model.gen.lambda = Matrix::Zero(1, 1);
  RegimeData rg;
  rg.A = m1x1(a);
  rg.B = m1x1(b);
  rg.C = m1x1(c);
  rg.D = m1x1(d);
  rg.Q = m1x1(q);
  rg.S = m1x1(s);
  rg.R = m1x1(r);
  model.regimes = {rg};
  model.signals = SignalSet::zero(1, 1, 1);
  return model;
}

// dX = u dt, cost 1/2 int (x^2 + u^2): P_T(t) = tanh(T - t), P_inf = 1,
// Theta_inf = -1, closed-loop rate rho = -2, certificate delta = 2.
inline LQModel scalar_benchmark() { return scalar(0, 1, 0, 0, 1, 0, 1); }

// Benchmark plus a constant drift signal b == beta: h_T(t) =
// beta (1 - sech(T - t)), v = -h, stationary h = beta, v = -beta.
inline LQModel scalar_constant(double beta) {
  LQModel model = scalar_benchmark();
  SignalSet& sg = model.signals;
  sg.has_tail = true;
  sg.b_tail = {Vector::Constant(1, beta)};
  sg.sigma_tail = {Vector::Zero(1)};
  sg.q_tail = {Vector::Zero(1)};
  sg.r_tail = {Vector::Zero(1)};
  return model;
}

// Benchmark with b = beta on [0, c), zero afterwards: for t <= c,
// h_T(t) = beta (1 - cosh(T - c) / cosh(T - t)); h_T = 0 past c.
inline LQModel scalar_compact(double beta, double c) {
  LQModel model = scalar_benchmark();
  model.signals.breakpoints = {0.0, c};
  model.signals.b = {{Vector::Constant(1, beta)}};
  model.signals.sigma = {{Vector::Zero(1)}};
  model.signals.q = {{Vector::Zero(1)}};
  model.signals.r = {{Vector::Zero(1)}};
  return model;
}

// Two regimes with multiplicative noise and constant signal tails.
inline LQModel two_regime() {
  LQModel model;
  model.n = 1;
  model.m = 1;
  model.gen.m0 = 2;
  model.gen.lambda = Matrix::Zero(2, 2);
  model.gen.lambda << -1.0, 1.0, 0.8, -0.8;
  RegimeData r1;
  r1.A = m1x1(0.3);
  r1.B = m1x1(1.0);
  r1.C = m1x1(0.4);
  r1.D = m1x1(0.2);
  r1.Q = m1x1(2.0);
  r1.S = m1x1(0.1);
  r1.R = m1x1(1.0);
  RegimeData r2;
  r2.A = m1x1(-0.5);
  r2.B = m1x1(0.8);
  r2.C = m1x1(0.3);
  r2.D = m1x1(0.0);
  r2.Q = m1x1(1.0);
  r2.S = m1x1(0.0);
  r2.R = m1x1(0.5);
  model.regimes = {r1, r2};
  model.signals = SignalSet::zero(1, 1, 2);
  SignalSet& sg = model.signals;
  sg.has_tail = true;
  sg.b_tail = {Vector::Constant(1, 0.5), Vector::Constant(1, -0.3)};
  sg.sigma_tail = {Vector::Constant(1, 0.2), Vector::Constant(1, 0.1)};
  sg.q_tail = {Vector::Zero(1), Vector::Zero(1)};
  sg.r_tail = {Vector::Zero(1), Vector::Zero(1)};
  return model;
}

// Two regimes, noise in both channels, piecewise signals on [0,1) and [1,3)
// plus constant tails.
inline LQModel scalar_noisy() {
  LQModel model;
  model.n = 1;
  model.m = 1;
  model.gen.m0 = 2;
  model.gen.lambda = Matrix::Zero(2, 2);
  model.gen.lambda << -0.5, 0.5, 1.0, -1.0;
  RegimeData r1;
  r1.A = m1x1(0.2);
  r1.B = m1x1(1.0);
  r1.C = m1x1(0.5);
  r1.D = m1x1(0.2);
  r1.Q = m1x1(1.5);
  r1.S = m1x1(0.1);
  r1.R = m1x1(1.0);
  RegimeData r2;
  r2.A = m1x1(-0.3);
  r2.B = m1x1(0.7);
  r2.C = m1x1(0.3);
  r2.D = m1x1(0.1);
  r2.Q = m1x1(1.0);
  r2.S = m1x1(0.0);
  r2.R = m1x1(0.8);
  model.regimes = {r1, r2};
  SignalSet& sg = model.signals;
  sg.n = 1;
  sg.m = 1;
  sg.m0 = 2;
  sg.breakpoints = {0.0, 1.0, 3.0};
  sg.b = {{Vector::Constant(1, 0.8), Vector::Constant(1, 0.4)},
          {Vector::Constant(1, -0.5), Vector::Constant(1, 0.2)}};
  sg.sigma = {{Vector::Constant(1, 0.3), Vector::Constant(1, 0.3)},
              {Vector::Constant(1, 0.2), Vector::Constant(1, 0.0)}};
  sg.q = {{Vector::Zero(1), Vector::Zero(1)},
          {Vector::Zero(1), Vector::Zero(1)}};
  sg.r = {{Vector::Constant(1, 0.1), Vector::Constant(1, 0.0)},
          {Vector::Zero(1), Vector::Zero(1)}};
  sg.has_tail = true;
  sg.b_tail = {Vector::Constant(1, 0.2), Vector::Constant(1, -0.1)};
  sg.sigma_tail = {Vector::Constant(1, 0.25), Vector::Constant(1, 0.15)};
  sg.q_tail = {Vector::Zero(1), Vector::Zero(1)};
  sg.r_tail = {Vector::Zero(1), Vector::Zero(1)};
  return model;
}

// Three regimes, two-dimensional state, homogeneous.
inline LQModel three_regime() {
  LQModel model;
  model.n = 2;
  model.m = 1;
  model.gen.m0 = 3;
  model.gen.lambda = Matrix::Zero(3, 3);
  model.gen.lambda << -1.0, 0.6, 0.4, 0.5, -1.0, 0.5, 0.3, 0.7, -1.0;
  RegimeData r1;
  r1.A = Matrix::Zero(2, 2);
  r1.A << 0.2, 0.5, -0.3, -0.6;
  r1.B = Matrix::Zero(2, 1);
  r1.B << 1.0, 0.2;
  r1.C = 0.2 * Matrix::Identity(2, 2);
  r1.D = Matrix::Zero(2, 1);
  r1.D << 0.1, 0.0;
  r1.Q = Matrix::Zero(2, 2);
  r1.Q << 2.0, 0.3, 0.3, 1.0;
  r1.S = Matrix::Zero(1, 2);
  r1.S << 0.1, 0.0;
  r1.R = m1x1(1.0);
  RegimeData r2;
  r2.A = Matrix::Zero(2, 2);
  r2.A << -0.4, 0.1, 0.2, -0.2;
  r2.B = Matrix::Zero(2, 1);
  r2.B << 0.5, 1.0;
  r2.C = Matrix::Zero(2, 2);
  r2.C << 0.1, 0.0, 0.1, 0.1;
  r2.D = Matrix::Zero(2, 1);
  r2.Q = Matrix::Identity(2, 2);
  r2.S = Matrix::Zero(1, 2);
  r2.R = m1x1(0.8);
  RegimeData r3;
  r3.A = Matrix::Zero(2, 2);
  r3.A << 0.0, -0.2, 0.4, -0.5;
  r3.B = Matrix::Zero(2, 1);
  r3.B << 1.0, -0.4;
  r3.C = Matrix::Zero(2, 2);
  r3.D = Matrix::Zero(2, 1);
  r3.D << 0.0, 0.15;
  r3.Q = Matrix::Zero(2, 2);
  r3.Q << 1.5, -0.2, -0.2, 1.2;
  r3.S = Matrix::Zero(1, 2);
  r3.S << 0.0, 0.05;
  r3.R = m1x1(1.2);
  model.regimes = {r1, r2, r3};
  model.signals = SignalSet::zero(2, 1, 3);
  return model;
}

}  // namespace testm
