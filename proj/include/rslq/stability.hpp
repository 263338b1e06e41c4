#pragma once

// Mean-square stability of the switched closed loop and quantitative
// dissipativity certificates.
//
// The second moments M(i) = E[X X' 1_{chain=i}] of
//   dX = A(i) X dt + C(i) X dW
// satisfy  dM/dt (i) = A(i)M(i) + M(i)A(i)' + C(i)M(i)C(i)' + sum_j l_ji M(j).
// Stacking vec(M(1)),...,vec(M(m0)) turns the right side into a single
// (m0 n^2) x (m0 n^2) matrix whose spectral abscissa decides stability.

#include <optional>

#include "rslq/model.hpp"
#include "rslq/riccati.hpp"

namespace rslq {

// Lifted second-moment generator for the (closed-loop) coefficients A, C.
Matrix build_ms_generator(const MatFamily& A, const MatFamily& C,
                          const Generator& gen);

// Largest real part of the eigenvalues of M.
double spectral_abscissa(const Matrix& M);

struct StabilityVerdict {
  bool stable = false;
  double rho = 0.0;  // spectral abscissa of the lifted generator
};

// Applies the gain family Theta to the model and tests the closed loop.
StabilityVerdict is_stabilizer(const LQModel& model, const MatFamily& Theta);

// Certificate of exponential mean-square decay: a symmetric positive definite
// family Sigma and a rate delta > 0 with
//   (L Sigma)(i) + Sigma A_cl + A_cl'Sigma + C_cl'Sigma C_cl <= -delta Sigma.
struct DissipativityCertificate {
  MatFamily Sigma;     // symmetric positive definite per regime
  double delta = 0.0;  // certified decay rate
  double slack = 0.0;  // min eigenvalue of -(lhs) - delta Sigma over regimes
};

// Solves the Lyapunov-type system (lhs above) = -I for Sigma and sets
// delta = 1 / max_i eig_max(Sigma(i)). Returns std::nullopt when the solve
// fails or Sigma is not positive definite (which happens exactly when the
// closed loop is not mean-square stable).
std::optional<DissipativityCertificate> try_dissipativity_certificate(
    const LQModel& model, const MatFamily& Theta);

// Same, but throws SolverError when no certificate exists.
DissipativityCertificate dissipativity_certificate(const LQModel& model,
                                                   const MatFamily& Theta);

// Smallest lag L such that at every grid node with time-to-go T - t >= L the
// finite-horizon gain satisfies the halved-rate certificate inequality
//   (L Sigma)(i) + Sigma A_cl(t,i) + A_cl(t,i)'Sigma + C_cl(t,i)'Sigma C_cl(t,i)
//     <= -(delta/2) Sigma     (eigenvalues <= 1e-10).
// The scan runs from the terminal end with ties broken toward the larger lag.
// Throws SolverError when no node qualifies (horizon too short).
double find_T0(const LQModel& model, const DRESolution& dre,
               const DissipativityCertificate& cert);

}  // namespace rslq
