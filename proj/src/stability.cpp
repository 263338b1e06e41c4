#include "rslq/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace rslq {

namespace {

// vec(M) stacks columns; vec(A M B') = (B kron A) vec(M).
Matrix kron(const Matrix& A, const Matrix& B) {
  Matrix K(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    }
  }
  return K;
}

// Symmetric-matrix basis of dimension n(n+1)/2: unit diagonal elements and
// (e_k e_l' + e_l e_k')/sqrt(2) off the diagonal (orthonormal in Frobenius).
int sym_dim(int n) { return n * (n + 1) / 2; }

Matrix sym_basis_element(int n, int idx) {
  Matrix E = Matrix::Zero(n, n);
  int count = 0;
  for (int k = 0; k < n; ++k) {
    for (int l = k; l < n; ++l) {
      if (count == idx) {
        if (k == l) {
          E(k, k) = 1.0;
        } else {
          E(k, l) = E(l, k) = 1.0 / std::sqrt(2.0);
        }
        return E;
      }
      ++count;
    }
  }
  throw SolverError("symmetric basis index out of range");
}

Vector sym_coords(const Matrix& M, int n) {
  Vector c(sym_dim(n));
  int count = 0;
  for (int k = 0; k < n; ++k) {
    for (int l = k; l < n; ++l) {
      c(count++) = (k == l) ? M(k, k) : std::sqrt(2.0) * M(k, l);
    }
  }
  return c;
}

Matrix sym_from_coords(const Vector& c, int n) {
  Matrix M = Matrix::Zero(n, n);
  int count = 0;
  for (int k = 0; k < n; ++k) {
    for (int l = k; l < n; ++l) {
      if (k == l) {
        M(k, k) = c(count);
      } else {
        M(k, l) = M(l, k) = c(count) / std::sqrt(2.0);
      }
      ++count;
    }
  }
  return M;
}

// Backward Lyapunov-type operator of the certificate inequality at Sigma.
MatFamily lyapunov_lhs(const MatFamily& A_cl, const MatFamily& C_cl,
                       const Generator& gen, const MatFamily& Sigma) {
  const MatFamily L_Sigma = generator_apply(gen, Sigma);
  MatFamily out(Sigma.size());
  for (size_t i = 0; i < Sigma.size(); ++i) {
    out[i] = L_Sigma[i] + Sigma[i] * A_cl[i] + A_cl[i].transpose() * Sigma[i] +
             C_cl[i].transpose() * Sigma[i] * C_cl[i];
  }
  return out;
}

MatFamily closed_loop_A(const LQModel& model, const MatFamily& Theta) {
  MatFamily A(Theta.size());
  for (int i = 0; i < model.m0(); ++i) {
    A[static_cast<size_t>(i)] =
        model.regime(i).A + model.regime(i).B * Theta[static_cast<size_t>(i)];
  }
  return A;
}

MatFamily closed_loop_C(const LQModel& model, const MatFamily& Theta) {
  MatFamily C(Theta.size());
  for (int i = 0; i < model.m0(); ++i) {
    C[static_cast<size_t>(i)] =
        model.regime(i).C + model.regime(i).D * Theta[static_cast<size_t>(i)];
  }
  return C;
}

}  // namespace

Matrix build_ms_generator(const MatFamily& A, const MatFamily& C,
                          const Generator& gen) {
  const int m0 = gen.m0;
  if (static_cast<int>(A.size()) != m0 || static_cast<int>(C.size()) != m0) {
    throw ModelError("coefficient family size does not match the generator");
  }
  const int n = static_cast<int>(A[0].rows());
  const int nn = n * n;
  const Matrix Inn = Matrix::Identity(nn, nn);
  const Matrix In = Matrix::Identity(n, n);
  Matrix G = Matrix::Zero(m0 * nn, m0 * nn);
  for (int i = 0; i < m0; ++i) {
    const size_t si = static_cast<size_t>(i);
    // vec(A M + M A' + C M C') = (I kron A + A kron I + C kron C) vec(M).
    G.block(i * nn, i * nn, nn, nn) =
        kron(In, A[si]) + kron(A[si], In) + kron(C[si], C[si]);
    // Chain redistribution: the i-block receives rate l_ji from block j.
    for (int j = 0; j < m0; ++j) {
      G.block(i * nn, j * nn, nn, nn) += gen.lambda(j, i) * Inn;
    }
  }
  return G;
}

double spectral_abscissa(const Matrix& M) {
  Eigen::EigenSolver<Matrix> es(M, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw SolverError("eigenvalue computation failed");
  }
  return es.eigenvalues().real().maxCoeff();
}

StabilityVerdict is_stabilizer(const LQModel& model, const MatFamily& Theta) {
  const MatFamily A_cl = closed_loop_A(model, Theta);
  const MatFamily C_cl = closed_loop_C(model, Theta);
  StabilityVerdict verdict;
  verdict.rho = spectral_abscissa(build_ms_generator(A_cl, C_cl, model.gen));
  verdict.stable = verdict.rho < 0.0;
  return verdict;
}

std::optional<DissipativityCertificate> try_dissipativity_certificate(
    const LQModel& model, const MatFamily& Theta) {
  const int m0 = model.m0();
  const int n = model.n;
  const MatFamily A_cl = closed_loop_A(model, Theta);
  const MatFamily C_cl = closed_loop_C(model, Theta);

  // Assemble the operator on the stacked symmetric coordinates and solve
  // lhs(Sigma) = -I regime-wise.
  const int d = sym_dim(n);
  const int dim = m0 * d;
  Matrix op(dim, dim);
  MatFamily probe(static_cast<size_t>(m0), Matrix::Zero(n, n));
  for (int j = 0; j < m0; ++j) {
    for (int c = 0; c < d; ++c) {
      probe[static_cast<size_t>(j)] = sym_basis_element(n, c);
      const MatFamily image = lyapunov_lhs(A_cl, C_cl, model.gen, probe);
      probe[static_cast<size_t>(j)] = Matrix::Zero(n, n);
      for (int i = 0; i < m0; ++i) {
        op.block(i * d, j * d + c, d, 1) =
            sym_coords(symmetrize(image[static_cast<size_t>(i)]), n);
      }
    }
  }
  Vector rhs(dim);
  for (int i = 0; i < m0; ++i) {
    rhs.segment(i * d, d) = sym_coords(-Matrix::Identity(n, n), n);
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(op);
  if (qr.rank() < dim) return std::nullopt;
  const Vector sol = qr.solve(rhs);
  if (!sol.allFinite()) return std::nullopt;

  DissipativityCertificate cert;
  cert.Sigma.resize(static_cast<size_t>(m0));
  double max_eig = 0.0;
  for (int i = 0; i < m0; ++i) {
    cert.Sigma[static_cast<size_t>(i)] = sym_from_coords(sol.segment(i * d, d), n);
    const double lo = min_eig_sym(cert.Sigma[static_cast<size_t>(i)]);
    if (lo <= 0.0) return std::nullopt;  // no certificate: loop not stable
    max_eig = std::max(max_eig, max_eig_sym(cert.Sigma[static_cast<size_t>(i)]));
  }
  // Shade the rate slightly below 1/max_eig so the slack stays nonnegative
  // under rounding.
  cert.delta = (1.0 - 1e-12) / max_eig;

  const MatFamily lhs = lyapunov_lhs(A_cl, C_cl, model.gen, cert.Sigma);
  double slack = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m0; ++i) {
    const Matrix margin =
        -lhs[static_cast<size_t>(i)] - cert.delta * cert.Sigma[static_cast<size_t>(i)];
    slack = std::min(slack, min_eig_sym(margin));
  }
  cert.slack = slack;
  if (!(cert.delta > 0.0) || slack < -1e-10) return std::nullopt;
  return cert;
}

DissipativityCertificate dissipativity_certificate(const LQModel& model,
                                                   const MatFamily& Theta) {
  auto cert = try_dissipativity_certificate(model, Theta);
  if (!cert) {
    throw SolverError(
        "no dissipativity certificate found (closed loop not mean-square "
        "stable?)");
  }
  return *cert;
}

double find_T0(const LQModel& model, const DRESolution& dre,
               const DissipativityCertificate& cert) {
  const int m0 = model.m0();
  const Generator& gen = model.gen;
  // ok(k): the halved-rate inequality holds at node k for every regime.
  auto node_ok = [&](int k) {
    const FeedbackGain gain = feedback_gain(model, dre.P[static_cast<size_t>(k)]);
    const MatFamily lhs = lyapunov_lhs(gain.A_cl, gain.C_cl, gen, cert.Sigma);
    for (int i = 0; i < m0; ++i) {
      const Matrix test = lhs[static_cast<size_t>(i)] +
                          0.5 * cert.delta * cert.Sigma[static_cast<size_t>(i)];
      if (max_eig_sym(test) > 1e-10) return false;
    }
    return true;
  };

  // Scan from the terminal end for the last node k* such that all nodes
  // 0..k* qualify; the lag is T - t(k*). Ties (first failing node) resolve
  // toward the larger lag because the scan stops at the failure.
  int k_star = -1;
  for (int k = 0; k <= dre.grid.num_steps; ++k) {
    if (node_ok(k)) {
      k_star = k;
    } else {
      break;
    }
  }
  if (k_star < 0) {
    throw SolverError(
        "horizon too short: the certificate inequality fails at every node");
  }
  return dre.T - dre.grid.node(k_star);
}

}  // namespace rslq
