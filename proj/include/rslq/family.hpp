#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace rslq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A regime-indexed collection of matrices/vectors (one entry per chain state).
using MatFamily = std::vector<Matrix>;
using VecFamily = std::vector<Vector>;

// Thrown on malformed models or inputs that violate a structural requirement.
class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a solver detects blow-up, loss of regularity, or a failed
// internal consistency check.
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

inline Matrix symmetrize(const Matrix& M) { return 0.5 * (M + M.transpose()); }

inline double min_eig_sym(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(M),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double max_eig_sym(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(M),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

inline double family_norm(const MatFamily& F) {
  double v = 0.0;
  for (const auto& M : F) v = std::max(v, M.norm());
  return v;
}

inline double family_norm(const VecFamily& F) {
  double v = 0.0;
  for (const auto& x : F) v = std::max(v, x.norm());
  return v;
}

inline MatFamily zero_mat_family(int m0, int rows, int cols) {
  return MatFamily(static_cast<size_t>(m0), Matrix::Zero(rows, cols));
}

inline VecFamily zero_vec_family(int m0, int dim) {
  return VecFamily(static_cast<size_t>(m0), Vector::Zero(dim));
}

}  // namespace rslq
