#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Core>

namespace ntkf {

/// y = A x for a symmetric operator A.
using LinearOperator = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& y)>;

struct TopEigen {
  double value = 0.0;
  Eigen::VectorXd vector;
  int iterations = 0;
};

/// Largest eigenpair of a symmetric PSD operator by Lanczos with full
/// reorthogonalization. Stops once the Ritz residual drops below
/// rel_tol * value.
TopEigen top_eigenpair(const LinearOperator& op, Eigen::Index n, double rel_tol = 1e-10,
                       int max_steps = 300, std::uint64_t seed = 1);
TopEigen top_eigenpair(const Eigen::MatrixXd& m, double rel_tol = 1e-10);

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
struct SortedEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};
SortedEigen sorted_eigen(const Eigen::MatrixXd& symmetric);

}  // namespace ntkf
