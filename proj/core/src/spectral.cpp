#include "ntkfilter/spectral.hpp"

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "ntkfilter/errors.hpp"

namespace ntkf {

TopEigen top_eigenpair(const LinearOperator& op, Eigen::Index n, double rel_tol, int max_steps,
                       std::uint64_t seed) {
  if (n <= 0) throw ShapeError("top_eigenpair on an empty operator");
  const int steps = static_cast<int>(std::min<Eigen::Index>(max_steps, n));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd basis(n, steps + 1);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = g(rng);
  basis.col(0) = v.normalized();

  std::vector<double> alpha, beta;
  Eigen::VectorXd w(n);
  TopEigen best;
  for (int j = 0; j < steps; ++j) {
    op(basis.col(j), w);
    const double a = basis.col(j).dot(w);
    alpha.push_back(a);
    // Two passes of classical Gram-Schmidt keep the basis orthogonal.
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd coef = basis.leftCols(j + 1).transpose() * w;
      w -= basis.leftCols(j + 1) * coef;
    }
    const double b = w.norm();

    const int k = j + 1;
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
      t(i, i) = alpha[i];
      if (i + 1 < k) t(i, i + 1) = t(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    const double theta = es.eigenvalues()[k - 1];
    const Eigen::VectorXd s = es.eigenvectors().col(k - 1);
    const double residual = b * std::abs(s[k - 1]);
    best.value = theta;
    best.iterations = k;
    best.vector = basis.leftCols(k) * s;

    if (residual <= rel_tol * std::abs(theta) || b <= 1e-300 || k == steps) break;
    beta.push_back(b);
    basis.col(k) = w / b;
  }
  best.vector.normalize();
  return best;
}

TopEigen top_eigenpair(const Eigen::MatrixXd& m, double rel_tol) {
  return top_eigenpair([&m](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y.noalias() = m * x; },
                       m.rows(), rel_tol);
}

SortedEigen sorted_eigen(const Eigen::MatrixXd& symmetric) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetric);
  if (es.info() != Eigen::Success) throw Error("eigendecomposition failed");
  SortedEigen out;
  out.values = es.eigenvalues().reverse();
  out.vectors = es.eigenvectors().rowwise().reverse();
  return out;
}

}  // namespace ntkf
