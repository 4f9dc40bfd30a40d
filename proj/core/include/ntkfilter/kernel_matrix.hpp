#pragma once

#include <filesystem>

#include <Eigen/Core>

namespace ntkf {

/// Dense symmetric PSD d x d matrix: covariances Sigma_a, Sigma_delta, the
/// NTK filter and GP priors all use this type.
class KernelMatrix {
 public:
  KernelMatrix() = default;
  explicit KernelMatrix(Eigen::MatrixXd m);

  static KernelMatrix zeros(Eigen::Index dim);
  static KernelMatrix identity(Eigen::Index dim);

  Eigen::Index dim() const noexcept { return m_.rows(); }
  const Eigen::MatrixXd& matrix() const noexcept { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

  /// Max |K - K^T| relative to max |K|.
  double asymmetry() const;
  bool is_symmetric(double rel_tol = 1e-10) const { return asymmetry() <= rel_tol; }
  /// lambda_min >= -rel_tol * lambda_max.
  bool is_numerically_psd(double rel_tol = 1e-8) const;

 private:
  Eigen::MatrixXd m_;
};

/// Little-endian binary: uint64 row count, then rows*cols float64 values in
/// row-major order. The column count is implied by the payload size, which
/// lets d x m factor matrices share the format with square kernels.
void write_matrix_binary(const Eigen::MatrixXd& m, const std::filesystem::path& path);
Eigen::MatrixXd read_matrix_binary(const std::filesystem::path& path);

void write_matrix_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path);

}  // namespace ntkf
