#include "ntkfilter/kernel_matrix.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iomanip>

#include <Eigen/Eigenvalues>

#include "ntkfilter/errors.hpp"

namespace ntkf {

static_assert(std::endian::native == std::endian::little,
              "matrix serialization assumes a little-endian host");

KernelMatrix::KernelMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) throw ShapeError("kernel matrix must be square");
}

KernelMatrix KernelMatrix::zeros(Eigen::Index dim) {
  return KernelMatrix(Eigen::MatrixXd::Zero(dim, dim));
}

KernelMatrix KernelMatrix::identity(Eigen::Index dim) {
  return KernelMatrix(Eigen::MatrixXd::Identity(dim, dim));
}

double KernelMatrix::asymmetry() const {
  const double scale = m_.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  return (m_ - m_.transpose()).cwiseAbs().maxCoeff() / scale;
}

bool KernelMatrix::is_numerically_psd(double rel_tol) const {
  if (dim() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m_ + m_.transpose()),
                                                    Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  return lmin >= -rel_tol * std::max(lmax, 0.0);
}

void write_matrix_binary(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  out.write(reinterpret_cast<const char*>(rm.data()),
            static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!out) throw IoError("failed writing " + path.string());
}

Eigen::MatrixXd read_matrix_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const auto bytes = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);
  std::uint64_t rows = 0;
  if (bytes < sizeof rows || !in.read(reinterpret_cast<char*>(&rows), sizeof rows)) {
    throw IoError(path.string() + ": truncated header");
  }
  const std::uint64_t payload = bytes - sizeof rows;
  if (rows == 0 || payload % (rows * sizeof(double)) != 0) {
    throw IoError(path.string() + ": payload size does not match row count");
  }
  const std::uint64_t cols = payload / (rows * sizeof(double));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  if (!in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(payload))) {
    throw IoError(path.string() + ": truncated payload");
  }
  return rm;
}

void write_matrix_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
}

}  // namespace ntkf
