#include "ntkfilter/kernel_maps.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ntkfilter/errors.hpp"

namespace ntkf {

PatchOffsets::PatchOffsets(int r_) : r(r_) {
  if (r <= 0 || r % 2 == 0) throw ConfigError("patch size must be a positive odd integer");
  const int h = r / 2;
  offsets.reserve(static_cast<std::size_t>(r) * r);
  for (int dy = -h; dy <= h; ++dy)
    for (int dx = -h; dx <= h; ++dx) offsets.emplace_back(dy, dx);
}

namespace {

// For every patch offset, the input index read by each output pixel.
std::vector<std::vector<int>> shifted_indices(int r, Geometry in, int stride) {
  if (stride != 1 && stride != 2) throw ConfigError("stride must be 1 or 2");
  if (stride == 2 && (in.height % 2 || in.width % 2)) {
    throw ShapeError("stride-2 convolution needs even height and width");
  }
  const Geometry out{in.height / stride, in.width / stride};
  const PatchOffsets patch(r);
  std::vector<std::vector<int>> idx(patch.offsets.size(), std::vector<int>(out.pixels()));
  for (std::size_t a = 0; a < patch.offsets.size(); ++a) {
    const auto [dy, dx] = patch.offsets[a];
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        idx[a][y * out.width + x] = wrap_index(in, stride * y, stride * x, dy, dx);
  }
  return idx;
}

}  // namespace

KernelMatrix a_map(const KernelMatrix& sigma, int r, Geometry geometry, int stride) {
  if (sigma.dim() != static_cast<Eigen::Index>(geometry.pixels())) throw ShapeError("a_map: sigma does not match geometry");
  const auto idx = shifted_indices(r, geometry, stride);
  const Eigen::Index n = static_cast<Eigen::Index>(idx.front().size());
  const Eigen::MatrixXd& s = sigma.matrix();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  const double w = 1.0 / (static_cast<double>(r) * r);
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < n; ++j) {
    for (const auto& sa : idx) {
      const double* col = s.col(sa[j]).data();
      double* o = out.col(j).data();
      for (Eigen::Index i = 0; i < n; ++i) o[i] += col[sa[i]];
    }
  }
  out *= w;
  return KernelMatrix(std::move(out));
}

KernelMatrix a_map_adjoint(const KernelMatrix& sigma, int r, Geometry input_geometry,
                           int stride) {
  if (stride == 1) return a_map(sigma, r, input_geometry, 1);
  const auto idx = shifted_indices(r, input_geometry, stride);
  const Eigen::Index n = static_cast<Eigen::Index>(idx.front().size());
  if (sigma.dim() != n) throw ShapeError("a_map_adjoint: sigma does not match output grid");
  const Eigen::Index d = input_geometry.pixels();
  const Eigen::MatrixXd& s = sigma.matrix();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, d);
  // Each offset's index map is injective, so columns never collide within one offset.
  for (const auto& sa : idx) {
#pragma omp parallel for schedule(static)
    for (Eigen::Index j = 0; j < n; ++j) {
      double* o = out.col(sa[j]).data();
      const double* col = s.col(j).data();
      for (Eigen::Index i = 0; i < n; ++i) o[sa[i]] += col[i];
    }
  }
  out /= static_cast<double>(r) * r;
  return KernelMatrix(std::move(out));
}

namespace {

double clamped_angle(double s11, double s22, double s12) {
  const double c = std::clamp(s12 / std::sqrt(s11 * s22), -1.0, 1.0);
  return std::acos(c);
}

}  // namespace

double relu_v_entry(double s11, double s22, double s12, double sigma_w_sq) {
  if (s11 <= 0.0 || s22 <= 0.0) return 0.0;
  const double phi = clamped_angle(s11, s22, s12);
  const double pi = std::numbers::pi;
  return 0.5 * sigma_w_sq * std::sqrt(s11 * s22) / pi *
         (std::sin(phi) + (pi - phi) * std::cos(phi));
}

double relu_vprime_entry(double s11, double s22, double s12, double sigma_w_sq) {
  if (s11 <= 0.0 || s22 <= 0.0) return 0.0;
  const double phi = clamped_angle(s11, s22, s12);
  return 0.5 * sigma_w_sq * (1.0 - phi / std::numbers::pi);
}

namespace {

template <typename F>
KernelMatrix entrywise(const KernelMatrix& sigma, F f) {
  const Eigen::MatrixXd& s = sigma.matrix();
  const Eigen::Index n = s.rows();
  Eigen::MatrixXd out(n, n);
#pragma omp parallel for schedule(dynamic, 16)
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      const double v = f(s(i, i), s(j, j), 0.5 * (s(i, j) + s(j, i)));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return KernelMatrix(std::move(out));
}

}  // namespace

KernelMatrix v_map_relu(const KernelMatrix& sigma, double sigma_w_sq) {
  return entrywise(sigma, [sigma_w_sq](double a, double b, double c) {
    return relu_v_entry(a, b, c, sigma_w_sq);
  });
}

KernelMatrix vprime_map_relu(const KernelMatrix& sigma, double sigma_w_sq) {
  return entrywise(sigma, [sigma_w_sq](double a, double b, double c) {
    return relu_vprime_entry(a, b, c, sigma_w_sq);
  });
}

KernelMatrix resample_conjugate(const KernelMatrix& sigma, const ResampleOperator& op) {
  if (sigma.dim() != op.in_dim()) throw ShapeError("resample: sigma does not match input grid");
  const auto& m = op.matrix();
  Eigen::MatrixXd ms = m * sigma.matrix();
  Eigen::MatrixXd out = (m * ms.transpose()).transpose();
  return KernelMatrix(std::move(out));
}

KernelMatrix resample_conjugate_adjoint(const KernelMatrix& sigma, const ResampleOperator& op) {
  if (sigma.dim() != op.out_dim()) throw ShapeError("resample: sigma does not match output grid");
  const Eigen::SparseMatrix<double> mt = op.matrix().transpose();
  Eigen::MatrixXd ms = mt * sigma.matrix();
  Eigen::MatrixXd out = (mt * ms.transpose()).transpose();
  return KernelMatrix(std::move(out));
}

}  // namespace ntkf
