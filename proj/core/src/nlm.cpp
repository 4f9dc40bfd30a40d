#include "ntkfilter/nlm.hpp"

#include <cmath>

#include "ntkfilter/errors.hpp"
#include "ntkfilter/kernel_maps.hpp"

namespace ntkf {

KernelMatrix nlm_filter(const ImageTensor& y, const NlmParams& params) {
  if (!(params.bandwidth > 0.0)) throw ConfigError("NLM bandwidth must be positive");
  if (params.patch_radius < 0) throw ConfigError("NLM patch radius must be >= 0");
  const ImageTensor lum = luminance(y);
  const Geometry g = lum.geometry();
  const PatchOffsets patch(2 * params.patch_radius + 1);
  const auto d = static_cast<Eigen::Index>(g.pixels());
  const auto n = static_cast<Eigen::Index>(patch.offsets.size());
  const auto ch = lum.channel(0);

  Eigen::MatrixXd p(d, n);
  for (int yy = 0; yy < g.height; ++yy)
    for (int x = 0; x < g.width; ++x)
      for (Eigen::Index a = 0; a < n; ++a) {
        const auto [dy, dx] = patch.offsets[a];
        p(yy * g.width + x, a) = ch[wrap_index(g, yy, x, dy, dx)];
      }

  const Eigen::VectorXd sq = p.rowwise().squaredNorm();
  Eigen::MatrixXd w = p * p.transpose();
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double dist = std::max(0.0, sq[i] + sq[j] - 2.0 * w(i, j));
      w(i, j) = i == j ? 1.0 : std::exp(-dist / params.bandwidth);
    }
  }
  const Eigen::VectorXd rows = w.rowwise().sum();
  w = rows.cwiseInverse().asDiagonal() * w;
  return KernelMatrix(std::move(w));
}

ImageTensor apply_filter(const KernelMatrix& w, const ImageTensor& y) {
  if (static_cast<Eigen::Index>(y.pixels()) != w.dim()) throw ShapeError("filter does not match image");
  ImageTensor out(y.channels(), y.geometry());
  for (int c = 0; c < y.channels(); ++c) out.channel_vector(c) = w.matrix() * y.channel_vector(c);
  return out;
}

}  // namespace ntkf
