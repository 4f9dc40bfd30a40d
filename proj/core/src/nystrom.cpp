#include "ntkfilter/nystrom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "ntkfilter/errors.hpp"
#include "ntkfilter/spectral.hpp"

namespace ntkf {

namespace {

struct Rect {
  int y0, x0, h, w;
  long area() const { return static_cast<long>(h) * w; }
};

void stratify(const Rect& rc, long k, int width, std::mt19937_64& rng, std::vector<int>& out) {
  if (k <= 0) return;
  if (k >= rc.area()) {
    for (int y = rc.y0; y < rc.y0 + rc.h; ++y)
      for (int x = rc.x0; x < rc.x0 + rc.w; ++x) out.push_back(y * width + x);
    return;
  }
  const int hy = rc.h / 2, hx = rc.w / 2;
  std::vector<Rect> parts;
  for (const auto& [y0, h] : {std::pair{rc.y0, hy}, std::pair{rc.y0 + hy, rc.h - hy}})
    for (const auto& [x0, w] : {std::pair{rc.x0, hx}, std::pair{rc.x0 + hx, rc.w - hx}})
      if (h > 0 && w > 0) parts.push_back({y0, x0, h, w});
  std::shuffle(parts.begin(), parts.end(), rng);

  // Systematic rounding of the area-proportional shares: each part gets the
  // floor or ceiling of its share and the counts sum to k.
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cum = 0.0;
  long taken = 0;
  for (const Rect& p : parts) {
    cum += static_cast<double>(k) * p.area() / rc.area();
    const long upto = static_cast<long>(std::floor(cum + u));
    const long n = std::min(upto - taken, p.area());
    stratify(p, n, width, rng, out);
    taken += n;
  }
}

}  // namespace

std::vector<int> sample_columns(Geometry geometry, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
  const long d = static_cast<long>(geometry.pixels());
  if (d == 0) throw ShapeError("empty geometry");
  const long m = std::clamp<long>(std::lround(fraction * static_cast<double>(d)), 1, d);
  std::mt19937_64 rng(seed);
  std::vector<int> out;
  out.reserve(m);
  stratify({0, 0, geometry.height, geometry.width}, m, geometry.width, rng, out);
  std::sort(out.begin(), out.end());
  return out;
}

NystromFactors nystrom_factorize(const Eigen::MatrixXd& theta_dm,
                                 std::span<const int> sample_indices, NystromBasis basis) {
  const Eigen::Index d = theta_dm.rows();
  const auto m = static_cast<Eigen::Index>(sample_indices.size());
  if (theta_dm.cols() != m || m == 0) throw ShapeError("theta_dm must have one column per sample");
  Eigen::MatrixXd block(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (sample_indices[i] < 0 || sample_indices[i] >= d) throw ShapeError("sample index out of range");
    block.row(i) = theta_dm.row(sample_indices[i]);
  }
  block = 0.5 * (block + block.transpose()).eval();

  SortedEigen es = sorted_eigen(block);
  NystromFactors f;
  f.sample_indices.assign(sample_indices.begin(), sample_indices.end());
  for (Eigen::Index i = 0; i < m; ++i) {
    if (es.values[i] < 0.0) {
      ++f.clipped_negative;
      es.values[i] = 0.0;
    }
  }
  const double lmax = es.values[0];
  if (!(lmax > 0.0)) throw Error("sampled kernel block is zero");
  Eigen::Index k = 0;
  while (k < m && es.values[k] > 1e-10 * lmax) ++k;

  const Eigen::VectorXd lt = es.values.head(k);
  const Eigen::MatrixXd vt = es.vectors.leftCols(k);
  Eigen::VectorXd lambda;
  if (basis == NystromBasis::kExtended) {
    const double ratio = static_cast<double>(m) / static_cast<double>(d);
    f.eigenimages = std::sqrt(ratio) * theta_dm * vt * lt.cwiseInverse().asDiagonal();
    lambda = lt / ratio;
  } else {
    // theta ~ F F^T with F = C V~ L~^{-1/2}; diagonalize F^T F = U S U^T,
    // then the eigenimages F U S^{-1/2} are orthonormal with eigenvalues S.
    const Eigen::MatrixXd fac = theta_dm * vt * lt.cwiseSqrt().cwiseInverse().asDiagonal();
    const SortedEigen small = sorted_eigen(fac.transpose() * fac);
    Eigen::Index kk = 0;
    while (kk < k && small.values[kk] > 1e-10 * small.values[0]) ++kk;
    lambda = small.values.head(kk);
    f.eigenimages =
        fac * small.vectors.leftCols(kk) * lambda.cwiseSqrt().cwiseInverse().asDiagonal();
  }
  f.scale_applied = 1.0 / lambda[0];
  f.eigenvalues = lambda * f.scale_applied;
  return f;
}

}  // namespace ntkf
