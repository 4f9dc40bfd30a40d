#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ntkfilter/image.hpp"

namespace ntkf {

/// How eigenimages are extended from the sampled block to all pixels.
enum class NystromBasis {
  /// Rank-m factor of C W^+ C^T, re-diagonalized: eigenimages are orthonormal.
  kOrthonormal,
  /// v = sqrt(m/d) C v~ / lambda~, lambda = (d/m) lambda~; not orthogonal.
  kExtended,
};

struct NystromFactors {
  std::vector<int> sample_indices;
  Eigen::VectorXd eigenvalues;  // descending, max 1
  Eigen::MatrixXd eigenimages;  // d x k, k <= m
  double scale_applied = 1.0;   // eigenvalues = scale_applied * raw estimates
  int clipped_negative = 0;     // negative eigenvalues of the sampled block set to zero
};

/// m = max(1, round(fraction * d)) distinct pixels spread over the grid by
/// recursive quadrant stratification with randomized rounding. Sorted.
std::vector<int> sample_columns(Geometry geometry, double fraction, std::uint64_t seed);

/// theta_dm holds the sampled columns; its rows at sample_indices form the
/// m x m block.
NystromFactors nystrom_factorize(const Eigen::MatrixXd& theta_dm,
                                 std::span<const int> sample_indices,
                                 NystromBasis basis = NystromBasis::kOrthonormal);

}  // namespace ntkf
