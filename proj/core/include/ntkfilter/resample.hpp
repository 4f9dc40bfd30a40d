#pragma once

#include <Eigen/SparseCore>

#include "ntkfilter/image.hpp"

namespace ntkf {

enum class ResampleKind { kBilinear, kNearest };
enum class ResampleDirection { kDown, kUp };

/// Factor-2 spatial resampling with periodic boundary, as a fixed linear map
/// M acting on a single channel. Rows of M sum to one.
///
/// Bilinear follows the half-pixel-center convention: downsampling averages
/// 2x2 blocks, upsampling weights the two nearest source pixels 3/4 and 1/4
/// along each axis.
class ResampleOperator {
 public:
  ResampleOperator(ResampleKind kind, ResampleDirection direction, Geometry input);

  ResampleKind kind() const noexcept { return kind_; }
  ResampleDirection direction() const noexcept { return direction_; }
  Geometry input_geometry() const noexcept { return in_; }
  Geometry output_geometry() const noexcept { return out_; }
  Eigen::Index in_dim() const noexcept { return static_cast<Eigen::Index>(in_.pixels()); }
  Eigen::Index out_dim() const noexcept { return static_cast<Eigen::Index>(out_.pixels()); }

  /// out_dim x in_dim.
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& matrix() const noexcept { return m_; }

 private:
  ResampleKind kind_;
  ResampleDirection direction_;
  Geometry in_;
  Geometry out_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> m_;
};

}  // namespace ntkf
