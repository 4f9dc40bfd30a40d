#pragma once

#include "ntkfilter/image.hpp"

namespace ntkf {

/// Returned by psnr() for identical images.
inline constexpr double kPsnrCapDb = 999.0;

/// Peak signal-to-noise ratio of two normalized images, computed after
/// denormalizing and clipping both to [0, 1]. Symmetric in its arguments.
double psnr(const ImageTensor& estimate, const ImageTensor& reference);

/// Mean squared error over all channels and pixels, no clipping.
double mse(const ImageTensor& a, const ImageTensor& b);

double l2_norm(const ImageTensor& a);

}  // namespace ntkf
