#pragma once

#include "ntkfilter/image.hpp"
#include "ntkfilter/kernel_matrix.hpp"

namespace ntkf {

struct NlmParams {
  int patch_radius = 3;    // patches are (2 radius + 1)^2 pixels
  double bandwidth = 0.1;  // sigma^2 in exp(-|y_i - y_j|^2 / sigma^2), normalized units
};

/// Global non-local means filter, row-normalized. Affinities are computed on
/// the luminance so that colour channels share one filter.
KernelMatrix nlm_filter(const ImageTensor& y, const NlmParams& params);

/// W y for each channel.
ImageTensor apply_filter(const KernelMatrix& w, const ImageTensor& y);

}  // namespace ntkf
