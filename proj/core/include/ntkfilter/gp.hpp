#pragma once

#include <Eigen/Core>

#include "ntkfilter/image.hpp"
#include "ntkfilter/kernel_matrix.hpp"

namespace ntkf {

struct GpPosterior {
  ImageTensor mean;
  Eigen::VectorXd variance;  // posterior marginal variance per pixel
  bool jitter_added = false;
};

/// Posterior of z ~ N(0, sigma_z) observed as y = z + N(0, sigma_noise^2 I):
/// mean sigma_z (sigma_z + sigma_noise^2 I)^{-1} y, channel by channel.
/// A 1e-8 relative ridge is added when the system is singular.
GpPosterior gp_posterior(const KernelMatrix& sigma_z, const ImageTensor& y, double sigma_noise);

}  // namespace ntkf
