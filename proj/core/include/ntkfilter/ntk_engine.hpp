#pragma once

#include <span>
#include <vector>

#include "ntkfilter/arch.hpp"
#include "ntkfilter/image.hpp"
#include "ntkfilter/kernel_matrix.hpp"

namespace ntkf {

/// Infinite-width per-channel covariance of every signal in the network.
/// after[l] is the covariance of layer l's output, living on grid[l].
struct ForwardCovariance {
  std::vector<KernelMatrix> after;
  std::vector<Geometry> grid;

  const KernelMatrix& output() const { return after.back(); }
};

/// Forward propagation of the input covariance through conv (A-map), relu
/// (V-map) and resampling (conjugation) layers. He scaling: a conv with
/// fan-in r^2 c multiplies by sigma_w^2, relu divides by it.
ForwardCovariance forward_covariance(const ArchSpec& arch, const ImageTensor& input);

struct NtkResult {
  KernelMatrix theta;         // eigen-normalized, lambda_max = 1
  KernelMatrix sigma_a_last;  // covariance of the preactivation entering the last relu
  double scale_applied = 1.0; // theta = scale_applied * raw kernel
};

/// Infinite-width NTK of the network output, divided by the hidden width,
/// then normalized to unit top eigenvalue.
NtkResult ntk_recursion(const ArchSpec& arch, const ImageTensor& input);
/// Same recursion without the normalization.
KernelMatrix ntk_unscaled(const ArchSpec& arch, const ImageTensor& input);

/// Overloads driven by the input covariance (averaged over input channels)
/// instead of an input image.
ForwardCovariance forward_covariance(const ArchSpec& arch, const KernelMatrix& input_cov, Geometry g);
NtkResult ntk_recursion(const ArchSpec& arch, const KernelMatrix& input_cov, Geometry g);
KernelMatrix ntk_unscaled(const ArchSpec& arch, const KernelMatrix& input_cov, Geometry g);

/// Expected input covariance of iid N(0, variance) noise images. The
/// resulting kernels do not depend on any particular noise draw.
KernelMatrix noise_input_covariance(Geometry g, double variance = 1.0);

/// Arc-cosine affinity (|p||q|/pi)(sin phi + (pi - phi) cos phi).
double closed_form_vanilla_kernel(std::span<const double> p, std::span<const double> q);

/// Periodic r x r patches of every pixel (rows), channels concatenated and
/// scaled by 1 / (r sqrt(c0)), so that P P^T is the first-layer covariance.
Eigen::MatrixXd extract_patches(const ImageTensor& image, int r, int stride = 1);

/// Columns of the unscaled single-hidden-layer kernel, d x m. Throws
/// UnsupportedArchitecture for anything but conv-relu-conv(1).
Eigen::MatrixXd kernel_columns(const ArchSpec& arch, const ImageTensor& input,
                               std::span<const int> column_indices);

/// Backpropagated gradient covariance for a squared loss with the given
/// residual and hidden width c. One matrix per relu, in layer order, each the
/// covariance of the gradient w.r.t. that relu's input preactivation.
std::vector<KernelMatrix> backward_covariance(const ArchSpec& arch, const ForwardCovariance& fwd,
                                              const ImageTensor& residual, int c);

}  // namespace ntkf
