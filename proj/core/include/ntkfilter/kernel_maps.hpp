#pragma once

#include <utility>
#include <vector>

#include "ntkfilter/image.hpp"
#include "ntkfilter/kernel_matrix.hpp"
#include "ntkfilter/resample.hpp"

namespace ntkf {

/// Offsets (dy, dx) of an r x r patch centred on a pixel, r odd.
struct PatchOffsets {
  explicit PatchOffsets(int r);
  int r;
  std::vector<std::pair<int, int>> offsets;
};

/// Index of pixel (y + dy, x + dx) on the periodic grid.
inline int wrap_index(Geometry g, int y, int x, int dy, int dx) {
  int yy = (y + dy) % g.height;
  int xx = (x + dx) % g.width;
  if (yy < 0) yy += g.height;
  if (xx < 0) xx += g.width;
  return yy * g.width + xx;
}

/// Covariance action of an r x r convolution with iid zero-mean weights:
///   [A S]_ij = (1/r^2) sum_a S_{p(i)+a, p(j)+a}
/// where a runs over the patch offsets and p maps an output pixel to its
/// input centre (identity for stride 1, 2*(y, x) for stride 2). Periodic
/// boundary. With stride 2 the output lives on the (H/2) x (W/2) grid.
KernelMatrix a_map(const KernelMatrix& sigma, int r, Geometry geometry, int stride = 1);

/// Adjoint of a_map under the Frobenius inner product; maps an output-grid
/// matrix back to the input grid. Equal to a_map itself for stride 1.
KernelMatrix a_map_adjoint(const KernelMatrix& sigma, int r, Geometry input_geometry,
                           int stride = 1);

/// Closed-form relu entry sigma_w^2 E[relu(u) relu(v)] for (u, v) ~ N(0, [[s11, s12], [s12, s22]]).
double relu_v_entry(double s11, double s22, double s12, double sigma_w_sq = 2.0);
/// sigma_w^2 E[relu'(u) relu'(v)].
double relu_vprime_entry(double s11, double s22, double s12, double sigma_w_sq = 2.0);

/// V-map: sigma_w^2 E[relu(h) relu(h)^T], h ~ N(0, Sigma). Rows/columns with a
/// zero diagonal map to zero.
KernelMatrix v_map_relu(const KernelMatrix& sigma, double sigma_w_sq = 2.0);
/// V'-map: sigma_w^2 E[relu'(h) relu'(h)^T].
KernelMatrix vprime_map_relu(const KernelMatrix& sigma, double sigma_w_sq = 2.0);

/// M Sigma M^T.
KernelMatrix resample_conjugate(const KernelMatrix& sigma, const ResampleOperator& op);
/// M^T Sigma M, the backward-pass counterpart.
KernelMatrix resample_conjugate_adjoint(const KernelMatrix& sigma, const ResampleOperator& op);

}  // namespace ntkf
