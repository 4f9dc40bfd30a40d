#include "ntkfilter/ntk_engine.hpp"

#include <cmath>
#include <numbers>

#include "ntkfilter/errors.hpp"
#include "ntkfilter/kernel_maps.hpp"
#include "ntkfilter/spectral.hpp"

namespace ntkf {

namespace {

void check_input(const ArchSpec& arch, const ImageTensor& input) {
  arch.validate();
  if (arch.skip_connections) {
    throw UnsupportedArchitecture("skip connections are not supported by the analytic engine");
  }
  if (input.channels() != arch.input_channels) {
    throw ShapeError("input channels do not match the architecture");
  }
  arch.output_geometry(input.geometry());
}

KernelMatrix conv_map(const KernelMatrix& k, const Layer& l, Geometry g) {
  if (l.r == 1 && l.stride == 1) return k;
  return a_map(k, l.r, g, l.stride);
}

ResampleOperator resampler(const Layer& l, Geometry g) {
  return ResampleOperator(l.mode,
                          l.kind == LayerKind::kDown ? ResampleDirection::kDown
                                                     : ResampleDirection::kUp,
                          g);
}

Geometry next_grid(const Layer& l, Geometry g) {
  if (l.kind == LayerKind::kDown || (l.kind == LayerKind::kConv && l.stride == 2)) {
    return {g.height / 2, g.width / 2};
  }
  if (l.kind == LayerKind::kUp) return {g.height * 2, g.width * 2};
  return g;
}

KernelMatrix first_layer(const ImageTensor& input, const Layer& l, double sigma_w_sq) {
  const Eigen::MatrixXd p = extract_patches(input, l.r, l.stride);
  Eigen::MatrixXd k(p.rows(), p.rows());
  k.setZero();
  k.selfadjointView<Eigen::Lower>().rankUpdate(p, sigma_w_sq);
  k.triangularView<Eigen::StrictlyUpper>() = k.transpose();
  return KernelMatrix(std::move(k));
}

struct Recursion {
  ForwardCovariance fwd;
  KernelMatrix theta;
  KernelMatrix sigma_a_last;
};

// Joint forward pass: K is the per-channel covariance of the current signal,
// T its tangent kernel divided by the width.
// first_cov builds the covariance after the first conv from its layer.
template <class FirstCov>
Recursion run(const ArchSpec& arch, Geometry g, bool with_ntk, FirstCov first_cov) {
  const double s2 = arch.sigma_w_sq;
  Recursion out;
  KernelMatrix k, t;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const Layer& l = arch.layers[i];
    const Geometry gn = next_grid(l, g);
    switch (l.kind) {
      case LayerKind::kConv:
        if (i == 0) {
          k = first_cov(l);
          // First-layer weights contribute O(1/c) to the scaled kernel.
          if (with_ntk) t = KernelMatrix::zeros(k.dim());
        } else {
          if (with_ntk) {
            Eigen::MatrixXd sum = s2 * t.matrix() + static_cast<double>(l.r * l.r) * k.matrix();
            t = conv_map(KernelMatrix(std::move(sum)), l, g);
          }
          k = KernelMatrix(s2 * conv_map(k, l, g).matrix());
        }
        break;
      case LayerKind::kRelu:
        out.sigma_a_last = k;
        if (with_ntk) {
          t = KernelMatrix(vprime_map_relu(k, s2).matrix().cwiseProduct(t.matrix()) / s2);
        }
        k = KernelMatrix(v_map_relu(k, s2).matrix() / s2);
        break;
      case LayerKind::kDown:
      case LayerKind::kUp: {
        const ResampleOperator op = resampler(l, g);
        k = resample_conjugate(k, op);
        if (with_ntk) t = resample_conjugate(t, op);
        break;
      }
    }
    g = gn;
    out.fwd.after.push_back(k);
    out.fwd.grid.push_back(g);
  }
  out.theta = std::move(t);
  return out;
}

Recursion run(const ArchSpec& arch, const ImageTensor& input, bool with_ntk) {
  check_input(arch, input);
  return run(arch, input.geometry(), with_ntk,
             [&](const Layer& l) { return first_layer(input, l, arch.sigma_w_sq); });
}

Recursion run(const ArchSpec& arch, const KernelMatrix& input_cov, Geometry g, bool with_ntk) {
  arch.validate();
  if (arch.skip_connections) {
    throw UnsupportedArchitecture("skip connections are not supported by the analytic engine");
  }
  if (input_cov.dim() != g.pixels()) throw ShapeError("input covariance does not match the geometry");
  arch.output_geometry(g);
  return run(arch, g, with_ntk, [&](const Layer& l) {
    return KernelMatrix(arch.sigma_w_sq * a_map(input_cov, l.r, g, l.stride).matrix());
  });
}

NtkResult normalized(Recursion r) {
  const double lmax = top_eigenpair(r.theta.matrix()).value;
  NtkResult res;
  res.scale_applied = lmax > 0.0 ? 1.0 / lmax : 1.0;
  res.theta = KernelMatrix(res.scale_applied * r.theta.matrix());
  res.sigma_a_last = std::move(r.sigma_a_last);
  return res;
}

}  // namespace

ForwardCovariance forward_covariance(const ArchSpec& arch, const ImageTensor& input) {
  return run(arch, input, false).fwd;
}

ForwardCovariance forward_covariance(const ArchSpec& arch, const KernelMatrix& input_cov, Geometry g) {
  return run(arch, input_cov, g, false).fwd;
}

KernelMatrix ntk_unscaled(const ArchSpec& arch, const ImageTensor& input) {
  return run(arch, input, true).theta;
}

KernelMatrix ntk_unscaled(const ArchSpec& arch, const KernelMatrix& input_cov, Geometry g) {
  return run(arch, input_cov, g, true).theta;
}

NtkResult ntk_recursion(const ArchSpec& arch, const KernelMatrix& input_cov, Geometry g) {
  return normalized(run(arch, input_cov, g, true));
}

KernelMatrix noise_input_covariance(Geometry g, double variance) {
  return KernelMatrix(variance * Eigen::MatrixXd::Identity(g.pixels(), g.pixels()));
}

NtkResult ntk_recursion(const ArchSpec& arch, const ImageTensor& input) {
  return normalized(run(arch, input, true));
}

double closed_form_vanilla_kernel(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("patch lengths differ");
  double pp = 0.0, qq = 0.0, pq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    pp += p[i] * p[i];
    qq += q[i] * q[i];
    pq += p[i] * q[i];
  }
  return relu_v_entry(pp, qq, pq, 2.0);
}

Eigen::MatrixXd extract_patches(const ImageTensor& image, int r, int stride) {
  const PatchOffsets patch(r);
  const Geometry g = image.geometry();
  if (stride == 2 && (g.height % 2 || g.width % 2)) throw ShapeError("odd grid for stride 2");
  const Geometry out{g.height / stride, g.width / stride};
  const int c0 = image.channels();
  const double scale = 1.0 / (r * std::sqrt(static_cast<double>(c0)));
  const auto n_off = static_cast<Eigen::Index>(patch.offsets.size());
  Eigen::MatrixXd p(static_cast<Eigen::Index>(out.pixels()), n_off * c0);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const Eigen::Index row = y * out.width + x;
      for (int c = 0; c < c0; ++c) {
        const auto ch = image.channel(c);
        for (Eigen::Index a = 0; a < n_off; ++a) {
          const auto [dy, dx] = patch.offsets[a];
          p(row, c * n_off + a) = scale * ch[wrap_index(g, stride * y, stride * x, dy, dx)];
        }
      }
    }
  return p;
}

Eigen::MatrixXd kernel_columns(const ArchSpec& arch, const ImageTensor& input,
                               std::span<const int> column_indices) {
  check_input(arch, input);
  if (!arch.is_single_hidden_layer()) {
    throw UnsupportedArchitecture("column mode needs a single-hidden-layer architecture");
  }
  const Eigen::MatrixXd p = extract_patches(input, arch.layers[0].r);
  const Eigen::Index d = p.rows();
  const auto m = static_cast<Eigen::Index>(column_indices.size());
  for (int j : column_indices) {
    if (j < 0 || j >= d) throw ShapeError("column index out of range");
  }
  const Eigen::VectorXd sq = p.rowwise().squaredNorm();
  Eigen::MatrixXd sel(m, p.cols());
  for (Eigen::Index j = 0; j < m; ++j) sel.row(j) = p.row(column_indices[j]);
  const Eigen::MatrixXd dots = p * sel.transpose();
  const double s2 = arch.sigma_w_sq;
  Eigen::MatrixXd out(d, m);
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < m; ++j) {
    const double qq = sq[column_indices[j]];
    for (Eigen::Index i = 0; i < d; ++i) {
      // sigma_w^2 E[phi phi] of the preactivation covariance sigma_w^2 P P^T.
      out(i, j) = relu_v_entry(s2 * sq[i], s2 * qq, s2 * dots(i, j), s2) / s2;
    }
  }
  return out;
}

std::vector<KernelMatrix> backward_covariance(const ArchSpec& arch, const ForwardCovariance& fwd,
                                              const ImageTensor& residual, int c) {
  if (c < 1) throw ConfigError("width must be positive");
  if (fwd.after.size() != arch.layers.size()) {
    throw ShapeError("forward covariance does not belong to this architecture");
  }
  if (residual.channels() != arch.output_channels ||
      !(residual.geometry() == fwd.grid.back())) {
    throw ShapeError("residual does not match the network output");
  }
  const double s2 = arch.sigma_w_sq;
  const Eigen::MatrixXd r = residual.as_matrix();
  KernelMatrix s(r.transpose() * r / static_cast<double>(residual.channels()));
  double out_channels = residual.channels();

  std::vector<KernelMatrix> deltas;
  for (std::size_t i = arch.layers.size(); i-- > 1;) {
    const Layer& l = arch.layers[i];
    const Geometry g_in = fwd.grid[i - 1];
    switch (l.kind) {
      case LayerKind::kConv: {
        KernelMatrix back = (l.r == 1 && l.stride == 1) ? s : a_map_adjoint(s, l.r, g_in, l.stride);
        s = KernelMatrix((out_channels / c) * s2 * back.matrix());
        out_channels = c;
        break;
      }
      case LayerKind::kRelu:
        s = KernelMatrix(s.matrix().cwiseProduct(vprime_map_relu(fwd.after[i - 1], s2).matrix()) / s2);
        deltas.push_back(s);
        break;
      case LayerKind::kDown:
      case LayerKind::kUp:
        s = resample_conjugate_adjoint(s, resampler(l, g_in));
        break;
    }
  }
  return {deltas.rbegin(), deltas.rend()};
}

}  // namespace ntkf
