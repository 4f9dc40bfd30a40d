#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "ntkfilter/arch.hpp"
#include "ntkfilter/image.hpp"
#include "ntkfilter/kernel_matrix.hpp"
#include "ntkfilter/optimizer.hpp"
#include "ntkfilter/spectral.hpp"

namespace ntkf {

/// Per-conv weight matrices, c_out x (c_in * r^2); column j * r^2 + a holds
/// input channel j at patch offset a.
using Weights = std::vector<Eigen::MatrixXd>;

/// Signals are channels x pixels.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> signals;  // signals[l] is the input of layer l; back() is the output
};

/// Finite-width bias-free CNN with periodic convolutions and He-initialized
/// weights N(0, sigma_w^2 / (r^2 c_in)).
class FiniteCnn {
 public:
  FiniteCnn(ArchSpec arch, int width, Geometry geometry, std::uint64_t seed);

  const ArchSpec& arch() const noexcept { return arch_; }
  int width() const noexcept { return width_; }
  Geometry geometry() const noexcept { return geometry_; }
  Weights& weights() noexcept { return w_; }
  const Weights& weights() const noexcept { return w_; }
  std::size_t num_weights() const;
  /// Layer index of each entry of weights().
  const std::vector<std::size_t>& conv_layers() const noexcept { return conv_layers_; }

  ForwardCache forward(const ImageTensor& x) const;
  ImageTensor output(const ImageTensor& x) const;
  /// J^T g for an output cotangent g. When signal_grads is given it receives
  /// the gradient w.r.t. every cached signal except the input.
  Weights vjp(const ForwardCache& cache, const ImageTensor& g,
              std::vector<Eigen::MatrixXd>* signal_grads = nullptr) const;
  /// J dw.
  ImageTensor jvp(const ForwardCache& cache, const Weights& dw) const;

  /// Preactivation entering the last relu (channels x pixels).
  const Eigen::MatrixXd& last_preactivation(const ForwardCache& cache) const;

 private:
  struct ConvPlan {
    int r, stride, c_in, c_out;
    Geometry in, out;
    std::vector<int> gather;  // (offset, out pixel) -> input pixel
  };

  Eigen::MatrixXd im2col(const ConvPlan& p, const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd col2im(const ConvPlan& p, const Eigen::MatrixXd& cols) const;

  ArchSpec arch_;
  int width_;
  Geometry geometry_;
  Weights w_;
  std::vector<std::size_t> conv_layers_;
  std::vector<std::optional<ConvPlan>> plans_;                 // per layer
  std::vector<std::optional<Eigen::SparseMatrix<double>>> resample_;  // per layer, M^T (in x out)
  std::vector<int> skip_source_;  // per layer: index of the saved signal added to its output, or -1
  std::size_t last_relu_ = 0;
};

Eigen::MatrixXd to_signal(const ImageTensor& x);
ImageTensor from_signal(const Eigen::MatrixXd& s, Geometry g);

double weights_dot(const Weights& a, const Weights& b);

struct EmpiricalNtk {
  KernelMatrix theta;  // eigen-normalized
  double scale_applied = 1.0;
  KernelMatrix raw() const { return KernelMatrix(theta.matrix() / scale_applied); }
};

/// Entries of the d x P Jacobian allowed in empirical_ntk.
inline constexpr double kJacobianEntryLimit = 6e7;

/// J J^T via one backward pass per output pixel (single output channel).
EmpiricalNtk empirical_ntk(const FiniteCnn& net, const ImageTensor& x);

/// Top eigenpair of J J^T from Jacobian-vector products.
TopEigen ntk_top_eigen(const FiniteCnn& net, const ImageTensor& x, double rel_tol = 1e-6);

/// Top-k eigenimages of (1/c) A A^T, A the preactivation entering the last relu.
SortedEigen preactivation_eigenvectors(const FiniteCnn& net, const ImageTensor& x, int k);

struct WeightChangeReport {
  std::vector<double> layer_max_change;  // running max_t max |w^t - w^0| per conv layer
  double hidden_max_change = 0.0;        // over conv layers strictly between first and last
  double last_max_change = 0.0;
  double global_l2_change = 0.0;         // ||w^t - w^0||_2 at the end
};

struct TelemetryRow {
  long iteration = 0;
  double loss = 0.0;
  double psnr = 0.0;  // NaN without an oracle
  std::vector<double> layer_max_change;
};

struct TrainOptions {
  long iters = 0;
  long telemetry_every = 1;
  /// Report z - z^0 instead of z (image-input runs start from a zero output).
  bool translate_output = false;
  std::optional<ImageTensor> oracle;
  std::vector<long> snapshot_at;
};

struct TrainResult {
  std::vector<TelemetryRow> telemetry;
  std::map<long, ImageTensor> snapshots;
  ImageTensor best_output;
  long best_iteration = 0;
  double best_psnr = 0.0;
  ImageTensor final_output;
  WeightChangeReport report;
};

/// A loss this many times its initial value counts as divergence.
inline constexpr double kDivergenceFactor = 1e8;

/// Minimizes 0.5 ||z(w) - y||^2 in place. Throws DivergenceError when the
/// loss becomes non-finite or exceeds kDivergenceFactor times its start.
TrainResult train(FiniteCnn& net, Optimizer& opt, const ImageTensor& x, const ImageTensor& y,
                  const TrainOptions& options);

/// GD step size with lambda_max(eta J J^T) = gamma.
double gd_learning_rate(const FiniteCnn& net, const ImageTensor& x, double gamma = 1.0);

void write_telemetry_csv(const TrainResult& result, const std::filesystem::path& path);

}  // namespace ntkf
