#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "ntkfilter/image.hpp"
#include "ntkfilter/kernel_matrix.hpp"
#include "ntkfilter/nystrom.hpp"

namespace ntkf {

struct TwicingTrace {
  std::vector<long> iterations;
  std::vector<double> psnr;      // against the oracle
  std::vector<double> residual;  // ||y - z^t||_2
  long best_iteration = 0;
  double best_psnr = 0.0;
  ImageTensor best_output;
};

/// Stop once the best PSNR is this many iterations old.
inline constexpr long kTwicingPatience = 50;

/// z^{t+1} = z^t + W (y - z^t) from z^0 = 0, each channel filtered with the
/// same W. Throws DivergenceError when lambda_max(W) >= 2.
TwicingTrace twicing_matrix(const KernelMatrix& w, const ImageTensor& y, const ImageTensor& oracle,
                            long max_iters, long patience = kTwicingPatience);

/// z^t = sum_i (1 - (1 - lambda_i)^t) (v_i^T y) v_i.
ImageTensor spectral_output(const Eigen::VectorXd& eigenvalues, const Eigen::MatrixXd& eigenimages,
                            const ImageTensor& y, double t);

/// Closed-form twicing evaluated on t = 1, 2, 4, ... until the best t is
/// `patience` iterations old, then on an even grid over [t*/2, 2t*].
TwicingTrace twicing_spectral(const NystromFactors& factors, const ImageTensor& y,
                              const ImageTensor& oracle, long max_iters,
                              long patience = kTwicingPatience);

/// Expected per-pixel MSE of twicing after t steps for clean image `clean`
/// and noise standard deviation `sigma` (normalized units). Energy of the
/// clean image outside the span of `eigvecs` counts as bias.
double predict_mse(const Eigen::VectorXd& eigvals, const Eigen::MatrixXd& eigvecs,
                   const ImageTensor& clean, double sigma, double t);

/// CSV rows: iteration,psnr_db,residual_l2.
void write_trace_csv(const TwicingTrace& trace, const std::filesystem::path& path);

}  // namespace ntkf
