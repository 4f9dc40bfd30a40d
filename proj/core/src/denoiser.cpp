#include "ntkfilter/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>

#include "ntkfilter/errors.hpp"
#include "ntkfilter/metrics.hpp"
#include "ntkfilter/spectral.hpp"

namespace ntkf {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

ImageTensor from_rows(const RowMat& m, Geometry g) {
  return ImageTensor(static_cast<int>(m.rows()), g,
                     std::vector<double>(m.data(), m.data() + m.size()));
}

void check_pair(const ImageTensor& y, const ImageTensor& oracle, Eigen::Index d) {
  if (!y.same_shape(oracle)) throw ShapeError("noisy and oracle images differ in shape");
  if (static_cast<Eigen::Index>(y.pixels()) != d) throw ShapeError("filter does not match image");
}

struct Tracker {
  TwicingTrace trace;
  void record(long t, const ImageTensor& z, const ImageTensor& y, const ImageTensor& oracle) {
    const double p = psnr(z, oracle);
    trace.iterations.push_back(t);
    trace.psnr.push_back(p);
    trace.residual.push_back(l2_norm(y - z));
    if (trace.best_output.empty() || p > trace.best_psnr) {
      trace.best_psnr = p;
      trace.best_iteration = t;
      trace.best_output = z;
    }
  }
};

}  // namespace

TwicingTrace twicing_matrix(const KernelMatrix& w, const ImageTensor& y, const ImageTensor& oracle,
                            long max_iters, long patience) {
  check_pair(y, oracle, w.dim());
  const double lmax = top_eigenpair(w.matrix(), 1e-8).value;
  if (lmax > 2.0 - 1e-6) {
    throw DivergenceError("filter top eigenvalue " + std::to_string(lmax) + " makes twicing diverge", 0);
  }
  const RowMat ym = y.as_matrix();
  RowMat z = RowMat::Zero(ym.rows(), ym.cols());
  Tracker tr;
  for (long t = 1; t <= max_iters; ++t) {
    z += (ym - z) * w.matrix().transpose();
    if (!z.allFinite()) throw DivergenceError("non-finite twicing iterate", t);
    tr.record(t, from_rows(z, y.geometry()), y, oracle);
    if (t - tr.trace.best_iteration >= patience) break;
  }
  return tr.trace;
}

ImageTensor spectral_output(const Eigen::VectorXd& eigenvalues, const Eigen::MatrixXd& eigenimages,
                            const ImageTensor& y, double t) {
  if (eigenimages.rows() != static_cast<Eigen::Index>(y.pixels()) ||
      eigenimages.cols() != eigenvalues.size()) {
    throw ShapeError("eigensystem does not match image");
  }
  Eigen::VectorXd gain(eigenvalues.size());
  for (Eigen::Index i = 0; i < gain.size(); ++i) gain[i] = 1.0 - std::pow(1.0 - eigenvalues[i], t);
  const RowMat ym = y.as_matrix();
  const RowMat coef = (ym * eigenimages) * gain.asDiagonal();
  return from_rows(coef * eigenimages.transpose(), y.geometry());
}

TwicingTrace twicing_spectral(const NystromFactors& f, const ImageTensor& y,
                              const ImageTensor& oracle, long max_iters, long patience) {
  check_pair(y, oracle, f.eigenimages.rows());
  if (max_iters < 1) throw ConfigError("max_iters must be positive");
  const Eigen::MatrixXd& v = f.eigenimages;
  const RowMat coef = y.as_matrix() * v;
  std::set<long> done;
  Tracker tr;
  auto eval = [&](long t) {
    if (!done.insert(t).second) return;
    Eigen::VectorXd gain(f.eigenvalues.size());
    for (Eigen::Index i = 0; i < gain.size(); ++i) {
      gain[i] = 1.0 - std::pow(1.0 - f.eigenvalues[i], static_cast<double>(t));
    }
    const RowMat z = (coef * gain.asDiagonal()) * v.transpose();
    if (!z.allFinite()) throw DivergenceError("non-finite spectral iterate", t);
    tr.record(t, from_rows(z, y.geometry()), y, oracle);
  };

  for (long t = 1; t <= max_iters; t *= 2) {
    eval(t);
    if (t - tr.trace.best_iteration >= patience) break;
    if (t > max_iters / 2 && t != max_iters) eval(max_iters);
  }
  const long tb = tr.trace.best_iteration;
  const long lo = std::max(1L, tb / 2), hi = std::min(max_iters, 2 * tb);
  const long step = std::max(1L, (hi - lo) / 256);
  for (long t = lo; t <= hi; t += step) eval(t);

  // Present the trace in iteration order.
  std::vector<std::size_t> order(tr.trace.iterations.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return tr.trace.iterations[a] < tr.trace.iterations[b];
  });
  TwicingTrace out = tr.trace;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.iterations[i] = tr.trace.iterations[order[i]];
    out.psnr[i] = tr.trace.psnr[order[i]];
    out.residual[i] = tr.trace.residual[order[i]];
  }
  return out;
}

double predict_mse(const Eigen::VectorXd& eigvals, const Eigen::MatrixXd& eigvecs,
                   const ImageTensor& clean, double sigma, double t) {
  if (eigvecs.rows() != static_cast<Eigen::Index>(clean.pixels()) ||
      eigvecs.cols() != eigvals.size()) {
    throw ShapeError("eigensystem does not match image");
  }
  double total = 0.0;
  for (int c = 0; c < clean.channels(); ++c) {
    const Eigen::VectorXd x = clean.channel_vector(c);
    const Eigen::VectorXd proj = eigvecs.transpose() * x;
    total += std::max(0.0, x.squaredNorm() - proj.squaredNorm());
    for (Eigen::Index i = 0; i < eigvals.size(); ++i) {
      const double keep = std::pow(1.0 - eigvals[i], t);
      total += keep * keep * proj[i] * proj[i] + (1.0 - keep) * (1.0 - keep) * sigma * sigma;
    }
  }
  return total / static_cast<double>(clean.size());
}

void write_trace_csv(const TwicingTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "iteration,psnr_db,residual_l2\n" << std::setprecision(10);
  for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
    out << trace.iterations[i] << ',' << trace.psnr[i] << ',' << trace.residual[i] << '\n';
  }
}

}  // namespace ntkf
