#include "ntkfilter/finite_cnn.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

#include "ntkfilter/errors.hpp"
#include "ntkfilter/kernel_maps.hpp"
#include "ntkfilter/metrics.hpp"
#include "ntkfilter/resample.hpp"

namespace ntkf {

Eigen::MatrixXd to_signal(const ImageTensor& x) { return x.as_matrix(); }

ImageTensor from_signal(const Eigen::MatrixXd& s, Geometry g) {
  ImageTensor out(static_cast<int>(s.rows()), g);
  for (int c = 0; c < out.channels(); ++c) out.channel_vector(c) = s.row(c).transpose();
  return out;
}

double weights_dot(const Weights& a, const Weights& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i].array() * b[i].array()).sum();
  return s;
}

FiniteCnn::FiniteCnn(ArchSpec arch, int width, Geometry geometry, std::uint64_t seed)
    : arch_(std::move(arch)), width_(width), geometry_(geometry) {
  arch_.validate();
  arch_.output_geometry(geometry_);
  if (width_ < 1) throw ConfigError("width must be positive");

  std::mt19937_64 rng(seed);
  const std::size_t n_layers = arch_.layers.size();
  plans_.resize(n_layers);
  resample_.resize(n_layers);
  skip_source_.assign(n_layers, -1);
  std::vector<int> downs;
  const int n_conv = arch_.conv_count();
  int conv_seen = 0;
  Geometry g = geometry_;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Layer& layer = arch_.layers[l];
    switch (layer.kind) {
      case LayerKind::kConv: {
        ConvPlan p;
        p.r = layer.r;
        p.stride = layer.stride;
        p.c_in = conv_seen == 0 ? arch_.input_channels : width_;
        p.c_out = conv_seen + 1 == n_conv ? arch_.output_channels : width_;
        p.in = g;
        p.out = {g.height / layer.stride, g.width / layer.stride};
        const PatchOffsets patch(layer.r);
        const int dout = static_cast<int>(p.out.pixels());
        p.gather.resize(patch.offsets.size() * dout);
        for (std::size_t a = 0; a < patch.offsets.size(); ++a) {
          const auto [dy, dx] = patch.offsets[a];
          for (int y = 0; y < p.out.height; ++y)
            for (int x = 0; x < p.out.width; ++x)
              p.gather[a * dout + y * p.out.width + x] =
                  wrap_index(g, p.stride * y, p.stride * x, dy, dx);
        }
        const double sd = std::sqrt(arch_.sigma_w_sq / (layer.r * layer.r * p.c_in));
        std::normal_distribution<double> dist(0.0, sd);
        Eigen::MatrixXd w(p.c_out, p.c_in * layer.r * layer.r);
        for (Eigen::Index j = 0; j < w.cols(); ++j)
          for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
        w_.push_back(std::move(w));
        conv_layers_.push_back(l);
        g = p.out;
        plans_[l] = std::move(p);
        ++conv_seen;
        break;
      }
      case LayerKind::kRelu:
        last_relu_ = l;
        break;
      case LayerKind::kDown:
      case LayerKind::kUp: {
        const bool down = layer.kind == LayerKind::kDown;
        const ResampleOperator op(layer.mode, down ? ResampleDirection::kDown : ResampleDirection::kUp, g);
        resample_[l] = Eigen::SparseMatrix<double>(op.matrix().transpose());
        if (arch_.skip_connections) {
          if (down) {
            downs.push_back(static_cast<int>(l));
          } else {
            skip_source_[l] = downs.back();
            downs.pop_back();
          }
        }
        g = op.output_geometry();
        break;
      }
    }
  }
  if (arch_.skip_connections) {
    // Skip targets must carry as many channels as their sources.
    for (std::size_t l = 0; l < n_layers; ++l) {
      if (skip_source_[l] < 0) continue;
      if (skip_source_[l] == 0 && arch_.input_channels != width_) {
        throw ConfigError("skip connection from the input needs input_channels == width");
      }
    }
  }
}

std::size_t FiniteCnn::num_weights() const {
  std::size_t n = 0;
  for (const auto& w : w_) n += static_cast<std::size_t>(w.size());
  return n;
}

Eigen::MatrixXd FiniteCnn::im2col(const ConvPlan& p, const Eigen::MatrixXd& x) const {
  const int r2 = p.r * p.r;
  const Eigen::Index dout = static_cast<Eigen::Index>(p.out.pixels());
  Eigen::MatrixXd cols(static_cast<Eigen::Index>(p.c_in) * r2, dout);
  for (Eigen::Index q = 0; q < dout; ++q)
    for (int a = 0; a < r2; ++a) {
      const int src = p.gather[a * dout + q];
      for (int j = 0; j < p.c_in; ++j) cols(j * r2 + a, q) = x(j, src);
    }
  return cols;
}

Eigen::MatrixXd FiniteCnn::col2im(const ConvPlan& p, const Eigen::MatrixXd& cols) const {
  const int r2 = p.r * p.r;
  const Eigen::Index dout = static_cast<Eigen::Index>(p.out.pixels());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(p.c_in, static_cast<Eigen::Index>(p.in.pixels()));
  for (Eigen::Index q = 0; q < dout; ++q)
    for (int a = 0; a < r2; ++a) {
      const int dst = p.gather[a * dout + q];
      for (int j = 0; j < p.c_in; ++j) x(j, dst) += cols(j * r2 + a, q);
    }
  return x;
}

ForwardCache FiniteCnn::forward(const ImageTensor& x) const {
  if (x.channels() != arch_.input_channels || !(x.geometry() == geometry_)) {
    throw ShapeError("network input has the wrong shape");
  }
  ForwardCache cache;
  cache.signals.reserve(arch_.layers.size() + 1);
  cache.signals.push_back(to_signal(x));
  std::size_t wi = 0;
  for (std::size_t l = 0; l < arch_.layers.size(); ++l) {
    const Eigen::MatrixXd& s = cache.signals[l];
    Eigen::MatrixXd next;
    switch (arch_.layers[l].kind) {
      case LayerKind::kConv: next = w_[wi++] * im2col(*plans_[l], s); break;
      case LayerKind::kRelu: next = s.cwiseMax(0.0); break;
      case LayerKind::kDown:
      case LayerKind::kUp: next = s * *resample_[l]; break;
    }
    if (skip_source_[l] >= 0) next += cache.signals[skip_source_[l]];
    cache.signals.push_back(std::move(next));
  }
  return cache;
}

ImageTensor FiniteCnn::output(const ImageTensor& x) const {
  return from_signal(forward(x).signals.back(), geometry_);
}

Weights FiniteCnn::vjp(const ForwardCache& cache, const ImageTensor& g_img,
                       std::vector<Eigen::MatrixXd>* signal_grads) const {
  Weights grads(w_.size());
  Eigen::MatrixXd g = to_signal(g_img);
  if (g.rows() != cache.signals.back().rows() || g.cols() != cache.signals.back().cols()) {
    throw ShapeError("cotangent does not match the network output");
  }
  std::vector<Eigen::MatrixXd> extra(arch_.layers.size() + 1);
  if (signal_grads) {
    signal_grads->assign(arch_.layers.size() + 1, Eigen::MatrixXd());
    signal_grads->back() = g;
  }
  std::size_t wi = w_.size();
  for (std::size_t l = arch_.layers.size(); l-- > 0;) {
    if (skip_source_[l] >= 0) {
      auto& e = extra[skip_source_[l]];
      if (e.size() == 0) e = g; else e += g;
    }
    const Eigen::MatrixXd& s = cache.signals[l];
    Eigen::MatrixXd gin;
    switch (arch_.layers[l].kind) {
      case LayerKind::kConv: {
        --wi;
        const ConvPlan& p = *plans_[l];
        grads[wi] = g * im2col(p, s).transpose();
        if (l > 0) gin = col2im(p, w_[wi].transpose() * g);
        break;
      }
      case LayerKind::kRelu:
        gin = g.cwiseProduct((s.array() > 0.0).cast<double>().matrix());
        break;
      case LayerKind::kDown:
      case LayerKind::kUp:
        gin = g * resample_[l]->transpose();
        break;
    }
    if (l == 0) break;
    if (extra[l].size() != 0) gin += extra[l];
    if (signal_grads) (*signal_grads)[l] = gin;
    g = std::move(gin);
  }
  return grads;
}

ImageTensor FiniteCnn::jvp(const ForwardCache& cache, const Weights& dw) const {
  if (dw.size() != w_.size()) throw ShapeError("tangent does not match weights");
  std::vector<Eigen::MatrixXd> ds;
  ds.reserve(arch_.layers.size() + 1);
  ds.push_back(Eigen::MatrixXd::Zero(cache.signals[0].rows(), cache.signals[0].cols()));
  std::size_t wi = 0;
  for (std::size_t l = 0; l < arch_.layers.size(); ++l) {
    const Eigen::MatrixXd& s = cache.signals[l];
    Eigen::MatrixXd next;
    switch (arch_.layers[l].kind) {
      case LayerKind::kConv: {
        const ConvPlan& p = *plans_[l];
        next = dw[wi] * im2col(p, s);
        if (l > 0) next += w_[wi] * im2col(p, ds[l]);
        ++wi;
        break;
      }
      case LayerKind::kRelu:
        next = ds[l].cwiseProduct((s.array() > 0.0).cast<double>().matrix());
        break;
      case LayerKind::kDown:
      case LayerKind::kUp: next = ds[l] * *resample_[l]; break;
    }
    if (skip_source_[l] >= 0) next += ds[skip_source_[l]];
    ds.push_back(std::move(next));
  }
  return from_signal(ds.back(), geometry_);
}

const Eigen::MatrixXd& FiniteCnn::last_preactivation(const ForwardCache& cache) const {
  return cache.signals[last_relu_];
}

EmpiricalNtk empirical_ntk(const FiniteCnn& net, const ImageTensor& x) {
  if (net.arch().output_channels != 1) {
    throw ConfigError("empirical NTK needs a single output channel");
  }
  const auto d = static_cast<Eigen::Index>(net.geometry().pixels());
  const auto p = static_cast<Eigen::Index>(net.num_weights());
  if (static_cast<double>(d) * static_cast<double>(p) > kJacobianEntryLimit) {
    throw ConfigError("empirical NTK Jacobian exceeds the memory guard");
  }
  const ForwardCache cache = net.forward(x);
  Eigen::MatrixXd jac(d, p);
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index i = 0; i < d; ++i) {
    ImageTensor e(1, net.geometry());
    e.data()[i] = 1.0;
    const Weights g = net.vjp(cache, e);
    Eigen::Index off = 0;
    for (const auto& gi : g) {
      jac.row(i).segment(off, gi.size()) = Eigen::Map<const Eigen::RowVectorXd>(gi.data(), gi.size());
      off += gi.size();
    }
  }
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(d, d);
  t.selfadjointView<Eigen::Lower>().rankUpdate(jac);
  t.triangularView<Eigen::StrictlyUpper>() = t.transpose();
  const double lmax = top_eigenpair(t).value;
  EmpiricalNtk out;
  out.scale_applied = lmax > 0.0 ? 1.0 / lmax : 1.0;
  out.theta = KernelMatrix(out.scale_applied * t);
  return out;
}

TopEigen ntk_top_eigen(const FiniteCnn& net, const ImageTensor& x, double rel_tol) {
  const ForwardCache cache = net.forward(x);
  const Geometry g = net.geometry();
  const int co = net.arch().output_channels;
  auto op = [&](const Eigen::VectorXd& v, Eigen::VectorXd& y) {
    const ImageTensor vi(co, g, std::vector<double>(v.data(), v.data() + v.size()));
    const ImageTensor out = net.jvp(cache, net.vjp(cache, vi));
    y = Eigen::Map<const Eigen::VectorXd>(out.data().data(), static_cast<Eigen::Index>(out.size()));
  };
  return top_eigenpair(op, static_cast<Eigen::Index>(co * g.pixels()), rel_tol, 200);
}

SortedEigen preactivation_eigenvectors(const FiniteCnn& net, const ImageTensor& x, int k) {
  const ForwardCache cache = net.forward(x);
  const Eigen::MatrixXd& a = net.last_preactivation(cache);
  const double c = static_cast<double>(a.rows());
  const Eigen::Index d = a.cols();
  k = static_cast<int>(std::min<Eigen::Index>(k, std::min<Eigen::Index>(a.rows(), d)));
  SortedEigen out;
  if (a.rows() < d) {
    // Gram trick: (A A^T) u = s u gives (A^T A)(A^T u) = s (A^T u).
    const SortedEigen small = sorted_eigen(a * a.transpose() / c);
    out.values = small.values.head(k);
    out.vectors = a.transpose() * small.vectors.leftCols(k);
    for (int i = 0; i < k; ++i) out.vectors.col(i).normalize();
  } else {
    const SortedEigen full = sorted_eigen(a.transpose() * a / c);
    out.values = full.values.head(k);
    out.vectors = full.vectors.leftCols(k);
  }
  return out;
}

double gd_learning_rate(const FiniteCnn& net, const ImageTensor& x, double gamma) {
  const double lmax = ntk_top_eigen(net, x).value;
  if (!(lmax > 0.0)) throw Error("network tangent kernel is zero");
  return gamma / lmax;
}

TrainResult train(FiniteCnn& net, Optimizer& opt, const ImageTensor& x, const ImageTensor& y,
                  const TrainOptions& o) {
  if (o.iters < 0 || o.telemetry_every < 1) throw ConfigError("bad training schedule");
  const Geometry g = net.geometry();
  if (y.channels() != net.arch().output_channels || !(y.geometry() == g)) {
    throw ShapeError("target does not match the network output");
  }
  const Weights w0 = net.weights();
  const std::size_t nl = w0.size();
  TrainResult res;
  res.report.layer_max_change.assign(nl, 0.0);

  ForwardCache cache = net.forward(x);
  const Eigen::MatrixXd z0 = cache.signals.back();
  const Eigen::MatrixXd ym = to_signal(y);
  bool have_best = false;
  double loss0 = 0.0;
  for (long t = 0;; ++t) {
    Eigen::MatrixXd z = cache.signals.back();
    if (o.translate_output) z -= z0;
    const Eigen::MatrixXd resid = z - ym;
    const double loss = 0.5 * resid.squaredNorm();
    if (t == 0) loss0 = std::max(loss, 1e-300);
    if (!std::isfinite(loss) || loss > kDivergenceFactor * loss0) {
      throw DivergenceError("loss diverged", t);
    }

    const ImageTensor zi = from_signal(z, g);
    const double p = o.oracle ? psnr(zi, *o.oracle) : std::numeric_limits<double>::quiet_NaN();
    if (o.oracle && (!have_best || p > res.best_psnr)) {
      res.best_psnr = p;
      res.best_iteration = t;
      res.best_output = zi;
      have_best = true;
    }
    if (t % o.telemetry_every == 0 || t == o.iters) {
      res.telemetry.push_back({t, loss, p, res.report.layer_max_change});
    }
    for (long s : o.snapshot_at) {
      if (s == t) res.snapshots[t] = zi;
    }
    if (t == o.iters) {
      res.final_output = zi;
      break;
    }

    const Weights grads = net.vjp(cache, from_signal(resid, g));
    opt.step(net.weights(), grads);
    for (std::size_t i = 0; i < nl; ++i) {
      const double m = (net.weights()[i] - w0[i]).cwiseAbs().maxCoeff();
      res.report.layer_max_change[i] = std::max(res.report.layer_max_change[i], m);
    }
    cache = net.forward(x);
  }
  if (!o.oracle) {
    res.best_output = res.final_output;
    res.best_iteration = o.iters;
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < nl; ++i) {
    sq += (net.weights()[i] - w0[i]).squaredNorm();
    if (i == 0) continue;
    if (i + 1 == nl) {
      res.report.last_max_change = res.report.layer_max_change[i];
    } else {
      res.report.hidden_max_change = std::max(res.report.hidden_max_change, res.report.layer_max_change[i]);
    }
  }
  res.report.global_l2_change = std::sqrt(sq);
  return res;
}

void write_telemetry_csv(const TrainResult& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "iteration,loss,psnr_db";
  const std::size_t nl = r.report.layer_max_change.size();
  for (std::size_t i = 0; i < nl; ++i) out << ",max_change_conv" << i;
  out << '\n' << std::setprecision(10);
  for (const auto& row : r.telemetry) {
    out << row.iteration << ',' << row.loss << ',' << row.psnr;
    for (double v : row.layer_max_change) out << ',' << v;
    out << '\n';
  }
}

}  // namespace ntkf
