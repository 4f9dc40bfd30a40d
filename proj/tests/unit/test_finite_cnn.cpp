#include <cmath>

#include <gtest/gtest.h>

#include "ntkfilter/errors.hpp"
#include "ntkfilter/finite_cnn.hpp"
#include "ntkfilter/kernel_maps.hpp"
#include "ntkfilter/ntk_engine.hpp"
#include "test_support.hpp"

using namespace ntkf;

namespace {

double loss(const FiniteCnn& net, const ImageTensor& x, const ImageTensor& y) {
  const ImageTensor z = net.output(x);
  return 0.5 * (z - y).channel_vector(0).squaredNorm();
}

void check_gradients(FiniteCnn net, const ImageTensor& x, const ImageTensor& y) {
  const ForwardCache cache = net.forward(x);
  const Weights g = net.vjp(cache, net.output(x) - y);
  std::mt19937_64 rng(5);
  const double h = 1e-4;
  for (std::size_t l = 0; l < g.size(); ++l) {
    std::uniform_int_distribution<Eigen::Index> pick(0, g[l].size() - 1);
    const double scale = g[l].cwiseAbs().maxCoeff();
    for (int k = 0; k < 6; ++k) {
      const Eigen::Index i = pick(rng);
      double& w = net.weights()[l].data()[i];
      const double w0 = w;
      w = w0 + h;
      const double lp = loss(net, x, y);
      w = w0 - h;
      const double lm = loss(net, x, y);
      w = w0;
      const double fd = (lp - lm) / (2 * h);
      EXPECT_LE(std::abs(fd - g[l].data()[i]), 1e-5 * std::max(std::abs(g[l].data()[i]), 1e-3 * scale))
          << "layer " << l << " weight " << i;
    }
  }
}

}  // namespace

TEST(FiniteCnn, GradientsMatchFiniteDifferences) {
  const ImageTensor x6 = tu::test_image(8);
  const ImageTensor y6 = tu::random_image(1, {8, 8}, 2);
  check_gradients(FiniteCnn(vanilla_arch(3), 6, {8, 8}, 1), x6, y6);
  check_gradients(FiniteCnn(deep_vanilla_arch(4, 3), 5, {8, 8}, 2), x6, y6);
  check_gradients(FiniteCnn(autoencoder_arch(2), 4, {8, 8}, 3), x6, y6);
  ArchSpec strided = deep_vanilla_arch(3, 3);
  strided.layers[2] = Layer::conv(3, 2);
  strided.layers.insert(strided.layers.end() - 1, Layer::up(ResampleKind::kNearest));
  check_gradients(FiniteCnn(strided, 4, {8, 8}, 4), x6, y6);
}

TEST(FiniteCnn, UnetGradientsMatchFiniteDifferences) {
  const ImageTensor x = tu::random_image(1, {8, 8}, 1);
  check_gradients(FiniteCnn(autoencoder_arch(2, 1, true), 4, {8, 8}, 3), x,
                  tu::random_image(1, {8, 8}, 2));
}

TEST(FiniteCnn, JvpIsAdjointOfVjp) {
  const FiniteCnn net(autoencoder_arch(2, 1, true), 5, {8, 8}, 7);
  const ImageTensor x = tu::test_image(8);
  const ForwardCache cache = net.forward(x);
  Weights dw;
  for (std::size_t i = 0; i < net.weights().size(); ++i) {
    dw.push_back(tu::random_matrix(net.weights()[i].rows(), net.weights()[i].cols(), 10 + i));
  }
  const ImageTensor u = tu::random_image(1, {8, 8}, 3);
  const double lhs = net.jvp(cache, dw).channel_vector(0).dot(u.channel_vector(0));
  const double rhs = weights_dot(dw, net.vjp(cache, u));
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
}

TEST(FiniteCnn, ZeroWeightsGiveZeroOutput) {
  FiniteCnn net(vanilla_arch(3), 4, {6, 6}, 1);
  for (auto& w : net.weights()) w.setZero();
  const ImageTensor z = net.output(tu::random_image(1, {6, 6}, 1));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(FiniteCnn, SingleTapNetworkSumsChannels) {
  // conv(1) with unit taps, relu, conv(1) summing: non-negative input passes unchanged times width.
  FiniteCnn net(vanilla_arch(1), 3, {4, 4}, 1);
  net.weights()[0].setOnes();
  net.weights()[1].setOnes();
  ImageTensor x(1, {4, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = 0.01 * i;
  const ImageTensor z = net.output(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(z.data()[i], 3.0 * x.data()[i], 1e-15);
}

TEST(FiniteCnn, HeInitialisationMoments) {
  const FiniteCnn net(deep_vanilla_arch(3, 3), 64, {4, 4}, 11);
  const Eigen::MatrixXd& w = net.weights()[1];
  ASSERT_GE(w.size(), 10000);
  const double var = w.squaredNorm() / static_cast<double>(w.size());
  EXPECT_NEAR(w.mean(), 0.0, 4.0 * std::sqrt(2.0 / (9 * 64) / w.size()));
  EXPECT_NEAR(var, 2.0 / (9.0 * 64.0), 0.03 * 2.0 / (9.0 * 64.0));
  const Eigen::MatrixXd& w0 = net.weights()[0];
  EXPECT_NEAR(w0.squaredNorm() / w0.size(), 2.0 / 9.0, 0.25 * 2.0 / 9.0);
}

TEST(FiniteCnn, OutputCovarianceMatchesGaussianProcess) {
  const ImageTensor x = tu::test_image(8);
  const ArchSpec arch = deep_vanilla_arch(3, 3);
  const Eigen::MatrixXd analytic = forward_covariance(arch, x).output().matrix();
  Eigen::MatrixXd mc = Eigen::MatrixXd::Zero(64, 64);
  const int n = 200;
  for (int s = 0; s < n; ++s) {
    const FiniteCnn net(arch, 256, {8, 8}, 1000 + s);
    const Eigen::VectorXd z = net.output(x).channel_vector(0);
    mc += z * z.transpose();
  }
  mc /= n;
  EXPECT_LT(tu::rel_frobenius(mc, analytic), 0.15);
  EXPECT_NEAR(mc.diagonal().mean(), analytic.diagonal().mean(), 0.1 * analytic.diagonal().mean());
}

TEST(FiniteCnn, BackwardCovarianceMatchesGradientMoments) {
  const ImageTensor x = tu::test_image(8);
  const ArchSpec arch = deep_vanilla_arch(4, 3);
  const int c = 256;
  const ImageTensor r = tu::random_image(1, {8, 8}, 9);
  const auto analytic = backward_covariance(arch, forward_covariance(arch, x), r, c);
  std::vector<Eigen::MatrixXd> mc(analytic.size(), Eigen::MatrixXd::Zero(64, 64));
  const int n = 20;
  for (int s = 0; s < n; ++s) {
    const FiniteCnn net(arch, c, {8, 8}, 300 + s);
    std::vector<Eigen::MatrixXd> sg;
    net.vjp(net.forward(x), r, &sg);
    std::size_t k = 0;
    for (std::size_t l = 0; l < arch.layers.size(); ++l) {
      if (arch.layers[l].kind != LayerKind::kRelu) continue;
      mc[k++] += sg[l].transpose() * sg[l] / (static_cast<double>(c) * n);
    }
  }
  for (std::size_t k = 0; k < mc.size(); ++k) {
    EXPECT_LT(tu::rel_frobenius(mc[k], analytic[k].matrix()), 0.15) << k;
  }
}

TEST(FiniteCnn, EmpiricalNtkMatchesAnalyticWithMixedKernelSizes) {
  // Unequal kernel sizes make the per-layer fan-in weighting visible.
  ArchSpec arch;
  arch.layers = {Layer::conv(5), Layer::relu(), Layer::conv(3), Layer::relu(), Layer::conv(1)};
  const ImageTensor x = tu::test_image(8);
  const Eigen::MatrixXd analytic = ntk_unscaled(arch, x).matrix();
  // Same recursion with the r^2 factor on the 3x3 layer dropped.
  const Geometry g{8, 8};
  const Eigen::MatrixXd sig = to_signal(x);
  KernelMatrix k = a_map(KernelMatrix(2.0 * sig.transpose() * sig), 5, g);
  KernelMatrix t = KernelMatrix::zeros(64);
  k = KernelMatrix(v_map_relu(k).matrix() / 2.0);
  t = KernelMatrix(2.0 * a_map(t, 3, g).matrix() + a_map(k, 3, g).matrix());
  k = KernelMatrix(2.0 * a_map(k, 3, g).matrix());
  t = KernelMatrix(vprime_map_relu(k).matrix().cwiseProduct(t.matrix()) / 2.0);
  k = KernelMatrix(v_map_relu(k).matrix() / 2.0);
  const Eigen::MatrixXd unweighted = 2.0 * t.matrix() + k.matrix();

  const int c = 256;
  const int seeds = 4;
  Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(64, 64);
  for (int s = 0; s < seeds; ++s) {
    avg += empirical_ntk(FiniteCnn(arch, c, {8, 8}, 40 + s), x).raw().matrix() / (double(seeds) * c);
  }
  const double err = tu::rel_frobenius(avg, analytic);
  EXPECT_LT(err, 0.1);
  EXPECT_LT(err, 0.5 * tu::rel_frobenius(avg, unweighted));
}

TEST(FiniteCnn, EmpiricalNtkGuardAndTopEigen) {
  const ImageTensor x = tu::test_image(8);
  const FiniteCnn net(vanilla_arch(3), 16, {8, 8}, 1);
  const EmpiricalNtk e = empirical_ntk(net, x);
  EXPECT_NEAR(sorted_eigen(e.theta.matrix()).values[0], 1.0, 1e-8);
  EXPECT_NEAR(ntk_top_eigen(net, x, 1e-10).value, 1.0 / e.scale_applied, 1e-6 / e.scale_applied);
  EXPECT_THROW(empirical_ntk(FiniteCnn(vanilla_arch(3), 200000, {8, 8}, 1), x), ConfigError);
}

TEST(FiniteCnn, PreactivationEigenvectorsGramTrick) {
  const ImageTensor x = tu::test_image(8);
  const FiniteCnn narrow(vanilla_arch(3), 10, {8, 8}, 2);
  const SortedEigen e = preactivation_eigenvectors(narrow, x, 3);
  const Eigen::MatrixXd a = narrow.last_preactivation(narrow.forward(x));
  const SortedEigen d = sorted_eigen(a.transpose() * a / 10.0);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(e.values[i], d.values[i], 1e-10);
    EXPECT_NEAR(std::abs(e.vectors.col(i).dot(d.vectors.col(i))), 1.0, 1e-8);
  }
}

TEST(Training, ZeroStepFreezesWeights) {
  FiniteCnn net(vanilla_arch(3), 8, {8, 8}, 3);
  const Weights w0 = net.weights();
  Optimizer opt({OptimizerKind::kGd, 0.0});
  TrainOptions o;
  o.iters = 5;
  const TrainResult r = train(net, opt, tu::test_image(8), tu::random_image(1, {8, 8}, 1), o);
  for (std::size_t i = 0; i < w0.size(); ++i) EXPECT_EQ(net.weights()[i], w0[i]);
  EXPECT_EQ(r.report.global_l2_change, 0.0);
  EXPECT_EQ(r.telemetry.size(), 6u);
}

TEST(Training, GdLossIsMonotoneBelowStabilityBound) {
  const ImageTensor x = tu::test_image(8);
  FiniteCnn net(autoencoder_arch(2), 32, {8, 8}, 4);
  Optimizer opt({OptimizerKind::kGd, gd_learning_rate(net, x, 1.0)});
  TrainOptions o;
  o.iters = 60;
  o.translate_output = true;
  o.oracle = tu::test_image(8);
  const TrainResult r = train(net, opt, x, tu::test_image(8), o);
  for (std::size_t i = 1; i < r.telemetry.size(); ++i) {
    EXPECT_LE(r.telemetry[i].loss, r.telemetry[i - 1].loss * (1 + 1e-9));
    for (std::size_t l = 0; l < r.telemetry[i].layer_max_change.size(); ++l) {
      EXPECT_GE(r.telemetry[i].layer_max_change[l], r.telemetry[i - 1].layer_max_change[l]);
    }
  }
  EXPECT_GT(r.report.hidden_max_change, 0.0);
}

TEST(Training, DivergenceIsReportedWithIteration) {
  const ImageTensor x = tu::test_image(8);
  FiniteCnn net(vanilla_arch(3), 8, {8, 8}, 4);
  Optimizer opt({OptimizerKind::kGd, gd_learning_rate(net, x, 1e4)});
  TrainOptions o;
  o.iters = 500;
  o.translate_output = true;
  try {
    train(net, opt, x, tu::test_image(8), o);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.iteration(), 1);
  }
}

TEST(Optimizer, AdamFirstStepIsSignedLearningRate) {
  Weights w{Eigen::MatrixXd::Zero(2, 2)};
  Weights g{Eigen::MatrixXd(2, 2)};
  g[0] << 0.5, -2.0, 1e-3, -1e-4;
  Optimizer opt({OptimizerKind::kAdam, 0.01});
  opt.step(w, g);
  for (int i = 0; i < 4; ++i) {
    const double gi = g[0].data()[i];
    EXPECT_NEAR(w[0].data()[i], -0.01 * gi / (std::abs(gi) + 1e-8), 1e-12);
  }
  // Second step with the same gradient, bias corrections included.
  const double w1 = w[0](0, 0);
  opt.step(w, g);
  const double gi = 0.5;
  const double m = 0.9 * 0.1 * gi + 0.1 * gi, v = 0.99 * 0.01 * gi * gi + 0.01 * gi * gi;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.9801);
  EXPECT_NEAR(w[0](0, 0), w1 - 0.01 * mh / (std::sqrt(vh) + 1e-8), 1e-12);
  EXPECT_THROW(parse_optimizer("sgd"), ConfigError);
}
