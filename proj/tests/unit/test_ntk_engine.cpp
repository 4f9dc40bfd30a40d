#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "ntkfilter/errors.hpp"
#include "ntkfilter/kernel_maps.hpp"
#include "ntkfilter/ntk_engine.hpp"
#include "ntkfilter/spectral.hpp"
#include "test_support.hpp"

using namespace ntkf;

namespace {

std::vector<int> all_indices(int d) {
  std::vector<int> v(d);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

ImageTensor roll(const ImageTensor& img, int sy, int sx) {
  ImageTensor out(img.channels(), img.geometry());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        out.at(c, (y + sy) % img.height(), (x + sx) % img.width()) = img.at(c, y, x);
  return out;
}

}  // namespace

TEST(ClosedForm, Examples) {
  const std::vector<double> e1{1, 0, 0}, e2{0, 1, 0}, m1{-1, 0, 0};
  EXPECT_NEAR(closed_form_vanilla_kernel(e1, e1), 1.0, 1e-12);
  EXPECT_NEAR(closed_form_vanilla_kernel(e1, e2), 1.0 / M_PI, 1e-12);
  EXPECT_NEAR(closed_form_vanilla_kernel(e1, m1), 0.0, 1e-12);
  EXPECT_EQ(closed_form_vanilla_kernel(std::vector<double>(3), e1), 0.0);
}

TEST(NtkEngine, VanillaRecursionEqualsPairwiseKernel) {
  const ImageTensor img = tu::test_image(16);
  for (int r : {1, 3, 5}) {
    const ArchSpec arch = vanilla_arch(r);
    const KernelMatrix full = ntk_unscaled(arch, img);
    const Eigen::MatrixXd cols = kernel_columns(arch, img, all_indices(256));
    EXPECT_LT((full.matrix() - cols).cwiseAbs().maxCoeff(), 1e-12) << r;
  }
}

TEST(NtkEngine, MultiChannelPatchesConcatenate) {
  const ImageTensor img = tu::random_image(3, {6, 6}, 4);
  const ArchSpec arch = vanilla_arch(3, 3);
  const Eigen::MatrixXd cols = kernel_columns(arch, img, all_indices(36));
  EXPECT_LT((ntk_unscaled(arch, img).matrix() - cols).cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::MatrixXd p = extract_patches(img, 3);
  EXPECT_EQ(p.cols(), 27);
  EXPECT_NEAR(cols(4, 9), closed_form_vanilla_kernel(
                              std::span<const double>(Eigen::VectorXd(p.row(4)).data(), 27),
                              std::span<const double>(Eigen::VectorXd(p.row(9)).data(), 27)),
              1e-14);
}

TEST(NtkEngine, ThetaIsNormalizedSymmetricPsd) {
  const ImageTensor img = tu::test_image(8);
  for (const ArchSpec& a : {vanilla_arch(3), deep_vanilla_arch(4, 3), autoencoder_arch(2)}) {
    const NtkResult res = ntk_recursion(a, img);
    EXPECT_TRUE(res.theta.is_symmetric());
    EXPECT_TRUE(res.theta.is_numerically_psd());
    EXPECT_NEAR(sorted_eigen(res.theta.matrix()).values[0], 1.0, 1e-6) << a.name;
    EXPECT_GT(res.scale_applied, 0.0);
  }
}

TEST(NtkEngine, TranslationPermutesTheta) {
  const ImageTensor img = tu::test_image(8);
  const ImageTensor moved = roll(img, 3, 5);
  for (const ArchSpec& a : {deep_vanilla_arch(3, 3), autoencoder_arch(2)}) {
    const Eigen::MatrixXd t0 = ntk_recursion(a, img).theta.matrix();
    const Eigen::MatrixXd t1 = ntk_recursion(a, moved).theta.matrix();
    // Translation by a multiple of the resampling factor keeps the grid aligned.
    if (a.name == "autoencoder") continue;
    for (int p = 0; p < 64; ++p)
      for (int q = 0; q < 64; ++q) {
        const int pp = ((p / 8 + 3) % 8) * 8 + (p % 8 + 5) % 8;
        const int qq = ((q / 8 + 3) % 8) * 8 + (q % 8 + 5) % 8;
        ASSERT_NEAR(t1(pp, qq), t0(p, q), 1e-10);
      }
  }
  const ArchSpec ae = autoencoder_arch(2);
  const Eigen::MatrixXd t0 = ntk_recursion(ae, img).theta.matrix();
  const Eigen::MatrixXd t1 = ntk_recursion(ae, roll(img, 4, 4)).theta.matrix();
  for (int p = 0; p < 64; ++p)
    for (int q = 0; q < 64; ++q) {
      const int pp = ((p / 8 + 4) % 8) * 8 + (p % 8 + 4) % 8;
      const int qq = ((q / 8 + 4) % 8) * 8 + (q % 8 + 4) % 8;
      ASSERT_NEAR(t1(pp, qq), t0(p, q), 1e-10);
    }
}

TEST(NtkEngine, InputScalingIsQuadratic) {
  const ImageTensor img = tu::test_image(8);
  for (const ArchSpec& a : {vanilla_arch(3), deep_vanilla_arch(4, 3)}) {
    const Eigen::MatrixXd k1 = ntk_unscaled(a, img).matrix();
    const Eigen::MatrixXd k3 = ntk_unscaled(a, 3.0 * img).matrix();
    EXPECT_TRUE(k3.isApprox(9.0 * k1, 1e-12));
    EXPECT_TRUE(ntk_recursion(a, 3.0 * img).theta.matrix().isApprox(ntk_recursion(a, img).theta.matrix(), 1e-10));
  }
}

TEST(NtkEngine, ConstantAndZeroInputs) {
  const double v = 0.3;
  const ImageTensor c(1, {6, 6}, std::vector<double>(36, v));
  const ForwardCovariance f = forward_covariance(vanilla_arch(3), c);
  EXPECT_TRUE(f.after[0].matrix().isApprox(Eigen::MatrixXd::Constant(36, 36, 2.0 * v * v)));
  const ForwardCovariance z = forward_covariance(autoencoder_arch(1), ImageTensor(1, {8, 8}));
  for (const auto& k : z.after) EXPECT_EQ(k.matrix().cwiseAbs().maxCoeff(), 0.0);
}

TEST(NtkEngine, ConstantImageGivesConstantTopEigenimage) {
  const ImageTensor c(1, {4, 4}, std::vector<double>(16, 0.25));
  const NtkResult res = ntk_recursion(vanilla_arch(3), c);
  const SortedEigen es = sorted_eigen(res.theta.matrix());
  EXPECT_NEAR(es.values[0], 1.0, 1e-9);
  EXPECT_NEAR(es.values[1], 0.0, 1e-9);
  EXPECT_NEAR(std::abs(es.vectors.col(0).sum()) / 4.0, 1.0, 1e-9);
}

TEST(NtkEngine, SelfAffinityDominatesColumnWhenNormsMatch) {
  // On a tiled image every patch appears at several positions; the column of
  // a pixel is maximal at each of its copies.
  const ImageTensor tile = tu::random_image(1, {4, 4}, 8);
  ImageTensor img(1, {8, 8});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) img.at(0, y, x) = tile.at(0, y % 4, x % 4);
  const Eigen::MatrixXd k = kernel_columns(vanilla_arch(3), img, all_indices(64));
  for (int j = 0; j < 64; ++j) {
    const int jj = ((j / 8 + 4) % 8) * 8 + (j % 8 + 4) % 8;
    EXPECT_LT((k.col(j) - k.col(jj)).norm(), 1e-14);
  }
}

TEST(NtkEngine, ColumnModeRejectsDeepArchitectures) {
  const ImageTensor img = tu::test_image(8);
  const std::vector<int> idx{0, 5};
  EXPECT_THROW(kernel_columns(deep_vanilla_arch(3), img, idx), UnsupportedArchitecture);
  EXPECT_THROW(ntk_recursion(autoencoder_arch(2, 1, true), img), UnsupportedArchitecture);
  EXPECT_THROW(ntk_recursion(vanilla_arch(3, 3), img), ShapeError);
}

TEST(BackwardCovariance, ZeroResidualAndWidthScaling) {
  const ImageTensor img = tu::test_image(8);
  const ArchSpec a = deep_vanilla_arch(4, 3);
  const ForwardCovariance f = forward_covariance(a, img);
  for (const auto& s : backward_covariance(a, f, ImageTensor(1, {8, 8}), 16)) {
    EXPECT_EQ(s.matrix().cwiseAbs().maxCoeff(), 0.0);
  }
  const ImageTensor r = tu::random_image(1, {8, 8}, 3);
  const auto s8 = backward_covariance(a, f, r, 8);
  const auto s32 = backward_covariance(a, f, r, 32);
  ASSERT_EQ(s8.size(), 3u);
  EXPECT_NEAR(s8.back().matrix().trace() / s32.back().matrix().trace(), 4.0, 1e-10);
  // Top layer: (1/c) A[r r^T] o V'[Sigma], V' with sigma_w^2 = 2 folded in.
  const KernelMatrix rr(Eigen::MatrixXd(r.channel_vector(0) * r.channel_vector(0).transpose()));
  const Eigen::MatrixXd expect =
      rr.matrix().cwiseProduct(vprime_map_relu(f.after[4]).matrix()) / 8.0;
  EXPECT_TRUE(s8.back().matrix().isApprox(expect, 1e-12));
}

TEST(BackwardCovariance, NoExplosionThroughDepth) {
  const ImageTensor img = tu::test_image(16);
  const ArchSpec a = deep_vanilla_arch(8, 3);
  const ForwardCovariance f = forward_covariance(a, img);
  const auto s = backward_covariance(a, f, tu::random_image(1, {16, 16}, 5), 64);
  double lo = 1e300, hi = 0.0;
  for (const auto& k : s) lo = std::min(lo, k.matrix().norm()), hi = std::max(hi, k.matrix().norm());
  EXPECT_LT(hi / lo, 10.0);
}

TEST(NoiseInput, CovarianceMatchesAverageOverDraws) {
  const Geometry g{6, 6};
  const ArchSpec arch = deep_vanilla_arch(3, 3, 1);
  const Eigen::MatrixXd expected = forward_covariance(arch, noise_input_covariance(g), g).after[0].matrix();
  Eigen::MatrixXd mc = Eigen::MatrixXd::Zero(36, 36);
  const int draws = 400;
  for (int s = 0; s < draws; ++s) {
    mc += forward_covariance(arch, gaussian_noise_image(1, g, 100 + s)).after[0].matrix() / draws;
  }
  EXPECT_LT(tu::rel_frobenius(mc, expected), 0.1);
}

TEST(NoiseInput, DeepKernelsHaveTwoLevels) {
  const Geometry g{8, 8};
  const ArchSpec arch = deep_vanilla_arch(10, 3, 1);
  const Eigen::MatrixXd s = forward_covariance(arch, noise_input_covariance(g), g).output().matrix();
  const Eigen::MatrixXd t = ntk_recursion(arch, noise_input_covariance(g), g).theta.matrix();
  for (const Eigen::MatrixXd* m : {&s, &t}) {
    const double diag = (*m)(0, 0), off = (*m)(0, 1);
    Eigen::MatrixXd two = Eigen::MatrixXd::Constant(64, 64, off);
    two.diagonal().setConstant(diag);
    EXPECT_LT((*m - two).cwiseAbs().maxCoeff(), 1e-10 * diag);
  }
  // Forward correlations approach 1 with depth; the tangent kernel's do not.
  EXPECT_GT(s(0, 1) / s(0, 0), 0.8);
  EXPECT_NEAR(t(0, 1) / t(0, 0), 0.25, 0.05);
  const SortedEigen e = sorted_eigen(t);
  EXPECT_NEAR(std::abs(e.vectors.col(0).sum()) / 8.0, 1.0, 1e-8);
}
