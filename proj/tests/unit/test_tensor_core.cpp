#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "ntkfilter/errors.hpp"
#include "ntkfilter/metrics.hpp"
#include "ntkfilter/png_io.hpp"
#include "test_support.hpp"

using namespace ntkf;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("ntkf_" + name);
}

}  // namespace

TEST(ImageTensor, RejectsWrongDataLength) {
  EXPECT_THROW(ImageTensor(2, {3, 3}, std::vector<double>(17)), ShapeError);
  EXPECT_NO_THROW(ImageTensor(2, {3, 3}, std::vector<double>(18)));
}

TEST(ImageTensor, NormalizeDenormalizeIsIdentity) {
  ImageTensor img(1, {4, 4});
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = static_cast<double>(i) / 15.0;
  const ImageTensor back = denormalize(normalize(img));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back.data()[i], img.data()[i], 1e-15);
  const ImageTensor n = normalize(img);
  EXPECT_DOUBLE_EQ(n.data().front(), -0.5);
  EXPECT_DOUBLE_EQ(n.data().back(), 0.5);
}

TEST(ImageTensor, DenormalizeClipStaysInUnitRange) {
  ImageTensor img(1, {1, 3}, {-0.9, 0.1, 0.8});
  const ImageTensor c = denormalize_clip(img);
  EXPECT_DOUBLE_EQ(c.data()[0], 0.0);
  EXPECT_DOUBLE_EQ(c.data()[1], 0.6);
  EXPECT_DOUBLE_EQ(c.data()[2], 1.0);
}

TEST(Noise, ZeroSigmaIsIdentity) {
  const ImageTensor img = tu::test_image(16);
  const ImageTensor out = add_gaussian_noise(img, {0.0, 7});
  EXPECT_EQ(out.data(), img.data());
}

TEST(Noise, DeterministicPerSeedAndDistinctAcrossSeeds) {
  const ImageTensor img = tu::test_image(32);
  const ImageTensor a = add_gaussian_noise(img, {25.0, 1});
  const ImageTensor b = add_gaussian_noise(img, {25.0, 1});
  const ImageTensor c = add_gaussian_noise(img, {25.0, 2});
  EXPECT_EQ(a.data(), b.data());
  EXPECT_NE(a.data(), c.data());
  const double d = static_cast<double>(img.size());
  const double mean_a = (a - img).channel_vector(0).mean();
  const double mean_c = (c - img).channel_vector(0).mean();
  EXPECT_LT(std::abs(mean_a - mean_c), 3.0 * (25.0 / 255.0) / std::sqrt(d) * std::sqrt(2.0));
}

TEST(Noise, NegativeSigmaRejected) {
  EXPECT_THROW(add_gaussian_noise(tu::test_image(8), {-1.0, 0}), ConfigError);
}

TEST(Psnr, MonteCarloMatchesNoiseLevel) {
  // Mid-gray image keeps clipping negligible, so MSE = sigma^2 in expectation.
  const ImageTensor flat(1, {64, 64});
  double sum = 0.0;
  const int n = 20;
  for (int s = 0; s < n; ++s) sum += psnr(add_gaussian_noise(flat, {25.0, 100u + s}), flat);
  EXPECT_NEAR(sum / n, 20.0 * std::log10(255.0 / 25.0), 0.15);
}

TEST(Psnr, Examples) {
  const ImageTensor a(1, {4, 4}, std::vector<double>(16, -0.5));
  const ImageTensor b(1, {4, 4}, std::vector<double>(16, -0.4));
  EXPECT_EQ(psnr(a, a), kPsnrCapDb);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  EXPECT_DOUBLE_EQ(psnr(a, b), psnr(b, a));
  EXPECT_THROW(psnr(a, ImageTensor(1, {2, 8})), ShapeError);
}

TEST(Png, BlackImageNormalizesToMinusHalf) {
  const auto path = temp_file("black.png");
  save_png(ImageTensor(1, {2, 2}, std::vector<double>(4, -0.5)), path);
  const ImageTensor img = load_png(path);
  EXPECT_EQ(img.channels(), 1);
  for (double v : img.data()) EXPECT_DOUBLE_EQ(v, -0.5);
}

TEST(Png, RoundTripPreservesEightBitValues) {
  ImageTensor rgb(3, {128, 128});
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    rgb.data()[i] = static_cast<double>((i * 37) % 256) / 255.0 - 0.5;
  }
  const auto p1 = temp_file("rgb1.png");
  const auto p2 = temp_file("rgb2.png");
  save_png(rgb, p1);
  const ImageTensor loaded = load_png(p1);
  EXPECT_EQ(loaded.channels(), 3);
  EXPECT_EQ(loaded.pixels(), 16384u);
  save_png(loaded, p2);
  const ImageTensor again = load_png(p2);
  EXPECT_EQ(again.data(), loaded.data());
  for (std::size_t i = 0; i < rgb.size(); ++i) EXPECT_NEAR(loaded.data()[i], rgb.data()[i], 1e-12);
}

TEST(Png, UnreadableFileThrows) {
  EXPECT_THROW(load_png("/nonexistent/file.png"), IoError);
  const auto p = temp_file("garbage.png");
  {
    std::FILE* f = std::fopen(p.c_str(), "wb");
    std::fputs("not a png", f);
    std::fclose(f);
  }
  EXPECT_THROW(load_png(p), IoError);
}

TEST(ImageOps, LuminanceAndCrop) {
  ImageTensor rgb(3, {2, 2});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i) rgb.channel(c)[i] = 0.1 * (c + 1);
  const ImageTensor y = luminance(rgb);
  EXPECT_EQ(y.channels(), 1);
  EXPECT_NEAR(y.data()[0], 0.299 * 0.1 + 0.587 * 0.2 + 0.114 * 0.3, 1e-12);
  const ImageTensor img = tu::test_image(16);
  const ImageTensor c = crop(img, 2, 3, {4, 5});
  EXPECT_EQ(c.at(0, 1, 2), img.at(0, 3, 5));
}
