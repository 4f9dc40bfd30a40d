#include "ntkfilter/image.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "ntkfilter/errors.hpp"

namespace ntkf {

ImageTensor::ImageTensor(int channels, Geometry geometry)
    : channels_(channels), geometry_(geometry) {
  if (channels <= 0 || geometry.height <= 0 || geometry.width <= 0) {
    throw ShapeError("image must have positive channels, height and width");
  }
  data_.assign(static_cast<std::size_t>(channels) * geometry.pixels(), 0.0);
}

ImageTensor::ImageTensor(int channels, Geometry geometry, std::vector<double> data)
    : ImageTensor(channels, geometry) {
  if (data.size() != data_.size()) {
    throw ShapeError("image data length " + std::to_string(data.size()) +
                     " does not match channels*height*width = " +
                     std::to_string(data_.size()));
  }
  data_ = std::move(data);
}

std::span<const double> ImageTensor::channel(int c) const {
  if (c < 0 || c >= channels_) throw ShapeError("channel index out of range");
  return {data_.data() + static_cast<std::size_t>(c) * pixels(), pixels()};
}

std::span<double> ImageTensor::channel(int c) {
  if (c < 0 || c >= channels_) throw ShapeError("channel index out of range");
  return {data_.data() + static_cast<std::size_t>(c) * pixels(), pixels()};
}

Eigen::Map<const Eigen::VectorXd> ImageTensor::channel_vector(int c) const {
  auto ch = channel(c);
  return {ch.data(), static_cast<Eigen::Index>(ch.size())};
}

Eigen::Map<Eigen::VectorXd> ImageTensor::channel_vector(int c) {
  auto ch = channel(c);
  return {ch.data(), static_cast<Eigen::Index>(ch.size())};
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
ImageTensor::as_matrix() const {
  return {data_.data(), channels_, static_cast<Eigen::Index>(pixels())};
}

double ImageTensor::at(int c, int y, int x) const {
  return channel(c)[static_cast<std::size_t>(y) * width() + x];
}

double& ImageTensor::at(int c, int y, int x) {
  return channel(c)[static_cast<std::size_t>(y) * width() + x];
}

namespace {

template <typename F>
ImageTensor map_values(const ImageTensor& in, F&& f) {
  ImageTensor out = in;
  for (double& v : out.data()) v = f(v);
  return out;
}

template <typename F>
ImageTensor zip_values(const ImageTensor& a, const ImageTensor& b, F&& f) {
  if (!a.same_shape(b)) throw ShapeError("image shapes differ");
  ImageTensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = f(a.data()[i], b.data()[i]);
  return out;
}

}  // namespace

ImageTensor normalize(const ImageTensor& unit_range) {
  return map_values(unit_range, [](double v) { return v - 0.5; });
}

ImageTensor denormalize(const ImageTensor& normalized) {
  return map_values(normalized, [](double v) { return v + 0.5; });
}

ImageTensor denormalize_clip(const ImageTensor& normalized) {
  return map_values(normalized, [](double v) { return std::clamp(v + 0.5, 0.0, 1.0); });
}

ImageTensor add_gaussian_noise(const ImageTensor& image, const NoiseModel& noise) {
  if (noise.sigma < 0.0) throw ConfigError("noise sigma must be non-negative");
  if (noise.sigma == 0.0) return image;
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> normal(0.0, noise.normalized_std());
  return map_values(image, [&](double v) { return v + normal(rng); });
}

ImageTensor gaussian_noise_image(int channels, Geometry geometry, std::uint64_t seed) {
  ImageTensor out(channels, geometry);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : out.data()) v = normal(rng);
  return out;
}

ImageTensor luminance(const ImageTensor& image) {
  if (image.channels() == 1) return image;
  if (image.channels() != 3) throw ShapeError("luminance needs 1 or 3 channels");
  ImageTensor out(1, image.geometry());
  auto r = image.channel(0), g = image.channel(1), b = image.channel(2);
  auto y = out.channel(0);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return out;
}

ImageTensor crop(const ImageTensor& image, int y0, int x0, Geometry size) {
  if (y0 < 0 || x0 < 0 || y0 + size.height > image.height() ||
      x0 + size.width > image.width()) {
    throw ShapeError("crop window exceeds image bounds");
  }
  ImageTensor out(image.channels(), size);
  for (int c = 0; c < image.channels(); ++c)
    for (int y = 0; y < size.height; ++y)
      for (int x = 0; x < size.width; ++x) out.at(c, y, x) = image.at(c, y0 + y, x0 + x);
  return out;
}

ImageTensor operator-(const ImageTensor& a, const ImageTensor& b) {
  return zip_values(a, b, [](double u, double v) { return u - v; });
}

ImageTensor operator+(const ImageTensor& a, const ImageTensor& b) {
  return zip_values(a, b, [](double u, double v) { return u + v; });
}

ImageTensor operator*(double s, const ImageTensor& a) {
  return map_values(a, [s](double v) { return s * v; });
}

}  // namespace ntkf
