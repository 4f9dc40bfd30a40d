#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace ntkf {

struct Geometry {
  int height = 0;
  int width = 0;

  std::size_t pixels() const noexcept {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  friend bool operator==(const Geometry&, const Geometry&) = default;
};

/// Multi-channel raster image stored channel-major; each channel is a
/// row-major vector of d = height * width pixels.
///
/// Images handled by the filters are normalized to [-0.5, 0.5]; PNG I/O and
/// PSNR convert to and from the [0, 1] display range.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int channels, Geometry geometry);
  ImageTensor(int channels, Geometry geometry, std::vector<double> data);

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return geometry_.height; }
  int width() const noexcept { return geometry_.width; }
  Geometry geometry() const noexcept { return geometry_; }
  std::size_t pixels() const noexcept { return geometry_.pixels(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> channel(int c) const;
  std::span<double> channel(int c);

  Eigen::Map<const Eigen::VectorXd> channel_vector(int c) const;
  Eigen::Map<Eigen::VectorXd> channel_vector(int c);

  /// channels x d view, one row per channel.
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
  as_matrix() const;

  double at(int c, int y, int x) const;
  double& at(int c, int y, int x);

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  bool same_shape(const ImageTensor& other) const noexcept {
    return channels_ == other.channels_ && geometry_ == other.geometry_;
  }

 private:
  int channels_ = 0;
  Geometry geometry_{};
  std::vector<double> data_;
};

/// Additive white Gaussian noise with standard deviation `sigma` in 8-bit
/// units (sigma = 25 adds N(0, (25/255)^2) in normalized units).
struct NoiseModel {
  double sigma = 0.0;
  std::uint64_t seed = 0;

  double normalized_std() const noexcept { return sigma / 255.0; }
};

/// [0, 1] -> [-0.5, 0.5].
ImageTensor normalize(const ImageTensor& unit_range);
/// [-0.5, 0.5] -> [0, 1] without clipping.
ImageTensor denormalize(const ImageTensor& normalized);
/// [-0.5, 0.5] -> [0, 1], clipped.
ImageTensor denormalize_clip(const ImageTensor& normalized);

ImageTensor add_gaussian_noise(const ImageTensor& image, const NoiseModel& noise);

/// iid N(0, 1) image, the random input of a deep-image-prior network.
ImageTensor gaussian_noise_image(int channels, Geometry geometry, std::uint64_t seed);

/// Rec. 601 luma for 3-channel input; returns a copy for single channel.
ImageTensor luminance(const ImageTensor& image);

ImageTensor crop(const ImageTensor& image, int y0, int x0, Geometry size);

ImageTensor operator-(const ImageTensor& a, const ImageTensor& b);
ImageTensor operator+(const ImageTensor& a, const ImageTensor& b);
ImageTensor operator*(double s, const ImageTensor& a);

}  // namespace ntkf
