#include "ntkfilter/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "ntkfilter/errors.hpp"

namespace ntkf {

double mse(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) throw ShapeError("mse: image shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = a.data()[i] - b.data()[i];
    acc += e * e;
  }
  return acc / static_cast<double>(a.size());
}

double psnr(const ImageTensor& estimate, const ImageTensor& reference) {
  if (!estimate.same_shape(reference)) throw ShapeError("psnr: image shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double u = std::clamp(estimate.data()[i] + 0.5, 0.0, 1.0);
    const double v = std::clamp(reference.data()[i] + 0.5, 0.0, 1.0);
    acc += (u - v) * (u - v);
  }
  const double err = acc / static_cast<double>(estimate.size());
  if (err <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / err));
}

double l2_norm(const ImageTensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace ntkf
