#include "ntkfilter/resample.hpp"

#include <vector>

#include "ntkfilter/errors.hpp"

namespace ntkf {

namespace {

using Triplet = Eigen::Triplet<double>;

/// One-axis weights: for each output sample, (source index, weight) pairs.
std::vector<std::vector<std::pair<int, double>>> axis_weights(ResampleKind kind,
                                                              ResampleDirection dir, int n_in) {
  std::vector<std::vector<std::pair<int, double>>> w;
  auto wrap = [n_in](int i) { return ((i % n_in) + n_in) % n_in; };
  if (dir == ResampleDirection::kDown) {
    const int n_out = n_in / 2;
    w.resize(n_out);
    for (int o = 0; o < n_out; ++o) {
      if (kind == ResampleKind::kNearest) {
        w[o] = {{2 * o, 1.0}};
      } else {
        w[o] = {{2 * o, 0.5}, {2 * o + 1, 0.5}};
      }
    }
  } else {
    const int n_out = n_in * 2;
    w.resize(n_out);
    for (int o = 0; o < n_out; ++o) {
      const int k = o / 2;
      if (kind == ResampleKind::kNearest) {
        w[o] = {{k, 1.0}};
      } else if (o % 2 == 0) {
        w[o] = {{k, 0.75}, {wrap(k - 1), 0.25}};
      } else {
        w[o] = {{k, 0.75}, {wrap(k + 1), 0.25}};
      }
    }
  }
  return w;
}

}  // namespace

ResampleOperator::ResampleOperator(ResampleKind kind, ResampleDirection direction,
                                   Geometry input)
    : kind_(kind), direction_(direction), in_(input) {
  if (input.height <= 0 || input.width <= 0) throw ShapeError("empty resample input");
  if (direction == ResampleDirection::kDown) {
    if (input.height % 2 || input.width % 2) {
      throw ShapeError("downsampling needs even height and width");
    }
    out_ = {input.height / 2, input.width / 2};
  } else {
    out_ = {input.height * 2, input.width * 2};
  }

  const auto wy = axis_weights(kind, direction, in_.height);
  const auto wx = axis_weights(kind, direction, in_.width);
  std::vector<Triplet> triplets;
  triplets.reserve(out_.pixels() * 4);
  for (int oy = 0; oy < out_.height; ++oy)
    for (int ox = 0; ox < out_.width; ++ox)
      for (const auto& [iy, a] : wy[oy])
        for (const auto& [ix, b] : wx[ox])
          triplets.emplace_back(oy * out_.width + ox, iy * in_.width + ix, a * b);
  m_.resize(out_dim(), in_dim());
  m_.setFromTriplets(triplets.begin(), triplets.end());
}

}  // namespace ntkf
