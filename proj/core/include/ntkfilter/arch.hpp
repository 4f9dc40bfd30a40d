#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ntkfilter/image.hpp"
#include "ntkfilter/resample.hpp"

namespace ntkf {

enum class LayerKind { kConv, kRelu, kDown, kUp };

struct Layer {
  LayerKind kind = LayerKind::kConv;
  int r = 1;       // conv kernel size (odd)
  int stride = 1;  // conv stride, 1 or 2
  ResampleKind mode = ResampleKind::kBilinear;  // down / up

  static Layer conv(int r, int stride = 1) { return {LayerKind::kConv, r, stride, {}}; }
  static Layer relu() { return {LayerKind::kRelu, 1, 1, {}}; }
  static Layer down(ResampleKind m = ResampleKind::kBilinear) {
    return {LayerKind::kDown, 1, 1, m};
  }
  static Layer up(ResampleKind m = ResampleKind::kBilinear) { return {LayerKind::kUp, 1, 1, m}; }
};

/// Declarative network description shared by the analytic engine and the
/// finite simulator. Hidden layers all have the same width; the width is a
/// property of the finite network only.
struct ArchSpec {
  std::string name = "custom";
  std::vector<Layer> layers;
  double sigma_w_sq = 2.0;
  int input_channels = 1;
  int output_channels = 1;
  /// U-Net style additive skips (finite simulator only): the signal entering
  /// each downsampling step is added to the output of the matching upsampling.
  bool skip_connections = false;

  /// Throws ConfigError when the layer list is malformed.
  void validate() const;
  /// Grid after the whole stack; throws ShapeError if a downsampling step
  /// meets an odd size or the output grid differs from the input grid.
  Geometry output_geometry(Geometry input) const;

  int conv_count() const;
  int relu_count() const;
  /// Single conv + relu + conv: the pairwise closed form applies.
  bool is_single_hidden_layer() const;
};

ArchSpec parse_arch_json(const std::string& text);
ArchSpec load_arch(const std::filesystem::path& path);
std::string arch_to_json(const ArchSpec& arch);

/// conv(r) relu conv(1).
ArchSpec vanilla_arch(int r, int channels = 1);
/// (depth - 1) x [conv(r) relu] then conv(1).
ArchSpec deep_vanilla_arch(int depth, int r = 3, int channels = 1);
/// Three-level bilinear autoencoder; `levels` down/up steps (the reference
/// table uses 3).
ArchSpec autoencoder_arch(int levels = 3, int channels = 1, bool skips = false);

}  // namespace ntkf
