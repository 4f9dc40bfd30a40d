#include "ntkfilter/arch.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ntkfilter/errors.hpp"

namespace ntkf {

using nlohmann::json;

void ArchSpec::validate() const {
  if (layers.empty()) throw ConfigError("architecture has no layers");
  if (layers.front().kind != LayerKind::kConv) throw ConfigError("first layer must be a conv");
  if (layers.back().kind != LayerKind::kConv) throw ConfigError("last layer must be a conv");
  if (!(sigma_w_sq > 0.0)) throw ConfigError("sigma_w_sq must be positive");
  if (input_channels < 1 || output_channels < 1) throw ConfigError("channel counts must be >= 1");
  if (relu_count() < 1) throw ConfigError("architecture needs at least one relu");
  int level = 0;
  for (const Layer& l : layers) {
    switch (l.kind) {
      case LayerKind::kConv:
        if (l.r < 1 || l.r % 2 == 0) throw ConfigError("conv kernel size must be odd");
        if (l.stride != 1 && l.stride != 2) throw ConfigError("conv stride must be 1 or 2");
        if (l.stride == 2) ++level;
        break;
      case LayerKind::kDown: ++level; break;
      case LayerKind::kUp: --level; break;
      case LayerKind::kRelu: break;
    }
  }
  if (level != 0) throw ConfigError("downsampling and upsampling steps do not balance");
}

Geometry ArchSpec::output_geometry(Geometry g) const {
  const Geometry in = g;
  for (const Layer& l : layers) {
    const bool halves = l.kind == LayerKind::kDown ||
                        (l.kind == LayerKind::kConv && l.stride == 2);
    if (halves) {
      if (g.height % 2 || g.width % 2 || g.height < 2 || g.width < 2) {
        throw ShapeError("downsampling an odd-sized grid");
      }
      g = {g.height / 2, g.width / 2};
    } else if (l.kind == LayerKind::kUp) {
      g = {g.height * 2, g.width * 2};
    }
  }
  if (!(g == in)) throw ShapeError("architecture output grid differs from its input grid");
  return g;
}

int ArchSpec::conv_count() const {
  int n = 0;
  for (const Layer& l : layers) n += l.kind == LayerKind::kConv;
  return n;
}

int ArchSpec::relu_count() const {
  int n = 0;
  for (const Layer& l : layers) n += l.kind == LayerKind::kRelu;
  return n;
}

bool ArchSpec::is_single_hidden_layer() const {
  return layers.size() == 3 && layers[0].kind == LayerKind::kConv && layers[0].stride == 1 &&
         layers[1].kind == LayerKind::kRelu && layers[2].kind == LayerKind::kConv &&
         layers[2].r == 1 && layers[2].stride == 1;
}

namespace {

ResampleKind parse_mode(const json& j) {
  const std::string m = j.value("mode", "bilinear");
  if (m == "bilinear") return ResampleKind::kBilinear;
  if (m == "nearest") return ResampleKind::kNearest;
  throw ConfigError("unknown resampling mode '" + m + "'");
}

const char* mode_name(ResampleKind k) {
  return k == ResampleKind::kBilinear ? "bilinear" : "nearest";
}

}  // namespace

ArchSpec parse_arch_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("architecture JSON: ") + e.what());
  }
  ArchSpec a;
  try {
    a.name = j.value("name", "custom");
    a.sigma_w_sq = j.value("sigma_w_sq", 2.0);
    a.input_channels = j.value("input_channels", 1);
    a.output_channels = j.value("output_channels", 1);
    a.skip_connections = j.value("skip_connections", false);
    if (!j.contains("layers") || !j["layers"].is_array()) {
      throw ConfigError("architecture JSON needs a 'layers' array");
    }
    for (const json& l : j["layers"]) {
      const std::string kind = l.at("kind").get<std::string>();
      if (kind == "conv") {
        a.layers.push_back(Layer::conv(l.at("r").get<int>(), l.value("stride", 1)));
      } else if (kind == "relu") {
        a.layers.push_back(Layer::relu());
      } else if (kind == "down") {
        a.layers.push_back(Layer::down(parse_mode(l)));
      } else if (kind == "up") {
        a.layers.push_back(Layer::up(parse_mode(l)));
      } else {
        throw ConfigError("unknown layer kind '" + kind + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("architecture JSON: ") + e.what());
  }
  a.validate();
  return a;
}

ArchSpec load_arch(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read architecture file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_arch_json(ss.str());
}

std::string arch_to_json(const ArchSpec& a) {
  json layers = json::array();
  for (const Layer& l : a.layers) {
    switch (l.kind) {
      case LayerKind::kConv: layers.push_back({{"kind", "conv"}, {"r", l.r}, {"stride", l.stride}}); break;
      case LayerKind::kRelu: layers.push_back({{"kind", "relu"}}); break;
      case LayerKind::kDown: layers.push_back({{"kind", "down"}, {"mode", mode_name(l.mode)}}); break;
      case LayerKind::kUp: layers.push_back({{"kind", "up"}, {"mode", mode_name(l.mode)}}); break;
    }
  }
  json j = {{"name", a.name},
            {"sigma_w_sq", a.sigma_w_sq},
            {"input_channels", a.input_channels},
            {"output_channels", a.output_channels},
            {"skip_connections", a.skip_connections},
            {"layers", layers}};
  return j.dump(2);
}

ArchSpec vanilla_arch(int r, int channels) {
  ArchSpec a;
  a.name = "vanilla";
  a.layers = {Layer::conv(r), Layer::relu(), Layer::conv(1)};
  a.input_channels = a.output_channels = channels;
  return a;
}

ArchSpec deep_vanilla_arch(int depth, int r, int channels) {
  if (depth < 2) throw ConfigError("deep vanilla needs depth >= 2");
  ArchSpec a;
  a.name = "deep_vanilla";
  for (int i = 0; i + 1 < depth; ++i) {
    a.layers.push_back(Layer::conv(r));
    a.layers.push_back(Layer::relu());
  }
  a.layers.push_back(Layer::conv(1));
  a.input_channels = a.output_channels = channels;
  return a;
}

ArchSpec autoencoder_arch(int levels, int channels, bool skips) {
  if (levels < 1) throw ConfigError("autoencoder needs at least one level");
  ArchSpec a;
  a.name = skips ? "unet" : "autoencoder";
  for (int i = 0; i < levels; ++i) {
    a.layers.push_back(Layer::conv(3));
    a.layers.push_back(Layer::relu());
    a.layers.push_back(Layer::down());
  }
  a.layers.push_back(Layer::conv(3));
  a.layers.push_back(Layer::relu());
  a.layers.push_back(Layer::conv(3));
  for (int i = 0; i < levels; ++i) {
    a.layers.push_back(Layer::up());
    a.layers.push_back(Layer::conv(3));
    a.layers.push_back(Layer::relu());
  }
  a.layers.push_back(Layer::conv(1));
  a.input_channels = a.output_channels = channels;
  a.skip_connections = skips;
  return a;
}

}  // namespace ntkf
