#include "ntkfilter/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "ntkfilter/errors.hpp"

namespace ntkf {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp, png_const_charp msg) {
  throw IoError(std::string("libpng: ") + msg);
}

void png_warning_handler(png_structp, png_const_charp) {}

void write_8bit(int channels, Geometry g, const std::vector<png_byte>& pixels,
                const std::filesystem::path& path) {
  if (channels != 1 && channels != 3) throw IoError("PNG output supports 1 or 3 channels");
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            png_error_handler, png_warning_handler);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(g.width), static_cast<png_uint_32>(g.height),
               8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(g.width) * channels;
  for (int y = 0; y < g.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(pixels.data() + y * stride));
  }
  png_write_end(png, nullptr);
}

std::vector<png_byte> interleave(const ImageTensor& unit, bool clip) {
  const int c = unit.channels();
  const std::size_t d = unit.pixels();
  std::vector<png_byte> out(d * c);
  for (int ch = 0; ch < c; ++ch) {
    auto src = unit.channel(ch);
    for (std::size_t i = 0; i < d; ++i) {
      double v = src[i];
      if (clip) v = std::clamp(v, 0.0, 1.0);
      out[i * c + ch] = static_cast<png_byte>(std::lround(v * 255.0));
    }
  }
  return out;
}

}  // namespace

ImageTensor load_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());

  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw IoError(path.string() + " is not a PNG file");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_error_handler, png_warning_handler);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth == 16) throw IoError(path.string() + ": unsupported bit depth 16");

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    throw IoError(path.string() + ": unsupported channel layout");
  }
  const Geometry g{static_cast<int>(png_get_image_height(png, info)),
                   static_cast<int>(png_get_image_width(png, info))};
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> raw(rowbytes * g.height);
  std::vector<png_bytep> rows(g.height);
  for (int y = 0; y < g.height; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  ImageTensor out(channels, g);
  for (int c = 0; c < channels; ++c) {
    auto dst = out.channel(c);
    for (int y = 0; y < g.height; ++y)
      for (int x = 0; x < g.width; ++x)
        dst[static_cast<std::size_t>(y) * g.width + x] =
            raw[y * rowbytes + static_cast<std::size_t>(x) * channels + c] / 255.0 - 0.5;
  }
  return out;
}

void save_png(const ImageTensor& normalized, const std::filesystem::path& path) {
  write_8bit(normalized.channels(), normalized.geometry(),
             interleave(denormalize(normalized), /*clip=*/true), path);
}

void save_png_stretched(const ImageTensor& image, const std::filesystem::path& path) {
  ImageTensor unit = image;
  for (int c = 0; c < unit.channels(); ++c) {
    auto ch = unit.channel(c);
    const auto [lo, hi] = std::minmax_element(ch.begin(), ch.end());
    const double lo_v = *lo, span = *hi - *lo;
    for (double& v : ch) v = span > 0.0 ? (v - lo_v) / span : 0.5;
  }
  write_8bit(unit.channels(), unit.geometry(), interleave(unit, /*clip=*/true), path);
}

}  // namespace ntkf
