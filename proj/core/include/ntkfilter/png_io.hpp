#pragma once

#include <filesystem>

#include "ntkfilter/image.hpp"

namespace ntkf {

/// Reads an 8-bit grayscale or RGB PNG (palette and alpha are expanded or
/// stripped) and returns it normalized to [-0.5, 0.5].
ImageTensor load_png(const std::filesystem::path& path);

/// Writes a normalized image: denormalize, clip to [0, 1], round to 8 bits.
void save_png(const ImageTensor& normalized, const std::filesystem::path& path);

/// Writes each channel stretched so that its min maps to 0 and max to 255.
/// Used for eigenimages, which have no natural intensity range.
void save_png_stretched(const ImageTensor& image, const std::filesystem::path& path);

}  // namespace ntkf
