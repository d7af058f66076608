#pragma once

#include <filesystem>

#include "dlseg/raster.hpp"

namespace dlseg {

/// 8-bit RGB PNG. Values are rounded to the nearest 1/255 on write.
Image read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const Image& img);

/// 8-bit single-channel PNG holding raw class ids.
LabelMask read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const LabelMask& mask);

}  // namespace dlseg
