#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ctsynth/volume.hpp"

namespace ctsynth {

/// 8-bit grayscale PNG, row-major.
void write_png_gray(const std::filesystem::path& path, int rows, int cols, const std::vector<std::uint8_t>& pixels);

/// One PNG per image of the view, mapped linearly from the intensity range to
/// 0..255. Files are named <prefix>_<view>_<NNNN>.png with the 1-based index.
/// Returns the count.
int dump_view_png(const Volume& v, ViewAxis view, const std::filesystem::path& dir, const std::string& prefix);

}  // namespace ctsynth
