#pragma once

#include <filesystem>
#include <iosfwd>

#include "ctsynth/volume.hpp"

namespace ctsynth {

// .cvol layout: one UTF-8 JSON header line
//   {"h":..,"w":..,"l":..,"sy":..,"sx":..,"sz":..,"lo":..,"hi":..,"dtype":"f32le"}
// then h*w*l little-endian float32 values, z-major, then y, then x.

void write_volume(const Volume& v, std::ostream& out);
void write_volume(const Volume& v, const std::filesystem::path& path);

Volume read_volume(std::istream& in);
Volume read_volume(const std::filesystem::path& path);

}  // namespace ctsynth
