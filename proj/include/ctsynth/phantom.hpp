#pragma once

#include <cstdint>
#include <string_view>

#include "ctsynth/volume.hpp"

namespace ctsynth {

enum class PhantomKind { ellipsoids, bandlimited_noise, layered_sine };

std::string_view to_string(PhantomKind kind);
PhantomKind parse_phantom(std::string_view name);

struct PhantomOptions {
  /// Peak deviation from 0.5 for layered_sine. Zero gives a constant volume.
  double amplitude = 0.35;
};

/// Procedural test volume with intensities in [0, 1]. Every z-frequency stays
/// below 0.125 cycles per slice, so subsampling by r <= 4 does not alias.
Volume make_phantom(PhantomKind kind, int height, int width, int slices, std::uint64_t seed,
                    const PhantomOptions& options = {});

}  // namespace ctsynth
