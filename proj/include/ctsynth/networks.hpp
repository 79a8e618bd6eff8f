#pragma once

#include <cstdint>
#include <string>

#include "ctsynth/memory.hpp"
#include "ctsynth/params.hpp"
#include "ctsynth/volume.hpp"

namespace ctsynth {

struct NetConfig {
  static constexpr int kGroups = 3;  // encoder groups; the decoder mirrors them

  int r = 2;
  int base_channels = 32;
  int blocks_per_group = 3;
  int s2d_block = 4;
  int attention_reduction = 4;

  // Pixel-wise network (coronal/sagittal). Kept narrower than the slice-wise one.
  int pint_channels = 16;
  int pint_groups = 2;
  int pint_blocks = 2;

  /// Both networks predict a residual over linear interpolation along z.
  bool global_skip = true;
  /// The pixel-wise network reproduces its input columns exactly.
  bool pint_keep_originals = false;

  /// Channels of the per-slice head conv; s2d_block^2 * head_channels == base_channels.
  int head_channels() const { return base_channels / (s2d_block * s2d_block); }
  void validate() const;
};

/// Seeded Kaiming-uniform weights, zero biases, zero last conv in every
/// residual block and zero output layer.
ParamSet<float> build_sint(const NetConfig& cfg, std::uint64_t seed);
ParamSet<float> build_pint(const NetConfig& cfg, std::uint64_t seed);

/// y = x + CA(conv(relu(conv(x)))), CA(u) = u * sigmoid(fc2(relu(fc1(avgpool(u))))).
template <typename T>
ad::Var residual_block(ad::Graph<T>& g, const BoundParams<T>& p, const std::string& prefix, ad::Var x);

template <typename T>
struct SIntOutput {
  ad::Var slices;  // [B, r-1, H, W]
  ad::Var e3;      // [B, C, H/s, W/s]
  ReadResult read;  // empty when the memory is disabled
};

/// Synthesizes r-1 slices between x_i and x_{i+1} (both [B, 1, H, W]).
/// An invalid bank Var skips the memory read (D3 = E3).
template <typename T>
SIntOutput<T> sint_forward(ad::Graph<T>& g, const BoundParams<T>& p, ad::Var bank, ad::Var xi, ad::Var xi1,
                           const NetConfig& cfg);

template <typename T>
struct SIntVolume {
  ad::Var volume;  // [B, r*l-r+1, H, W]
  SIntOutput<T> pairs;
};

/// vol [B, l, H, W]; originals are copied to 0-based positions k*r.
template <typename T>
SIntVolume<T> sint_volume(ad::Graph<T>& g, const BoundParams<T>& p, ad::Var bank, ad::Var vol,
                          const NetConfig& cfg);

/// Images [N, 1, H, L] -> [N, 1, H, r*L - r + 1] (upsampled by r, last r-1 columns dropped).
template <typename T>
ad::Var pint_images(ad::Graph<T>& g, const BoundParams<T>& p, ad::Var images, const NetConfig& cfg);

/// vol [B, l, H, W] -> [B, r*l-r+1, H, W] by upsampling every coronal or sagittal image.
template <typename T>
ad::Var pint_volume(ad::Graph<T>& g, const BoundParams<T>& p, ad::Var vol, ViewAxis view, const NetConfig& cfg);

// Inference on whole volumes with frozen parameters and bank. An empty bank
// disables the memory read.
Volume sint_volume(const ParamSet<float>& params, const MemoryBank& bank, const Volume& v, const NetConfig& cfg);
Volume pint_volume(const ParamSet<float>& params, const Volume& v, ViewAxis view, const NetConfig& cfg);
ViewImage pint_image(const ParamSet<float>& params, const ViewImage& image, const NetConfig& cfg);

}  // namespace ctsynth
