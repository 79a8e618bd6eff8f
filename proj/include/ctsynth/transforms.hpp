#pragma once

#include <array>

#include "ctsynth/tensor.hpp"

namespace ctsynth {

// Fixed, non-learned rearrangements and the Haar analysis used by the losses.
// Image tensors are NCHW. For space_to_depth the output channel of input
// channel c at in-block offset (row, col) is c*block*block + row*block + col.

template <typename T>
Tensor<T> space_to_depth(const Tensor<T>& x, int block);

template <typename T>
Tensor<T> depth_to_space(const Tensor<T>& x, int block);

/// 1-D sub-pixel rearrangement along the last axis: [N, C*r, H, W] -> [N, C, H, W*r],
/// out[n, c, y, x*r + t] = in[n, c*r + t, y, x].
template <typename T>
Tensor<T> shuffle_width(const Tensor<T>& x, int r);

template <typename T>
Tensor<T> unshuffle_width(const Tensor<T>& x, int r);

/// Linear upsampling of the last axis by r; out[z*r + t] blends in[z] and in[z+1]
/// with weight t/r (the last sample is edge-replicated).
template <typename T>
Tensor<T> upsample_linear_width(const Tensor<T>& x, int r);

template <typename T>
Tensor<T> upsample_linear_width_adjoint(const Tensor<T>& grad, int r);

/// One orthonormal Haar analysis level on a stack of images [N, H, W].
/// Returns [N, 4, ceil(H/2), ceil(W/2)] with bands ordered LL, LH, HL, HH.
/// Odd sizes are edge-replicated by one row/column before the halving.
template <typename T>
Tensor<T> haar_level(const Tensor<T>& x);

/// Transpose of haar_level, including the fold-back of replicated padding.
template <typename T>
Tensor<T> haar_level_adjoint(const Tensor<T>& coeffs, int height, int width);

template <typename T>
struct WaveletScale {
  Tensor<T> ll;
  Tensor<T> lh;
  Tensor<T> hl;
  Tensor<T> hh;
};

template <typename T>
struct WaveletPyramid {
  static constexpr int kScales = 3;
  std::array<WaveletScale<T>, kScales> scales;
};

/// Three-scale Haar pyramid of a single 2-D image [H, W]. Each scale keeps LL
/// only to feed the next one; the losses use LH, HL and HH. Requires at least
/// 8x8. The graph op haar_level has no minimum and is what the losses call.
template <typename T>
WaveletPyramid<T> haar_pyramid(const Tensor<T>& image);

}  // namespace ctsynth
