#pragma once

#include <cstdint>
#include <vector>

#include "ctsynth/graph.hpp"

namespace ctsynth::ad {

// Differentiable ops. Images are NCHW; "rows" tensors are [rows, features].
// Reductions accumulate in double in a fixed left-to-right order.

/// 2-D convolution, stride 1, zero "same" padding, odd square kernel.
/// x [N, Cin, H, W], weight [Cout, Cin, k, k], bias [Cout] or an invalid Var.
template <typename T>
Var conv2d(Graph<T>& g, Var x, Var weight, Var bias);

template <typename T>
Var relu(Graph<T>& g, Var x);
template <typename T>
Var sigmoid(Graph<T>& g, Var x);

template <typename T>
Var add(Graph<T>& g, Var x, Var y);
template <typename T>
Var sub(Graph<T>& g, Var x, Var y);
template <typename T>
Var mul(Graph<T>& g, Var x, Var y);
template <typename T>
Var scale(Graph<T>& g, Var x, double alpha);
template <typename T>
Var add_scalar(Graph<T>& g, Var x, double c);

/// Concatenation along `axis` (channels for images when axis == 1).
template <typename T>
Var concat(Graph<T>& g, const std::vector<Var>& xs, int axis);
template <typename T>
Var concat_channels(Graph<T>& g, Var x, Var y) {
  return concat(g, {x, y}, 1);
}

/// x [N, in], weight [out, in], bias [out] -> [N, out].
template <typename T>
Var linear(Graph<T>& g, Var x, Var weight, Var bias);

/// [N, C, H, W] -> [N, C]
template <typename T>
Var global_avg_pool(Graph<T>& g, Var x);

/// x [N, C, H, W] scaled per (n, c) by s [N, C].
template <typename T>
Var mul_channels(Graph<T>& g, Var x, Var s);

/// Softmax of a rank-2 tensor along axis 0 or 1.
template <typename T>
Var softmax(Graph<T>& g, Var x, int axis);

template <typename T>
Var mse(Graph<T>& g, Var x, Var y);
template <typename T>
Var sum(Graph<T>& g, Var x);
template <typename T>
Var mean(Graph<T>& g, Var x);

template <typename T>
Var matmul(Graph<T>& g, Var x, Var y);
template <typename T>
Var transpose(Graph<T>& g, Var x);

/// Each row divided by its L2 norm.
template <typename T>
Var l2_normalize_rows(Graph<T>& g, Var x);
/// [rows, d] -> [rows] of L2 norms. The subgradient at a zero row is 0.
template <typename T>
Var row_norms(Graph<T>& g, Var x);

template <typename T>
Var gather_rows(Graph<T>& g, Var x, const std::vector<int>& rows);
template <typename T>
Var gather_flat(Graph<T>& g, Var x, const std::vector<std::int64_t>& indices);

template <typename T>
Var reshape(Graph<T>& g, Var x, Shape shape);
template <typename T>
Var permute(Graph<T>& g, Var x, const std::vector<int>& perm);
template <typename T>
Var narrow(Graph<T>& g, Var x, int axis, int start, int length);

template <typename T>
Var space_to_depth(Graph<T>& g, Var x, int block);
template <typename T>
Var depth_to_space(Graph<T>& g, Var x, int block);
template <typename T>
Var shuffle_width(Graph<T>& g, Var x, int r);
template <typename T>
Var upsample_linear_width(Graph<T>& g, Var x, int r);

/// One Haar analysis level on images [N, H, W] -> [N, 4, ceil(H/2), ceil(W/2)].
template <typename T>
Var haar_level(Graph<T>& g, Var x);

/// Builds a slice stack with r-1 synthesized planes between each pair of
/// originals. originals [B, l, H, W], synthesized [B*(l-1), r-1, H, W]
/// (pair-major per batch item) -> [B, r*(l-1)+1, H, W].
template <typename T>
Var interleave_slices(Graph<T>& g, Var originals, Var synthesized, int r);

}  // namespace ctsynth::ad
