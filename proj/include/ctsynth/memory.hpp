#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ctsynth/graph.hpp"

namespace ctsynth {

/// m x d pattern store with unit-norm rows.
struct MemoryBank {
  Tensor<float> items;  // [m, d]

  int size() const { return items.dim(0); }
  int dim() const { return items.dim(1); }

  /// Rows uniform on the unit sphere, seeded.
  static MemoryBank random(int m, int d, std::uint64_t seed);
};

/// Per-position read output. Positions are the rows of `features`, i.e. every
/// (batch, y, x) location of E3 in that order.
struct ReadResult {
  ad::Var features;  // E3 as rows [P, d]
  ad::Var weights;   // p [P, m]
  ad::Var recon;     // D3 as rows [P, d]
  std::vector<int> z_pos;
  std::vector<int> z_neg;
};

/// p = softmax_z <E3[x,y], M[z]>, D3 = sum_z p M[z]. e3 is [B, d, H, W]; the
/// result's recon is returned as rows, see feature_map() to go back.
template <typename T>
ReadResult memory_read(ad::Graph<T>& g, ad::Var e3, ad::Var bank);

/// Rows [B*H*W, d] back to [B, d, H, W].
template <typename T>
ad::Var feature_map(ad::Graph<T>& g, ad::Var rows, int batch, int height, int width);

/// Indices of the largest and second largest entry per row (ties -> smaller index).
template <typename T>
std::pair<std::vector<int>, std::vector<int>> nearest_two(const Tensor<T>& weights);

/// Training-time update, outside any graph. For each item z with a nonempty
/// assignment set U_z = {positions whose z_pos is z}:
///   q = softmax over U_z of <M[z], E3[pos]>, divided by its max over U_z
///   M[z] <- normalize(M[z] + sum_{pos in U_z} q E3[pos])
/// Items with no assigned positions are left untouched.
template <typename T>
Tensor<T> memory_update(const Tensor<T>& bank, const Tensor<T>& features, const std::vector<int>& z_pos);

struct MemoryLosses {
  ad::Var compactness;
  ad::Var separateness;
};

/// Sums over positions of ||E3 - M[z_pos]|| and
/// max(||E3 - M[z_pos]|| - ||E3 - M[z_neg]|| + alpha, 0).
template <typename T>
MemoryLosses memory_regularizers(ad::Graph<T>& g, const ReadResult& read, ad::Var bank, double alpha = 1.0);

}  // namespace ctsynth
