#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ctsynth/graph.hpp"
#include "ctsynth/volume.hpp"

namespace ctsynth {

/// Internal loss on [B, L, H, W] stacks: MSE plus, for each of 3 Haar scales,
/// the MSE over the LH/HL/HH coefficients of the images of `view`. The target
/// may have extra trailing slices; they are ignored.
template <typename T>
ad::Var internal_loss(ad::Graph<T>& g, ad::Var pred, ad::Var target, ViewAxis view, bool wavelet = true);

double internal_loss(const Volume& pred, const Volume& target, ViewAxis view, bool wavelet = true);

/// Voxels on which two volumes agree best: the ceil(gamma * P) smallest squared
/// differences among the P candidates, ties broken by linear index. Indices are
/// linear (z, y, x) offsets, sorted ascending.
struct ConsistencySet {
  std::vector<std::int64_t> indices;
  double gamma = 1.0;
  std::size_t candidates = 0;
};

/// a and b are volumes of `slices` planes of `plane` voxels. With
/// mask_originals, planes z (0-based) with z % r == 0 are not candidates.
template <typename T>
ConsistencySet select_consistent(std::span<const T> a, std::span<const T> b, int slices, double gamma,
                                 bool mask_originals, int r);

ConsistencySet select_consistent(const Volume& a, const Volume& b, double gamma, bool mask_originals, int r);

/// Mean squared difference over the set, differentiable in both volumes.
template <typename T>
ad::Var cmd_loss(ad::Graph<T>& g, ad::Var a, ad::Var b, const std::vector<std::int64_t>& indices);

double cmd_loss(const Volume& a, const Volume& b, const ConsistencySet& set);

struct LossWeights {
  double internal_a = 1.0;
  double internal_c = 1.0;
  double internal_s = 1.0;
  double cmd = 0.15;
  double memory = 0.1;
};

struct LossReport {
  double int_a = 0.0;
  double int_c = 0.0;
  double int_s = 0.0;
  std::vector<double> cmd_c_passes;  // L_c^n, n = 1..N
  std::vector<double> cmd_s_passes;  // L_s^n
  double cmd_c = 0.0;                // mean over passes
  double cmd_s = 0.0;
  double com = 0.0;
  double sep = 0.0;
  double total = 0.0;
};

/// int_a + int_c + int_s + cmd (cmd_c + cmd_s) + memory (com + sep), with
/// each weight applied to its own term. Rejects non-finite parts.
double total_loss(const LossReport& parts, const LossWeights& weights = {});

/// Mean of the per-pass values; 0 for no passes.
double pass_mean(const std::vector<double>& passes);

}  // namespace ctsynth
