#pragma once

#include <limits>
#include <string>

#include "ctsynth/volume.hpp"

namespace ctsynth {

/// 10 log10(L^2 / MSE) over all voxels, L = gt intensity range width.
/// An exact match returns +infinity.
double psnr(const Volume& pred, const Volume& gt);

struct SsimResult {
  double mean = 1.0;
  /// Set when some image was smaller than the 11x11 window and global
  /// statistics were used instead.
  bool global_fallback = false;
};

/// Mean SSIM over the 2-D images of one view: 11x11 Gaussian window
/// (sigma 1.5) over valid positions, C1 = (0.01 L)^2, C2 = (0.03 L)^2.
SsimResult ssim_view(const Volume& pred, const Volume& gt, ViewAxis view);

enum class BaselineMethod { nearest, linear };

/// z interpolation to r*l - r + 1 slices; originals kept exactly. Nearest
/// picks the lower slice on a midpoint tie.
Volume baseline_interpolate(const Volume& lowres, int r, BaselineMethod method);

struct EvalScores {
  double psnr = 0.0;
  double ssim_a = 0.0;
  double ssim_c = 0.0;
  double ssim_s = 0.0;
  bool ssim_fallback = false;
};

EvalScores evaluate(const Volume& pred, const Volume& gt);

struct EvalReport {
  EvalScores prediction;
  bool has_baselines = false;
  EvalScores nearest;
  EvalScores linear;
  std::size_t voxels = 0;
};

/// Infinite PSNR is written as the string "inf".
std::string to_json(const EvalReport& report, int indent = 2);

}  // namespace ctsynth
