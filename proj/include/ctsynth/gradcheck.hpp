#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ctsynth/graph.hpp"

namespace ctsynth::ad {

/// Builds a scalar from leaves created for each input tensor.
using ScalarFn = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

struct GradcheckOptions {
  double eps = 1e-3;
  /// Per-input cap on checked coordinates; 0 checks every coordinate.
  /// Sampled coordinates are drawn deterministically from `seed`.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
  /// Lower bound on the relative-error denominator. Gradients far below the
  /// function's rounding noise divided by eps cannot be resolved numerically.
  double denominator_floor = 1e-8;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  /// Worst coordinate, for diagnostics.
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients with central differences
/// (f(x+eps e) - f(x-eps e)) / (2 eps). The relative error of a coordinate is
/// |a - n| / max(|a|, |n|, denominator_floor).
GradcheckReport gradcheck(const ScalarFn& f, const std::vector<Tensor<double>>& inputs,
                          const GradcheckOptions& options = {});

/// Single-input convenience form returning the max relative error.
double gradcheck(const std::function<Var(Graph<double>&, Var)>& f, const Tensor<double>& x0, double eps = 1e-3);

}  // namespace ctsynth::ad
