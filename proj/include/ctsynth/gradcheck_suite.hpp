#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ctsynth {

struct GradcheckCase {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t coords = 0;
  bool passed() const { return max_rel_error < tolerance; }
};

/// Finite-difference checks (64-bit) of every differentiable op, the residual
/// block, memory read and regularizers, and the losses. With `full`, the tiny
/// slice-wise and pixel-wise networks are checked end to end as well.
std::vector<GradcheckCase> run_gradcheck_suite(bool full, std::uint64_t seed = 0);

}  // namespace ctsynth
