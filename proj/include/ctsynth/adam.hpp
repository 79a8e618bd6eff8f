#pragma once

#include <cstdint>
#include <vector>

#include "ctsynth/tensor.hpp"

namespace ctsynth {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor<float>> m;
  std::vector<Tensor<float>> v;

  /// Zero moments matching `params`.
  void reset(const std::vector<const Tensor<float>*>& params);
  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update of every parameter in order.
void adam_step(AdamState& state, const std::vector<Tensor<float>*>& params, const std::vector<Tensor<float>>& grads,
               double lr);

/// Learning rate for a 1-based epoch: base * decay once epoch > decay_epoch.
double scheduled_lr(double base, double decay, int decay_epoch, int epoch);

}  // namespace ctsynth
