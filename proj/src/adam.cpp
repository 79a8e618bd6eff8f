#include "ctsynth/adam.hpp"

#include <cmath>

namespace ctsynth {

void AdamState::reset(const std::vector<const Tensor<float>*>& params) {
  step = 0;
  m.clear();
  v.clear();
  for (const Tensor<float>* p : params) {
    m.emplace_back(p->shape());
    v.emplace_back(p->shape());
  }
}

void adam_step(AdamState& s, const std::vector<Tensor<float>*>& params, const std::vector<Tensor<float>>& grads,
               double lr) {
  require(params.size() == grads.size(), ErrorKind::shape, "adam: parameter/gradient count mismatch");
  if (s.m.empty()) {
    std::vector<const Tensor<float>*> view(params.begin(), params.end());
    s.reset(view);
  }
  require(s.m.size() == params.size(), ErrorKind::shape, "adam: state does not match parameter list");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<float>& p = *params[k];
    const Tensor<float>& g = grads[k];
    require(p.shape() == g.shape() && p.shape() == s.m[k].shape(), ErrorKind::shape,
            "adam: shape mismatch for parameter " + std::to_string(k));
    float* m = s.m[k].data();
    float* v = s.v[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = s.beta1 * m[i] + (1.0 - s.beta1) * gi;
      const double vi = s.beta2 * v[i] + (1.0 - s.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / c1, vhat = vi / c2;
      p[i] = static_cast<float>(p[i] - lr * mhat / (std::sqrt(vhat) + s.eps));
    }
  }
}

double scheduled_lr(double base, double decay, int decay_epoch, int epoch) {
  return epoch > decay_epoch ? base * decay : base;
}

}  // namespace ctsynth
