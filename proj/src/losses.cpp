#include "ctsynth/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctsynth/ops.hpp"

namespace ctsynth {

namespace {

// [B, L, H, W] -> one image per plane of the view: [N, rows, cols].
template <typename T>
ad::Var view_images(ad::Graph<T>& g, ad::Var vol, ViewAxis view) {
  const Shape& s = g.shape(vol);
  const int b = s[0], l = s[1], h = s[2], w = s[3];
  switch (view) {
    case ViewAxis::axial:
      return ad::reshape(g, vol, {b * l, h, w});
    case ViewAxis::coronal:
      return ad::reshape(g, ad::permute(g, vol, {0, 2, 3, 1}), {b * h, w, l});
    case ViewAxis::sagittal:
      return ad::reshape(g, ad::permute(g, vol, {0, 3, 2, 1}), {b * w, h, l});
  }
  return vol;
}

}  // namespace

template <typename T>
ad::Var internal_loss(ad::Graph<T>& g, ad::Var pred, ad::Var target, ViewAxis view, bool wavelet) {
  const Shape& ps = g.shape(pred);
  const Shape& ts = g.shape(target);
  require(ps.size() == 4 && ts.size() == 4 && ps[0] == ts[0] && ps[2] == ts[2] && ps[3] == ts[3] && ps[1] <= ts[1],
          ErrorKind::shape, "internal loss: prediction " + shape_str(ps) + " incompatible with target " + shape_str(ts));
  if (ts[1] > ps[1]) target = ad::narrow(g, target, 1, 0, ps[1]);
  ad::Var loss = ad::mse(g, pred, target);
  if (!wavelet) return loss;
  ad::Var lp = view_images(g, pred, view);
  ad::Var lt = view_images(g, target, view);
  for (int t = 0; t < 3; ++t) {
    ad::Var cp = ad::haar_level(g, lp);
    ad::Var ct = ad::haar_level(g, lt);
    loss = ad::add(g, loss, ad::mse(g, ad::narrow(g, cp, 1, 1, 3), ad::narrow(g, ct, 1, 1, 3)));
    if (t < 2) {
      const Shape& cs = g.shape(cp);
      lp = ad::reshape(g, ad::narrow(g, cp, 1, 0, 1), {cs[0], cs[2], cs[3]});
      lt = ad::reshape(g, ad::narrow(g, ct, 1, 0, 1), {cs[0], cs[2], cs[3]});
    }
  }
  return loss;
}

double internal_loss(const Volume& pred, const Volume& target, ViewAxis view, bool wavelet) {
  ad::Graph<double> g;
  ad::Var loss = internal_loss(g, g.constant(to_tensor<double>(pred)), g.constant(to_tensor<double>(target)), view, wavelet);
  return g.value(loss)[0];
}

template <typename T>
ConsistencySet select_consistent(std::span<const T> a, std::span<const T> b, int slices, double gamma,
                                 bool mask_originals, int r) {
  require(a.size() == b.size(), ErrorKind::shape, "select_consistent: volume sizes differ");
  require(gamma > 0.0 && gamma <= 1.0, ErrorKind::usage, "select_consistent: gamma must be in (0, 1]");
  require(slices >= 1 && a.size() % static_cast<std::size_t>(slices) == 0, ErrorKind::shape,
          "select_consistent: size is not a whole number of slices");
  require(!mask_originals || r >= 1, ErrorKind::usage, "select_consistent: r must be >= 1");
  const std::size_t plane = a.size() / static_cast<std::size_t>(slices);

  struct Entry {
    double d2;
    std::int64_t index;
  };
  std::vector<Entry> cand;
  cand.reserve(a.size());
  for (int z = 0; z < slices; ++z) {
    if (mask_originals && z % r == 0) continue;
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t i = static_cast<std::size_t>(z) * plane + p;
      const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      cand.push_back({d * d, static_cast<std::int64_t>(i)});
    }
  }
  require(!cand.empty(), ErrorKind::shape, "select_consistent: no candidate voxels");
  const std::size_t k = static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(cand.size()) - 1e-9));
  const std::size_t count = std::clamp<std::size_t>(k, 1, cand.size());
  auto less = [](const Entry& x, const Entry& y) { return x.d2 < y.d2 || (x.d2 == y.d2 && x.index < y.index); };
  if (count < cand.size()) std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(count), cand.end(), less);

  ConsistencySet set;
  set.gamma = gamma;
  set.candidates = cand.size();
  set.indices.reserve(count);
  for (std::size_t i = 0; i < count; ++i) set.indices.push_back(cand[i].index);
  std::sort(set.indices.begin(), set.indices.end());
  return set;
}

ConsistencySet select_consistent(const Volume& a, const Volume& b, double gamma, bool mask_originals, int r) {
  require(a.same_shape(b), ErrorKind::shape, "select_consistent: shape mismatch");
  return select_consistent<float>(a.voxels(), b.voxels(), a.slices(), gamma, mask_originals, r);
}

template <typename T>
ad::Var cmd_loss(ad::Graph<T>& g, ad::Var a, ad::Var b, const std::vector<std::int64_t>& indices) {
  require(g.shape(a) == g.shape(b), ErrorKind::shape, "cmd loss: shape mismatch");
  require(!indices.empty(), ErrorKind::shape, "cmd loss: empty consistency set");
  return ad::mse(g, ad::gather_flat(g, a, indices), ad::gather_flat(g, b, indices));
}

double cmd_loss(const Volume& a, const Volume& b, const ConsistencySet& set) {
  require(a.same_shape(b), ErrorKind::shape, "cmd loss: shape mismatch");
  require(!set.indices.empty(), ErrorKind::shape, "cmd loss: empty consistency set");
  double acc = 0.0;
  for (std::int64_t i : set.indices) {
    const double d = static_cast<double>(a.voxels()[static_cast<std::size_t>(i)]) - b.voxels()[static_cast<std::size_t>(i)];
    acc += d * d;
  }
  return acc / static_cast<double>(set.indices.size());
}

double pass_mean(const std::vector<double>& passes) {
  if (passes.empty()) return 0.0;
  return std::accumulate(passes.begin(), passes.end(), 0.0) / static_cast<double>(passes.size());
}

double total_loss(const LossReport& p, const LossWeights& w) {
  for (double v : {p.int_a, p.int_c, p.int_s, p.cmd_c, p.cmd_s, p.com, p.sep})
    require(std::isfinite(v), ErrorKind::numerical, "total loss: non-finite loss part");
  return w.internal_a * p.int_a + w.internal_c * p.int_c + w.internal_s * p.int_s + w.cmd * (p.cmd_c + p.cmd_s) +
         w.memory * (p.com + p.sep);
}

#define CTSYNTH_INSTANTIATE(T)                                                                                   \
  template ad::Var internal_loss(ad::Graph<T>&, ad::Var, ad::Var, ViewAxis, bool);                              \
  template ConsistencySet select_consistent(std::span<const T>, std::span<const T>, int, double, bool, int);   \
  template ad::Var cmd_loss(ad::Graph<T>&, ad::Var, ad::Var, const std::vector<std::int64_t>&);

CTSYNTH_INSTANTIATE(float)
CTSYNTH_INSTANTIATE(double)

#undef CTSYNTH_INSTANTIATE

}  // namespace ctsynth
