#include "ctsynth/memory.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ctsynth/ops.hpp"

namespace ctsynth {

MemoryBank MemoryBank::random(int m, int d, std::uint64_t seed) {
  require(m >= 2 && d >= 1, ErrorKind::usage, "memory bank needs m >= 2 items of dimension >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor<float> items({m, d});
  for (int z = 0; z < m; ++z) {
    std::vector<double> row(static_cast<std::size_t>(d));
    double norm = 0.0;
    while (norm < 1e-12) {
      norm = 0.0;
      for (double& v : row) {
        v = normal(rng);
        norm += v * v;
      }
    }
    norm = std::sqrt(norm);
    for (int c = 0; c < d; ++c) items.at(z, c) = static_cast<float>(row[static_cast<std::size_t>(c)] / norm);
  }
  return {std::move(items)};
}

template <typename T>
std::pair<std::vector<int>, std::vector<int>> nearest_two(const Tensor<T>& weights) {
  require(weights.rank() == 2 && weights.dim(1) >= 2, ErrorKind::shape, "nearest_two: need [P, m] with m >= 2");
  const int p = weights.dim(0), m = weights.dim(1);
  std::vector<int> pos(static_cast<std::size_t>(p)), neg(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) {
    const T* row = weights.data() + static_cast<std::size_t>(i) * m;
    int best = 0;
    for (int z = 1; z < m; ++z)
      if (row[z] > row[best]) best = z;
    int second = best == 0 ? 1 : 0;
    for (int z = 0; z < m; ++z)
      if (z != best && row[z] > row[second]) second = z;
    pos[static_cast<std::size_t>(i)] = best;
    neg[static_cast<std::size_t>(i)] = second;
  }
  return {std::move(pos), std::move(neg)};
}

template <typename T>
ReadResult memory_read(ad::Graph<T>& g, ad::Var e3, ad::Var bank) {
  const Shape& es = g.shape(e3);
  const Shape& ms = g.shape(bank);
  require(es.size() == 4 && ms.size() == 2 && es[1] == ms[1], ErrorKind::shape,
          "memory read: feature " + shape_str(es) + " does not match bank " + shape_str(ms));
  ReadResult r;
  r.features = ad::reshape(g, ad::permute(g, e3, {0, 2, 3, 1}), {es[0] * es[2] * es[3], es[1]});
  ad::Var logits = ad::matmul(g, r.features, ad::transpose(g, bank));
  r.weights = ad::softmax(g, logits, 1);
  r.recon = ad::matmul(g, r.weights, bank);
  std::tie(r.z_pos, r.z_neg) = nearest_two(g.value(r.weights));
  return r;
}

template <typename T>
ad::Var feature_map(ad::Graph<T>& g, ad::Var rows, int batch, int height, int width) {
  const int d = g.shape(rows)[1];
  return ad::permute(g, ad::reshape(g, rows, {batch, height, width, d}), {0, 3, 1, 2});
}

template <typename T>
Tensor<T> memory_update(const Tensor<T>& bank, const Tensor<T>& features, const std::vector<int>& z_pos) {
  require(bank.rank() == 2 && features.rank() == 2 && bank.dim(1) == features.dim(1), ErrorKind::shape,
          "memory update: feature/bank shape mismatch");
  require(z_pos.size() == static_cast<std::size_t>(features.dim(0)), ErrorKind::shape,
          "memory update: one assignment per position required");
  const int m = bank.dim(0), d = bank.dim(1), p = features.dim(0);
  Tensor<T> out = bank;
  for (int z = 0; z < m; ++z) {
    std::vector<int> members;
    for (int i = 0; i < p; ++i)
      if (z_pos[static_cast<std::size_t>(i)] == z) members.push_back(i);
    if (members.empty()) continue;
    const T* item = bank.data() + static_cast<std::size_t>(z) * d;
    std::vector<double> score(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
      const T* f = features.data() + static_cast<std::size_t>(members[k]) * d;
      double s = 0.0;
      for (int c = 0; c < d; ++c) s += static_cast<double>(item[c]) * f[c];
      score[k] = s;
    }
    // softmax followed by division by its max: exp(s - s_max)
    const double smax = *std::max_element(score.begin(), score.end());
    std::vector<double> acc(item, item + d);
    for (std::size_t k = 0; k < members.size(); ++k) {
      const double q = std::exp(score[k] - smax);
      const T* f = features.data() + static_cast<std::size_t>(members[k]) * d;
      for (int c = 0; c < d; ++c) acc[static_cast<std::size_t>(c)] += q * f[c];
    }
    double norm = 0.0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    require(norm > 0.0 && std::isfinite(norm), ErrorKind::numerical, "memory update produced a degenerate item");
    T* dst = out.data() + static_cast<std::size_t>(z) * d;
    for (int c = 0; c < d; ++c) dst[c] = static_cast<T>(acc[static_cast<std::size_t>(c)] / norm);
  }
  return out;
}

template <typename T>
MemoryLosses memory_regularizers(ad::Graph<T>& g, const ReadResult& read, ad::Var bank, double alpha) {
  require(g.shape(bank)[0] >= 2, ErrorKind::usage, "separateness needs at least two memory items");
  ad::Var pos = ad::row_norms(g, ad::sub(g, read.features, ad::gather_rows(g, bank, read.z_pos)));
  ad::Var neg = ad::row_norms(g, ad::sub(g, read.features, ad::gather_rows(g, bank, read.z_neg)));
  MemoryLosses out;
  out.compactness = ad::sum(g, pos);
  out.separateness = ad::sum(g, ad::relu(g, ad::add_scalar(g, ad::sub(g, pos, neg), alpha)));
  return out;
}

#define CTSYNTH_INSTANTIATE(T)                                                                        \
  template std::pair<std::vector<int>, std::vector<int>> nearest_two(const Tensor<T>&);               \
  template ReadResult memory_read(ad::Graph<T>&, ad::Var, ad::Var);                                   \
  template ad::Var feature_map(ad::Graph<T>&, ad::Var, int, int, int);                                \
  template Tensor<T> memory_update(const Tensor<T>&, const Tensor<T>&, const std::vector<int>&);     \
  template MemoryLosses memory_regularizers(ad::Graph<T>&, const ReadResult&, ad::Var, double);

CTSYNTH_INSTANTIATE(float)
CTSYNTH_INSTANTIATE(double)

#undef CTSYNTH_INSTANTIATE

}  // namespace ctsynth
