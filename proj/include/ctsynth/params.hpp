#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ctsynth/graph.hpp"

namespace ctsynth {

/// Named learnable tensors in insertion order. The order is the checkpoint
/// order and the optimizer order.
template <typename T>
class ParamSet {
 public:
  void add(const std::string& name, Tensor<T> value) {
    require(!index_.contains(name), ErrorKind::usage, "duplicate parameter name '" + name + "'");
    index_.emplace(name, names_.size());
    names_.push_back(name);
    values_.push_back(std::move(value));
  }

  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), ErrorKind::usage, "unknown parameter '" + name + "'");
    return it->second;
  }

  Tensor<T>& at(const std::string& name) { return values_[index_of(name)]; }
  const Tensor<T>& at(const std::string& name) const { return values_[index_of(name)]; }
  Tensor<T>& at(std::size_t i) { return values_.at(i); }
  const Tensor<T>& at(std::size_t i) const { return values_.at(i); }

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], values_[i].template cast<U>());
    return out;
  }

  bool operator==(const ParamSet& other) const { return names_ == other.names_ && values_ == other.values_; }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// A ParamSet placed on a graph, either as trainable leaves or as constants.
template <typename T>
class BoundParams {
 public:
  BoundParams(ad::Graph<T>& g, const ParamSet<T>& params, bool trainable) : params_(&params) {
    vars_.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      vars_.push_back(trainable ? g.parameter(params.at(i)) : g.constant(params.at(i)));
  }

  /// Adopts leaves that already exist, one per parameter in order.
  BoundParams(const ParamSet<T>& params, std::vector<ad::Var> vars) : params_(&params), vars_(std::move(vars)) {
    require(vars_.size() == params.size(), ErrorKind::shape, "bound parameter count mismatch");
  }

  ad::Var operator()(const std::string& name) const { return vars_[params_->index_of(name)]; }
  ad::Var operator[](std::size_t i) const { return vars_.at(i); }
  std::size_t size() const noexcept { return vars_.size(); }

 private:
  const ParamSet<T>* params_;
  std::vector<ad::Var> vars_;
};

/// Uniform(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
template <typename T>
Tensor<T> kaiming_uniform(Shape shape, int fan_in, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace ctsynth
