#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ctsynth/tensor.hpp"

namespace ctsynth::ad {

/// Handle to a node of a Graph. Only meaningful for the graph that issued it.
struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, which is a
/// topological order, so backward is a single reverse sweep.
template <typename T>
class Graph {
 public:
  /// Receives the gradient of the node's output; accumulates into its inputs.
  using BackwardFn = std::function<void(Graph&, const Tensor<T>& grad_out)>;

  struct Options {
#ifdef NDEBUG
    bool check_finite = false;
#else
    bool check_finite = true;
#endif
  };

  Graph() = default;
  explicit Graph(Options options) : options_(options) {}

  Var constant(Tensor<T> value);
  Var parameter(Tensor<T> value);

  /// Appends an op result. requires_grad is inherited from the inputs; the
  /// backward closure (and whatever it captured) is dropped when no input
  /// needs a gradient.
  Var record(Tensor<T> value, const std::vector<Var>& inputs, BackwardFn backward, const char* op);

  const Tensor<T>& value(Var v) const { return node(v).value; }
  const Shape& shape(Var v) const { return node(v).value.shape(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Gradient after backward(); zeros when no path reached the node.
  Tensor<T> grad(Var v) const;

  /// Adds g into the gradient slot of v (no-op when v needs no gradient).
  void accumulate(Var v, const Tensor<T>& g);
  /// Gradient slot of v, zero-allocated on first use.
  Tensor<T>& grad_slot(Var v);

  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Options& options() const noexcept { return options_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
    const char* op = "";
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  void check_finite(const Tensor<T>& value, const char* op) const;

  Options options_{};
  std::vector<Node> nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace ctsynth::ad
