#include "ctsynth/graph.hpp"

#include <cmath>

namespace ctsynth::ad {

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  check_finite(value, "constant");
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Graph<T>::parameter(Tensor<T> value) {
  check_finite(value, "parameter");
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.op = "parameter";
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Graph<T>::record(Tensor<T> value, const std::vector<Var>& inputs, BackwardFn backward, const char* op) {
  check_finite(value, op);
  Node n;
  n.value = std::move(value);
  n.op = op;
  for (Var in : inputs) n.requires_grad = n.requires_grad || (in.valid() && node(in).requires_grad);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Tensor<T> Graph<T>::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
Tensor<T>& Graph<T>::grad_slot(Var v) {
  Node& n = node(v);
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
void Graph<T>::accumulate(Var v, const Tensor<T>& g) {
  if (!v.valid() || !node(v).requires_grad) return;
  Tensor<T>& slot = grad_slot(v);
  require(slot.size() == g.size(), ErrorKind::shape,
          std::string("gradient shape mismatch at op ") + node(v).op + ": " + shape_str(slot.shape()) + " vs " +
              shape_str(g.shape()));
  T* dst = slot.data();
  const T* src = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

template <typename T>
void Graph<T>::backward(Var loss) {
  Node& root = node(loss);
  require(root.value.size() == 1, ErrorKind::shape,
          "backward requires a scalar loss, got shape " + shape_str(root.value.shape()));
  if (!root.requires_grad) return;
  grad_slot(loss)[0] = T(1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    // The closure may append to nodes_' grad slots but never to nodes_ itself,
    // so the reference stays valid.
    n.backward(*this, n.grad);
  }
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  require(v.valid() && static_cast<std::size_t>(v.id) < nodes_.size(), ErrorKind::shape, "invalid graph variable");
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
typename Graph<T>::Node& Graph<T>::node(Var v) {
  require(v.valid() && static_cast<std::size_t>(v.id) < nodes_.size(), ErrorKind::shape, "invalid graph variable");
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
void Graph<T>::check_finite(const Tensor<T>& value, const char* op) const {
  if (!options_.check_finite) return;
  for (T x : value.values())
    if (!std::isfinite(x)) fail(ErrorKind::numerical, std::string("non-finite value produced by op ") + op);
}

template class Graph<float>;
template class Graph<double>;

}  // namespace ctsynth::ad
