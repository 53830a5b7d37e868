#include "rfcm/autodiff.hpp"

#include <algorithm>

#include "rfcm/errors.hpp"

namespace rfcm::ad {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::push(Node node) {
#ifndef NDEBUG
  const Tensor& v = node.external ? *node.external : node.owned;
  if (!v.all_finite()) {
    throw NumericalError("non-finite value produced at tape node " + std::to_string(nodes_.size()));
  }
#endif
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = recording_;
  return push(std::move(n));
}

Var Tape::bind(const Tensor& external) {
  if (const auto it = bound_.find(&external); it != bound_.end()) return Var(this, it->second);
  Node n;
  n.external = &external;
  n.requires_grad = recording_;
  Var v = push(std::move(n));
  bound_.emplace(&external, v.id());
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node n;
  n.owned = std::move(value);
  if (recording_) {
    for (const Var in : inputs) {
      if (nodes_[in.id()].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  return push(std::move(n));
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

std::span<double> Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(value(id).shape());
  return n.grad.values();
}

const Tensor* Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.grad.empty() ? nullptr : &n.grad;
}

const Tensor* Tape::grad_of(const Tensor& external) const {
  const auto it = bound_.find(&external);
  if (it == bound_.end()) return nullptr;
  const Node& n = nodes_[it->second];
  return n.grad.empty() ? nullptr : &n.grad;
}

Tensor Tape::grad_or_zeros(Var v) const {
  if (const Tensor* g = grad(v)) return *g;
  return Tensor(value(v).shape());
}

void Tape::backward(Var loss) {
  if (backward_done_) throw ContractError("backward() called twice without reset_gradients()");
  if (value(loss).size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        shape_string(value(loss).shape()));
  }
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
}

void Tape::reset_gradients() {
  for (auto& n : nodes_) n.grad = Tensor();
  backward_done_ = false;
}

}  // namespace rfcm::ad
