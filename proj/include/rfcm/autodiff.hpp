#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Tape records every forward operation as a node holding its value and a
// closure that maps the node's output gradient onto its inputs.  Nodes are
// appended in evaluation order, so the tape is topologically sorted by
// construction and backward() is a single reverse sweep.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "rfcm/tensor.hpp"

namespace rfcm::ad {

class Tape;

/// Handle to a node on a tape.  Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the gradient of the node's output; accumulates into inputs.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  /// With record_gradients = false no backward closures are kept and
  /// bound parameters are treated as constants (inference, finite differences).
  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  /// Leaf that reads an externally owned tensor without copying it.  Binding
  /// the same tensor twice returns the same node.  The tensor must outlive
  /// the tape and stay unmodified while the tape is in use.
  Var bind(const Tensor& external);

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return value(v.id()); }
  const Tensor& value(std::size_t id) const;
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  Var var(std::size_t id) { return Var(this, id); }

  /// Mutable gradient buffer for a node, allocated as zeros on first use.
  std::span<double> grad_buffer(std::size_t id);

  /// Gradient after backward(); nullptr when nothing flowed into the node.
  const Tensor* grad(Var v) const;
  const Tensor* grad_of(const Tensor& external) const;
  /// Gradient of v, or zeros of v's shape.
  Tensor grad_or_zeros(Var v) const;

  /// Reverse sweep from a scalar loss.  A second call without
  /// reset_gradients() is a contract error.
  void backward(Var loss);
  void reset_gradients();

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
    Tensor grad;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> bound_;
  bool recording_;
  bool backward_done_ = false;
};

using Mask = std::vector<std::uint8_t>;

enum class Elementwise { add, sub, hadamard, scale };

// Linear algebra
Var matmul(Var a, Var b);
/// x·Wᵀ + bias for row-stacked x [m×n], W [out×n], bias [out].
Var linear(Var x, Var weight, Var bias);
Var linear(Var x, Var weight);

// Pointwise
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var elementwise(Elementwise op, Var a, Var b);
Var elementwise(Elementwise op, Var a, double b);
Var gelu(Var x);
Var relu(Var x);

// Reductions
Var sum(Var x);
Var mean(Var x);

// Normalization
/// axis 0 or 1 for matrices; 0 for vectors.
Var softmax(Var x, std::size_t axis);
/// Row softmax over entries where mask (row-major, same shape) is nonzero;
/// masked entries come out exactly zero.  Rows with no allowed entry are
/// rejected.
Var masked_softmax(Var x, std::shared_ptr<const Mask> mask);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Mean negative log-likelihood of targets[i] under softmax(logits row i).
Var cross_entropy(Var logits, std::span<const std::size_t> targets);

// Shape manipulation
Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);
Var flatten(Var x);
Var reshape(Var x, Shape shape);
Var transpose(Var x);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var embedding_lookup(Var table, std::span<const std::size_t> ids);

/// Negative control for gradient checking: while set, gelu's backward rule
/// drops its x·pdf(x) term.
void set_gelu_gradient_fault(bool enabled);
bool gelu_gradient_fault();

}  // namespace rfcm::ad
