#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rfcm/autodiff.hpp"
#include "rfcm/rng.hpp"
#include "rfcm/tensor.hpp"

namespace rfcm {

struct Parameter {
  std::string name;  // dotted path, e.g. "rsa.layer0.W_p"
  Tensor tensor;
};

struct ParamId {
  std::size_t index = 0;
};

/// Named learnable tensors of one model, in creation order.
class ParamStore {
 public:
  ParamId add(std::string name, Tensor value);

  Parameter& operator[](ParamId id) { return params_[id.index]; }
  const Parameter& operator[](ParamId id) const { return params_[id.index]; }

  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;

  std::vector<Parameter>& all() noexcept { return params_; }
  const std::vector<Parameter>& all() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t element_count() const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

/// Xavier-uniform weights, zero biases, unit layer-norm gains and N(0, 0.02²)
/// embeddings, all drawn from one seeded stream in creation order.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor xavier(std::size_t rows, std::size_t cols);
  Tensor zeros(std::size_t n) { return Tensor({n}); }
  Tensor ones(std::size_t n) { return Tensor::filled({n}, 1.0); }
  Tensor embedding(std::size_t rows, std::size_t cols, double stddev = 0.02);

 private:
  Rng rng_;
};

/// Binds a store's parameters onto one tape for a forward pass.
class Context {
 public:
  Context(ad::Tape& tape, const ParamStore& store) : tape_(tape), store_(store) {}

  ad::Var operator()(ParamId id) const { return tape_.bind(store_[id].tensor); }
  ad::Tape& tape() const { return tape_; }
  const ParamStore& store() const { return store_; }

 private:
  ad::Tape& tape_;
  const ParamStore& store_;
};

struct Linear {
  ParamId weight;                // [out × in]
  std::optional<ParamId> bias;   // [out]

  static Linear create(ParamStore& store, Initializer& init, const std::string& name, std::size_t in,
                       std::size_t out, bool with_bias = true);
  ad::Var operator()(const Context& ctx, ad::Var x) const;
};

struct LayerNorm {
  ParamId gain;
  ParamId bias;

  static LayerNorm create(ParamStore& store, Initializer& init, const std::string& name, std::size_t d);
  ad::Var operator()(const Context& ctx, ad::Var x) const;
};

/// Two linear maps with GELU between them.
struct FeedForward {
  Linear expand;
  Linear project;

  static FeedForward create(ParamStore& store, Initializer& init, const std::string& name, std::size_t d,
                            std::size_t hidden);
  ad::Var operator()(const Context& ctx, ad::Var x) const;
};

/// Sinusoidal encoding: sin(pos / 10000^(2i/d)) on even columns, cos on odd.
Tensor positional_encoding(std::size_t rows, std::size_t d, std::size_t first_position = 0);

}  // namespace rfcm
