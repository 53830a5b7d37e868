#include "rfcm/params.hpp"

#include <cmath>

#include "rfcm/errors.hpp"

namespace rfcm {

ParamId ParamStore::add(std::string name, Tensor value) {
  if (by_name_.contains(name)) throw ContractError("duplicate parameter name: " + name);
  by_name_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), std::move(value)});
  return ParamId{params_.size() - 1};
}

Parameter* ParamStore::find(std::string_view name) {
  const auto it = by_name_.find(std::string(name));
  return it == by_name_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParamStore::find(std::string_view name) const {
  const auto it = by_name_.find(std::string(name));
  return it == by_name_.end() ? nullptr : &params_[it->second];
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

Tensor Initializer::xavier(std::size_t rows, std::size_t cols) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = rng_.uniform(-limit, limit);
  return t;
}

Tensor Initializer::embedding(std::size_t rows, std::size_t cols, double stddev) {
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = rng_.normal(0.0, stddev);
  return t;
}

Linear Linear::create(ParamStore& store, Initializer& init, const std::string& name, std::size_t in,
                      std::size_t out, bool with_bias) {
  Linear l;
  l.weight = store.add(name + ".weight", init.xavier(out, in));
  if (with_bias) l.bias = store.add(name + ".bias", init.zeros(out));
  return l;
}

ad::Var Linear::operator()(const Context& ctx, ad::Var x) const {
  return bias ? ad::linear(x, ctx(weight), ctx(*bias)) : ad::linear(x, ctx(weight));
}

LayerNorm LayerNorm::create(ParamStore& store, Initializer& init, const std::string& name, std::size_t d) {
  LayerNorm ln;
  ln.gain = store.add(name + ".gain", init.ones(d));
  ln.bias = store.add(name + ".bias", init.zeros(d));
  return ln;
}

ad::Var LayerNorm::operator()(const Context& ctx, ad::Var x) const {
  return ad::layer_norm(x, ctx(gain), ctx(bias));
}

FeedForward FeedForward::create(ParamStore& store, Initializer& init, const std::string& name, std::size_t d,
                                std::size_t hidden) {
  FeedForward f;
  f.expand = Linear::create(store, init, name + ".fc1", d, hidden);
  f.project = Linear::create(store, init, name + ".fc2", hidden, d);
  return f;
}

ad::Var FeedForward::operator()(const Context& ctx, ad::Var x) const {
  return project(ctx, ad::gelu(expand(ctx, x)));
}

Tensor positional_encoding(std::size_t rows, std::size_t d, std::size_t first_position) {
  Tensor pe({rows, d});
  for (std::size_t r = 0; r < rows; ++r) {
    const double pos = static_cast<double>(first_position + r);
    for (std::size_t c = 0; c < d; ++c) {
      const double pair = static_cast<double>(c - c % 2);
      const double angle = pos / std::pow(10000.0, pair / static_cast<double>(d));
      pe.at(r, c) = c % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

}  // namespace rfcm
