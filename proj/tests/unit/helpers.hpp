#pragma once

#include <vector>

#include "rfcm/dataset.hpp"
#include "rfcm/losses.hpp"
#include "rfcm/model.hpp"
#include "rfcm/rng.hpp"

namespace rfcm::test {

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal(0.0, scale);
  return t;
}

inline ModelConfig tiny_model(std::size_t vocab, Ablation ablation = Ablation::full) {
  ModelConfig mc;
  mc.rsa.k = 2;
  mc.rsa.d_in = 8;
  mc.rsa.d_rsa = 8;
  mc.rsa.layers = 1;
  mc.stack.d_enc = mc.stack.d_dec = 8;
  mc.stack.heads = 2;
  mc.stack.enc_layers = 1;
  mc.stack.dec_layers = 1;
  mc.stack.max_len = 16;
  mc.stack.vocab_size = vocab;
  mc.ablation = ablation;
  return mc;
}

inline GeneratorConfig tiny_generator(std::uint64_t seed, std::size_t n_train = 8) {
  GeneratorConfig g;
  g.seed = seed;
  g.n_train = n_train;
  g.n_val = 4;
  g.n_test = 4;
  g.k = 2;
  g.d_in = 8;
  return g;
}

inline std::vector<Sample> samples_of(const std::vector<Episode>& eps, const Vocabulary& vocab, std::size_t max_len) {
  std::vector<Sample> out;
  for (const auto& e : eps) out.push_back(make_sample(e, vocab, max_len));
  return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace rfcm::test
