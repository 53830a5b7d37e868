#include "rfcm/grad_suites.hpp"

#include <cmath>
#include <memory>

#include "json.hpp"
#include "rfcm/attention.hpp"
#include "rfcm/dataset.hpp"
#include "rfcm/errors.hpp"
#include "rfcm/losses.hpp"
#include "rfcm/rng.hpp"
#include "rfcm/rsa_encoder.hpp"

namespace rfcm {

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal(0.0, scale);
  return t;
}

/// Entries bounded away from zero, for relu.
Tensor offset_tensor(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) {
    const double u = rng.uniform(0.1, 1.5);
    v = rng.bernoulli(0.5) ? u : -u;
  }
  return t;
}

class Suite {
 public:
  Suite(std::uint64_t seed, const GradCheckOptions& options) : rng_(seed), options_(options) {}

  /// Registers inputs, then checks sum(op(inputs) ⊙ R) for a random R.
  template <typename Op>
  void check(const std::string& name, std::vector<Tensor> inputs, Op op) {
    auto owned = std::make_shared<std::vector<Tensor>>(std::move(inputs));
    std::shared_ptr<Tensor> contraction;
    auto f = [&, owned](ad::Tape& tape) {
      std::vector<ad::Var> vars;
      for (const auto& t : *owned) vars.push_back(tape.bind(t));
      const ad::Var out = op(tape, vars);
      if (!contraction) contraction = std::make_shared<Tensor>(random_tensor(rng_, out.value().shape()));
      return ad::sum(ad::hadamard(out, tape.bind(*contraction)));
    };
    std::vector<GradTarget> targets;
    for (std::size_t i = 0; i < owned->size(); ++i) targets.push_back({name + ".in" + std::to_string(i), &(*owned)[i]});
    results_.push_back({name, grad_check(f, targets, options_)});
  }

  /// As check(), but the op also reads the parameters of store, which are
  /// perturbed in place.
  template <typename Op>
  void check_module(const std::string& name, std::shared_ptr<ParamStore> store, std::vector<Tensor> inputs, Op op) {
    auto owned = std::make_shared<std::vector<Tensor>>(std::move(inputs));
    std::shared_ptr<Tensor> contraction;
    auto f = [&, owned, store](ad::Tape& tape) {
      std::vector<ad::Var> vars;
      for (const auto& t : *owned) vars.push_back(tape.bind(t));
      const ad::Var out = op(Context(tape, *store), vars);
      if (!contraction) contraction = std::make_shared<Tensor>(random_tensor(rng_, out.value().shape()));
      return ad::sum(ad::hadamard(out, tape.bind(*contraction)));
    };
    std::vector<GradTarget> targets;
    for (std::size_t i = 0; i < owned->size(); ++i) targets.push_back({name + ".in" + std::to_string(i), &(*owned)[i]});
    for (auto& p : store->all()) targets.push_back({name + "." + p.name, &p.tensor});
    results_.push_back({name, grad_check(f, targets, options_)});
  }

  Rng& rng() { return rng_; }
  std::vector<GradSuiteResult> take() { return std::move(results_); }

 private:
  Rng rng_;
  GradCheckOptions options_;
  std::vector<GradSuiteResult> results_;
};

}  // namespace

std::vector<GradSuiteResult> run_ops_gradcheck(std::uint64_t seed, const GradCheckOptions& options) {
  Suite s(seed, options);
  Rng& r = s.rng();
  using V = std::vector<ad::Var>;

  s.check("matmul", {random_tensor(r, {3, 4}), random_tensor(r, {4, 2})},
          [](ad::Tape&, const V& v) { return ad::matmul(v[0], v[1]); });
  s.check("linear", {random_tensor(r, {3, 4}), random_tensor(r, {5, 4}), random_tensor(r, {5})},
          [](ad::Tape&, const V& v) { return ad::linear(v[0], v[1], v[2]); });
  s.check("linear_no_bias", {random_tensor(r, {2, 3}), random_tensor(r, {4, 3})},
          [](ad::Tape&, const V& v) { return ad::linear(v[0], v[1]); });
  s.check("add", {random_tensor(r, {2, 3}), random_tensor(r, {2, 3})},
          [](ad::Tape&, const V& v) { return ad::add(v[0], v[1]); });
  s.check("sub", {random_tensor(r, {2, 3}), random_tensor(r, {2, 3})},
          [](ad::Tape&, const V& v) { return ad::sub(v[0], v[1]); });
  s.check("hadamard", {random_tensor(r, {3, 3}), random_tensor(r, {3, 3})},
          [](ad::Tape&, const V& v) { return ad::hadamard(v[0], v[1]); });
  s.check("scale", {random_tensor(r, {4})}, [](ad::Tape&, const V& v) { return ad::scale(v[0], -1.7); });
  s.check("add_scalar", {random_tensor(r, {4})}, [](ad::Tape&, const V& v) { return ad::add_scalar(v[0], 0.3); });
  s.check("gelu", {random_tensor(r, {3, 4}, 2.0)}, [](ad::Tape&, const V& v) { return ad::gelu(v[0]); });
  s.check("relu", {offset_tensor(r, {3, 4})}, [](ad::Tape&, const V& v) { return ad::relu(v[0]); });
  s.check("sum", {random_tensor(r, {2, 5})}, [](ad::Tape&, const V& v) { return ad::sum(v[0]); });
  s.check("mean", {random_tensor(r, {2, 5})}, [](ad::Tape&, const V& v) { return ad::mean(v[0]); });
  s.check("softmax_vector", {random_tensor(r, {4})}, [](ad::Tape&, const V& v) { return ad::softmax(v[0], 0); });
  s.check("softmax_rows", {random_tensor(r, {3, 4})}, [](ad::Tape&, const V& v) { return ad::softmax(v[0], 1); });
  s.check("softmax_cols", {random_tensor(r, {3, 4})}, [](ad::Tape&, const V& v) { return ad::softmax(v[0], 0); });
  {
    auto mask = std::make_shared<const ad::Mask>(ad::Mask{1, 0, 1, 1, 1, 1, 0, 0, 0, 1, 1, 0});
    s.check("masked_softmax", {random_tensor(r, {3, 4})},
            [mask](ad::Tape&, const V& v) { return ad::masked_softmax(v[0], mask); });
  }
  s.check("layer_norm", {random_tensor(r, {3, 5}), random_tensor(r, {5}), random_tensor(r, {5})},
          [](ad::Tape&, const V& v) { return ad::layer_norm(v[0], v[1], v[2]); });
  {
    const std::vector<std::size_t> targets = {2, 0, 4};
    s.check("cross_entropy", {random_tensor(r, {3, 5})},
            [targets](ad::Tape&, const V& v) { return ad::cross_entropy(v[0], targets); });
  }
  s.check("concat_rows", {random_tensor(r, {2, 3}), random_tensor(r, {1, 3})},
          [](ad::Tape&, const V& v) { return ad::concat({v[0], v[1]}, 0); });
  s.check("concat_cols", {random_tensor(r, {2, 3}), random_tensor(r, {2, 2})},
          [](ad::Tape&, const V& v) { return ad::concat({v[0], v[1]}, 1); });
  s.check("concat_vectors", {random_tensor(r, {3}), random_tensor(r, {2})},
          [](ad::Tape&, const V& v) { return ad::concat({v[0], v[1]}, 0); });
  s.check("flatten", {random_tensor(r, {2, 3})}, [](ad::Tape&, const V& v) { return ad::flatten(v[0]); });
  s.check("reshape", {random_tensor(r, {2, 3})}, [](ad::Tape&, const V& v) { return ad::reshape(v[0], {3, 2}); });
  s.check("transpose", {random_tensor(r, {2, 3})}, [](ad::Tape&, const V& v) { return ad::transpose(v[0]); });
  s.check("slice_rows", {random_tensor(r, {4, 3})}, [](ad::Tape&, const V& v) { return ad::slice_rows(v[0], 1, 2); });
  s.check("slice_cols", {random_tensor(r, {3, 4})}, [](ad::Tape&, const V& v) { return ad::slice_cols(v[0], 1, 2); });
  {
    const std::vector<std::size_t> ids = {3, 0, 3, 1};
    s.check("embedding_lookup", {random_tensor(r, {5, 3})},
            [ids](ad::Tape&, const V& v) { return ad::embedding_lookup(v[0], ids); });
  }
  s.check("composite_ln_gelu_matmul", {random_tensor(r, {3, 4}), random_tensor(r, {4, 5}), random_tensor(r, {5}),
                                       random_tensor(r, {5})},
          [](ad::Tape&, const V& v) { return ad::layer_norm(ad::gelu(ad::matmul(v[0], v[1])), v[2], v[3]); });
  {
    const std::size_t slots = 4, d = 3;
    s.check("rsa_attend",
            {random_tensor(r, {slots, d}), random_tensor(r, {slots, d}), random_tensor(r, {slots, slots * d}),
             random_tensor(r, {slots, d}), random_tensor(r, {slots, d})},
            [](ad::Tape&, const V& v) {
              const ad::Var q = ad::slice_rows(v[0], 2, 1);
              const auto kern = rsa::kernels(q, v[0], v[1], v[2]);
              return rsa::attend(kern.basic, kern.relational, rsa::relational_context(v[3], v[4]));
            });
  }
  {
    auto store = std::make_shared<ParamStore>();
    Initializer init(seed ^ 0x9e37ULL);
    const MultiHeadAttention mha = MultiHeadAttention::create(*store, init, "mha", 4, 4, 2);
    const AttentionMask mask = AttentionMask::future_captioning(1, 2, 2);
    s.check_module("multi_head_attention", store, {random_tensor(r, {3, 4})},
                   [mha, mask](const Context& ctx, const V& v) { return mha(ctx, v[0], v[0], &mask); });
  }
  return s.take();
}

ModelConfig gradcheck_model_config() {
  ModelConfig mc;
  mc.rsa.k = 2;
  mc.rsa.d_in = 16;
  mc.rsa.d_rsa = 16;
  mc.rsa.layers = 1;
  mc.stack.enc_layers = 1;
  mc.stack.dec_layers = 1;
  mc.stack.heads = 2;
  mc.stack.d_enc = 16;
  mc.stack.d_dec = 16;
  mc.stack.max_len = 8;
  mc.stack.vocab_size = 30;
  return mc;
}

GradCheckOptions model_gradcheck_options() {
  GradCheckOptions o;
  o.step = 3e-4;
  o.order = 4;
  return o;
}

GradCheckReport run_model_gradcheck(std::uint64_t seed, const GradCheckOptions& options) {
  const ModelConfig mc = gradcheck_model_config();
  GeneratorConfig g;
  g.seed = seed;
  g.n_train = 2;
  g.n_val = 1;
  g.n_test = 1;
  g.k = mc.rsa.k;
  g.d_in = mc.rsa.d_in;
  const std::vector<Episode> episodes = {generate_episode(g, "train", 0), generate_episode(g, "train", 1)};
  Vocabulary vocab = Vocabulary::build(episodes);
  if (vocab.size() > mc.stack.vocab_size) {
    // Words beyond N_v ids tokenize to UNK.
    nlohmann::json j = nlohmann::json::parse(vocab.to_json());
    j["tokens"].erase(j["tokens"].begin() + static_cast<std::ptrdiff_t>(mc.stack.vocab_size), j["tokens"].end());
    j["freq"].erase(j["freq"].begin() + static_cast<std::ptrdiff_t>(mc.stack.vocab_size), j["freq"].end());
    vocab = Vocabulary::from_json(j.dump());
  }
  RfcmModel model(mc, seed);
  const std::vector<Sample> samples = {make_sample(episodes[0], vocab, mc.stack.max_len),
                                       make_sample(episodes[1], vocab, mc.stack.max_len)};
  const std::vector<const Sample*> batch = {&samples[0], &samples[1]};
  LossWeights w;
  // Every first word is "the", far more frequent than n_th in a real
  // training split but not in two episodes.
  w.n_th = 0;
  std::vector<GradTarget> targets;
  for (auto& p : model.params().all()) targets.push_back({p.name, &p.tensor});
  return grad_check(
      [&](ad::Tape& tape) {
        const Context ctx(tape, model.params());
        return batch_loss(model, ctx, batch, w).total;
      },
      targets, options);
}

}  // namespace rfcm
