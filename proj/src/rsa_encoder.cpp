#include "rfcm/rsa_encoder.hpp"

#include "rfcm/errors.hpp"

namespace rfcm {

void RsaConfig::validate() const {
  if (d_in == 0) throw ConfigError("model.d_in must be >= 1");
  if (d_rsa == 0) throw ConfigError("model.d_rsa must be >= 1");
  if (layers == 0) throw ConfigError("model.rsa_layers must be >= 1");
}

namespace rsa {

Kernels kernels(ad::Var query, ad::Var keys, ad::Var w_p, ad::Var w_h) {
  const Tensor& kv = keys.value();
  if (kv.rank() != 2) throw DimensionError("rsa kernels: keys must be a matrix, got " + shape_string(kv.shape()));
  const std::size_t slots = kv.shape()[0];
  const std::size_t d = kv.shape()[1];
  if (query.value().size() != d) {
    throw DimensionError("rsa kernels: query " + shape_string(query.value().shape()) + " vs keys " +
                         shape_string(kv.shape()));
  }
  if (w_p.value().shape() != Shape{slots, d}) {
    throw DimensionError("rsa kernels: W_p must be " + shape_string({slots, d}) + ", got " +
                         shape_string(w_p.value().shape()));
  }
  if (w_h.value().shape() != Shape{slots, slots * d}) {
    throw DimensionError("rsa kernels: W_h must be " + shape_string({slots, slots * d}) + ", got " +
                         shape_string(w_h.value().shape()));
  }
  const ad::Var q_col = ad::reshape(query, {d, 1});
  const ad::Var basic = ad::reshape(ad::matmul(w_p, q_col), {slots});

  const ad::Var q_row = ad::reshape(query, {1, d});
  std::vector<ad::Var> stacked(slots, q_row);
  const ad::Var q_stack = slots == 1 ? q_row : ad::concat(stacked, 0);
  const ad::Var interactions = ad::reshape(ad::hadamard(q_stack, keys), {slots * d, 1});
  const ad::Var relational = ad::reshape(ad::matmul(w_h, interactions), {slots});
  return {basic, relational};
}

ad::Var relational_context(ad::Var values, ad::Var w_g) {
  const Tensor& vv = values.value();
  if (vv.rank() != 2 || w_g.value().shape() != vv.shape()) {
    throw DimensionError("relational context: W_g " + shape_string(w_g.value().shape()) + " vs values " +
                         shape_string(vv.shape()));
  }
  const ad::Var gram = ad::matmul(ad::transpose(values), values);
  return ad::add(values, ad::matmul(w_g, gram));
}

ad::Var attend(ad::Var basic, ad::Var relational, ad::Var context) {
  const std::size_t slots = context.value().rows();
  const std::size_t d = context.value().cols();
  if (basic.value().size() != slots || relational.value().size() != slots) {
    throw DimensionError("rsa attend: kernels of length " + std::to_string(basic.value().size()) + "/" +
                         std::to_string(relational.value().size()) + " for " + std::to_string(slots) +
                         " slots");
  }
  const ad::Var weights = ad::reshape(ad::add(basic, relational), {1, slots});
  return ad::reshape(ad::matmul(weights, context), {d});
}

}  // namespace rsa

ClipProjection ClipProjection::create(ParamStore& store, Initializer& init, const RsaConfig& cfg) {
  ClipProjection p;
  p.past = Linear::create(store, init, "rsa.f_z.past", 2 * cfg.d_in, cfg.d_rsa);
  p.future = Linear::create(store, init, "rsa.f_z.future", cfg.d_in, cfg.d_rsa);
  return p;
}

ClipProjection::Output ClipProjection::operator()(const Context& ctx, ad::Var clips, const RsaConfig& cfg) const {
  const Tensor& cv = clips.value();
  if (cv.rank() != 2 || cv.shape()[0] != cfg.k + 1 || cv.shape()[1] != cfg.d_in) {
    throw ContractError("expected " + std::to_string(cfg.k + 1) + " clips of width " + std::to_string(cfg.d_in) +
                        ", got " + shape_string(cv.shape()));
  }
  const ad::Var latest = ad::slice_rows(clips, cfg.k, 1);
  std::vector<ad::Var> repeated(cfg.k + 1, latest);
  const ad::Var latest_rows = cfg.k == 0 ? latest : ad::concat(repeated, 0);
  const ad::Var pairs = ad::concat({clips, latest_rows}, 1);
  const ad::Var observed = past(ctx, pairs);
  const ad::Var future_slot = future(ctx, latest);
  return {ad::concat({observed, future_slot}, 0), future_slot};
}

RsaLayer RsaLayer::create(ParamStore& store, Initializer& init, const std::string& name, const RsaConfig& cfg,
                          std::size_t ffn_hidden) {
  const std::size_t slots = cfg.slots();
  RsaLayer l;
  l.w_p = store.add(name + ".W_p", init.xavier(slots, cfg.d_rsa));
  l.w_h = store.add(name + ".W_h", init.xavier(slots, slots * cfg.d_rsa));
  l.w_g = store.add(name + ".W_g", init.xavier(slots, cfg.d_rsa));
  l.ffn = FeedForward::create(store, init, name + ".ffn", cfg.d_rsa, ffn_hidden);
  l.norm = LayerNorm::create(store, init, name + ".ln", cfg.d_rsa);
  return l;
}

ad::Var RsaLayer::operator()(const Context& ctx, ad::Var h, std::size_t k) const {
  const std::size_t slots = h.value().rows();
  const std::size_t d = h.value().cols();
  if (k + 2 != slots) throw DimensionError("rsa layer: k=" + std::to_string(k) + " vs " + shape_string(h.shape()));
  const ad::Var query = ad::reshape(ad::slice_rows(h, k, 1), {d});
  const auto [basic, relational] = rsa::kernels(query, h, ctx(w_p), ctx(w_h));
  const ad::Var context = rsa::relational_context(h, ctx(w_g));
  const ad::Var phi = ad::reshape(rsa::attend(basic, relational, context), {1, d});
  std::vector<ad::Var> rows;
  if (k > 0) rows.push_back(ad::slice_rows(h, 0, k));
  rows.push_back(phi);
  rows.push_back(ad::slice_rows(h, k + 1, 1));
  const ad::Var replaced = ad::concat(rows, 0);
  return norm(ctx, ffn(ctx, replaced));
}

SelfAttentionLayer SelfAttentionLayer::create(ParamStore& store, Initializer& init, const std::string& name,
                                              std::size_t d, std::size_t heads, std::size_t ffn_hidden) {
  SelfAttentionLayer l;
  l.attention = MultiHeadAttention::create(store, init, name + ".mha", d, d, heads);
  l.ffn = FeedForward::create(store, init, name + ".ffn", d, ffn_hidden);
  l.norm = LayerNorm::create(store, init, name + ".ln", d);
  return l;
}

ad::Var SelfAttentionLayer::operator()(const Context& ctx, ad::Var h) const {
  return norm(ctx, ffn(ctx, attention(ctx, h, h)));
}

RsaEncoder RsaEncoder::create(ParamStore& store, Initializer& init, const RsaConfig& cfg, std::size_t ffn_hidden,
                              std::optional<std::size_t> mha_heads) {
  cfg.validate();
  RsaEncoder e;
  e.cfg_ = cfg;
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    const std::string name = "rsa.layer" + std::to_string(i);
    if (mha_heads) {
      e.layers_.emplace_back(SelfAttentionLayer::create(store, init, name, cfg.d_rsa, *mha_heads, ffn_hidden));
    } else {
      e.layers_.emplace_back(RsaLayer::create(store, init, name, cfg, ffn_hidden));
    }
  }
  e.final_ffn_ = FeedForward::create(store, init, "rsa.out.ffn", cfg.d_rsa, ffn_hidden);
  e.final_norm_ = LayerNorm::create(store, init, "rsa.out.ln", cfg.d_rsa);
  return e;
}

ad::Var RsaEncoder::operator()(const Context& ctx, ad::Var slots) const {
  const std::size_t rows = slots.value().rows();
  ad::Var h = ad::add(slots, ctx.tape().constant(positional_encoding(rows, cfg_.d_rsa)));
  for (const auto& layer : layers_) {
    h = std::visit(
        [&](const auto& l) {
          if constexpr (std::is_same_v<std::decay_t<decltype(l)>, RsaLayer>) {
            return l(ctx, h, cfg_.k);
          } else {
            return l(ctx, h);
          }
        },
        layer);
  }
  return final_norm_(ctx, final_ffn_(ctx, h));
}

}  // namespace rfcm
