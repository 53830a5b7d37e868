#include "rfcm/transformer.hpp"

#include "rfcm/errors.hpp"

namespace rfcm {

void StackConfig::validate() const {
  if (heads == 0) throw ConfigError("model.heads must be >= 1");
  if (d_enc == 0 || d_enc % heads != 0) throw ConfigError("model.d_enc must be a positive multiple of model.heads");
  if (d_dec != d_enc) throw ConfigError("model.d_dec must equal model.d_enc");
  if (max_len < 2) throw ConfigError("model.max_len must be >= 2");
  if (enc_layers == 0) throw ConfigError("model.enc_layers must be >= 1");
  if (ffn_mult == 0) throw ConfigError("model.ffn_mult must be >= 1");
}

EncoderLayer EncoderLayer::create(ParamStore& store, Initializer& init, const std::string& name,
                                  const StackConfig& cfg) {
  EncoderLayer l;
  l.masked_attention = MultiHeadAttention::create(store, init, name + ".mmha", cfg.d_enc, cfg.d_enc, cfg.heads);
  l.norm1 = LayerNorm::create(store, init, name + ".ln1", cfg.d_enc);
  l.attention = MultiHeadAttention::create(store, init, name + ".mha", cfg.d_enc, cfg.d_enc, cfg.heads);
  l.norm2 = LayerNorm::create(store, init, name + ".ln2", cfg.d_enc);
  l.ffn = FeedForward::create(store, init, name + ".ffn", cfg.d_enc, cfg.ffn_mult * cfg.d_enc);
  l.norm3 = LayerNorm::create(store, init, name + ".ln3", cfg.d_enc);
  return l;
}

ad::Var EncoderLayer::operator()(const Context& ctx, ad::Var h, const AttentionMask& mask) const {
  const ad::Var a = norm1(ctx, ad::add(h, masked_attention(ctx, h, h, &mask)));
  const ad::Var b = norm2(ctx, ad::add(a, attention(ctx, a, a, &mask)));
  return norm3(ctx, ad::add(b, ffn(ctx, b)));
}

DecoderLayer DecoderLayer::create(ParamStore& store, Initializer& init, const std::string& name,
                                  const StackConfig& cfg, std::size_t d_memory) {
  DecoderLayer l;
  l.cross_attention = MultiHeadAttention::create(store, init, name + ".cross", cfg.d_dec, d_memory, cfg.heads);
  l.norm1 = LayerNorm::create(store, init, name + ".ln1", cfg.d_dec);
  l.ffn = FeedForward::create(store, init, name + ".ffn", cfg.d_dec, cfg.ffn_mult * cfg.d_dec);
  l.norm2 = LayerNorm::create(store, init, name + ".ln2", cfg.d_dec);
  return l;
}

ad::Var DecoderLayer::operator()(const Context& ctx, ad::Var stream, ad::Var memory) const {
  const ad::Var a = norm1(ctx, ad::add(stream, cross_attention(ctx, stream, memory)));
  return norm2(ctx, ad::add(a, ffn(ctx, a)));
}

GenerationHead GenerationHead::create(ParamStore& store, Initializer& init, std::size_t d, std::size_t vocab_size) {
  GenerationHead g;
  g.hidden = Linear::create(store, init, "head.fc1", d, d);
  g.norm = LayerNorm::create(store, init, "head.ln", d);
  g.vocab = Linear::create(store, init, "head.fc2", d, vocab_size);
  return g;
}

ad::Var GenerationHead::operator()(const Context& ctx, ad::Var rows) const {
  return vocab(ctx, norm(ctx, ad::gelu(hidden(ctx, rows))));
}

}  // namespace rfcm
