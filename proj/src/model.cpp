#include "rfcm/model.hpp"

#include "rfcm/errors.hpp"

namespace rfcm {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_rsa: return "no_rsa";
    case Ablation::no_decoder: return "no_decoder";
  }
  return "full";
}

Ablation parse_ablation(std::string_view name) {
  if (name == "full") return Ablation::full;
  if (name == "no_rsa") return Ablation::no_rsa;
  if (name == "no_decoder") return Ablation::no_decoder;
  throw ConfigError("ablation must be one of full, no_rsa, no_decoder; got '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  rsa.validate();
  stack.validate();
  if (stack.vocab_size < 5) throw ConfigError("model.vocab_size must cover the 4 special tokens plus words");
  if (ablation == Ablation::no_rsa && rsa.d_rsa % stack.heads != 0) {
    throw ConfigError("model.d_rsa must be a multiple of model.heads for the no_rsa ablation");
  }
  if (ablation != Ablation::no_decoder && stack.dec_layers == 0) {
    throw ConfigError("model.dec_layers must be >= 1 unless the decoder is ablated");
  }
}

RfcmModel::RfcmModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Initializer init(seed);
  const auto& r = cfg_.rsa;
  const auto& s = cfg_.stack;
  const std::size_t ffn_rsa = s.ffn_mult * r.d_rsa;

  projection_ = ClipProjection::create(params_, init, r);
  future_readout_ = Linear::create(params_, init, "mse.readout", r.d_rsa, r.d_in);
  if (cfg_.ablation != Ablation::no_decoder) {
    std::optional<std::size_t> mha_heads;
    if (cfg_.ablation == Ablation::no_rsa) mha_heads = s.heads;
    rsa_ = RsaEncoder::create(params_, init, r, ffn_rsa, mha_heads);
  }
  video_in_ = Linear::create(params_, init, "enc.video_in", r.d_rsa, s.d_enc);
  token_table_ = params_.add("embed.tokens", init.embedding(s.vocab_size, s.d_enc));
  segment_table_ = params_.add("embed.segment", init.embedding(2, s.d_enc));
  for (std::size_t i = 0; i < s.enc_layers; ++i) {
    encoder_.push_back(EncoderLayer::create(params_, init, "enc.layer" + std::to_string(i), s));
  }
  if (cfg_.ablation != Ablation::no_decoder) {
    for (std::size_t i = 0; i < s.dec_layers; ++i) {
      decoder_.push_back(DecoderLayer::create(params_, init, "dec.layer" + std::to_string(i), s, r.d_rsa));
    }
  }
  head_ = GenerationHead::create(params_, init, s.d_dec, s.vocab_size);
}

VideoEncoding RfcmModel::encode_video(const Context& ctx, const Tensor& clips) const {
  const auto& r = cfg_.rsa;
  if (clips.rank() != 2 || clips.shape()[0] != r.k + 1 || clips.shape()[1] != r.d_in) {
    throw ContractError("expected " + std::to_string(r.k + 1) + " clips of width " + std::to_string(r.d_in) +
                        ", got " + shape_string(clips.shape()));
  }
  VideoEncoding v;
  const auto projected = projection_(ctx, ctx.tape().constant(clips), r);
  v.slots = projected.slots;
  v.future_slot = projected.future_slot;
  v.future_clip = future_readout_(ctx, projected.future_slot);
  if (rsa_) v.memory = (*rsa_)(ctx, v.slots);

  const std::size_t slots = r.slots();
  const std::vector<std::size_t> segment(slots, 0);
  v.video_rows = ad::add(ad::add(video_in_(ctx, v.slots),
                                 ctx.tape().constant(positional_encoding(slots, cfg_.stack.d_enc))),
                         ad::embedding_lookup(ctx(segment_table_), segment));
  return v;
}

ad::Var RfcmModel::embed_text(const Context& ctx, std::span<const std::size_t> ids) const {
  const std::size_t len = ids.size();
  if (len == 0 || len > cfg_.stack.max_len) {
    throw ContractError("text length " + std::to_string(len) + " outside [1, " +
                        std::to_string(cfg_.stack.max_len) + "]");
  }
  const ad::Var tokens = ad::embedding_lookup(ctx(token_table_), ids);
  return ad::add(tokens, ctx.tape().constant(positional_encoding(len, cfg_.stack.d_enc)));
}

ad::Var RfcmModel::encode(const Context& ctx, const VideoEncoding& video, ad::Var text,
                          std::size_t valid_text) const {
  const std::size_t slots = cfg_.rsa.slots();
  const std::size_t len = text.value().rows();
  if (text.value().cols() != cfg_.stack.d_enc) {
    throw DimensionError("text features " + shape_string(text.value().shape()) + " vs encoder width " +
                         std::to_string(cfg_.stack.d_enc));
  }
  const std::vector<std::size_t> segment(len, 1);
  const ad::Var text_rows = ad::add(text, ad::embedding_lookup(ctx(segment_table_), segment));
  ad::Var h = ad::concat({video.video_rows, text_rows}, 0);
  const AttentionMask mask = AttentionMask::future_captioning(slots, len, valid_text);
  for (const auto& layer : encoder_) h = layer(ctx, h, mask);
  return h;
}

ad::Var RfcmModel::decode(const Context& ctx, const VideoEncoding& video, ad::Var encoded) const {
  if (decoder_.empty()) return encoded;
  if (!video.memory.valid()) throw ContractError("decoder requires the event memory h_rsa");
  ad::Var h = encoded;
  for (const auto& layer : decoder_) h = layer(ctx, h, video.memory);
  return h;
}

ad::Var RfcmModel::text_logits(const Context& ctx, const VideoEncoding& video, ad::Var text,
                               std::size_t valid_text) const {
  const std::size_t slots = cfg_.rsa.slots();
  const std::size_t len = text.value().rows();
  const ad::Var decoded = decode(ctx, video, encode(ctx, video, text, valid_text));
  return head_(ctx, ad::slice_rows(decoded, slots, len));
}

ad::Var RfcmModel::text_logits(const Context& ctx, const VideoEncoding& video, std::span<const std::size_t> ids,
                               std::size_t valid_text) const {
  return text_logits(ctx, video, embed_text(ctx, ids), valid_text);
}

}  // namespace rfcm
