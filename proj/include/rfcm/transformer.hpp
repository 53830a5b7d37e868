#pragma once

#include <span>
#include <vector>

#include "rfcm/attention.hpp"
#include "rfcm/params.hpp"

namespace rfcm {

struct StackConfig {
  std::size_t enc_layers = 3;  // N_e
  std::size_t dec_layers = 3;  // N_d
  std::size_t heads = 12;      // N_h
  std::size_t d_enc = 384;
  std::size_t d_dec = 384;
  std::size_t max_len = 20;    // I, including BOS and EOS
  std::size_t vocab_size = 0;  // N_v, taken from the vocabulary
  std::size_t ffn_mult = 4;

  void validate() const;
};

/// Post-LN encoder layer: LN(x + MMHA(x)), LN(· + MHA(·)), LN(· + FFN(·)).
/// Both attention sub-layers use the same future-captioning mask.
struct EncoderLayer {
  MultiHeadAttention masked_attention;
  MultiHeadAttention attention;
  FeedForward ffn;
  LayerNorm norm1;
  LayerNorm norm2;
  LayerNorm norm3;

  static EncoderLayer create(ParamStore& store, Initializer& init, const std::string& name,
                             const StackConfig& cfg);
  ad::Var operator()(const Context& ctx, ad::Var h, const AttentionMask& mask) const;
};

/// Source-target layer: every row of the encoder stream queries the event
/// memory h_rsa, then FFN; residual + LN around both.
struct DecoderLayer {
  MultiHeadAttention cross_attention;
  FeedForward ffn;
  LayerNorm norm1;
  LayerNorm norm2;

  static DecoderLayer create(ParamStore& store, Initializer& init, const std::string& name,
                             const StackConfig& cfg, std::size_t d_memory);
  ad::Var operator()(const Context& ctx, ad::Var stream, ad::Var memory) const;
};

/// f_gen: FC -> GELU -> LN -> FC over the vocabulary.
struct GenerationHead {
  Linear hidden;
  LayerNorm norm;
  Linear vocab;

  static GenerationHead create(ParamStore& store, Initializer& init, std::size_t d, std::size_t vocab_size);
  /// Logits for every row of `rows`.
  ad::Var operator()(const Context& ctx, ad::Var rows) const;
};

}  // namespace rfcm
