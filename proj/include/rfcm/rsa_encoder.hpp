#pragma once

// Clip projection and the relational self-attention (RSA) event encoder.
//
// Slot layout of every (k+2)-row event matrix: rows 0..k are the observed
// clips t-k..t, row k+1 is the predicted future slot t+1.  Row k holds the
// time-t feature and is the query row of every RSA layer.

#include <variant>
#include <vector>

#include "rfcm/attention.hpp"
#include "rfcm/autodiff.hpp"
#include "rfcm/params.hpp"

namespace rfcm {

struct RsaConfig {
  std::size_t k = 2;         // past events before t
  std::size_t d_in = 32;     // clip feature width
  std::size_t d_rsa = 384;   // layer width
  std::size_t layers = 2;    // N_r

  std::size_t slots() const noexcept { return k + 2; }
  void validate() const;
};

namespace rsa {

struct Kernels {
  ad::Var basic;       // φ_p = W_p·q, length k+2
  ad::Var relational;  // φ_h = W_h·flatten(stack(q) ⊙ K), length k+2
};

/// query: [d] (or [1×d]); keys: [(k+2)×d]; w_p: [(k+2)×d]; w_h: [(k+2)×((k+2)·d)].
Kernels kernels(ad::Var query, ad::Var keys, ad::Var w_p, ad::Var w_h);

/// Φ_g = V + W_g·(Vᵀ·V) for values [(k+2)×d] and w_g [(k+2)×d].
ad::Var relational_context(ad::Var values, ad::Var w_g);

/// φ = (φ_p + φ_h)ᵀ·Φ_g, length d.
ad::Var attend(ad::Var basic, ad::Var relational, ad::Var context);

}  // namespace rsa

/// f_z: past slots from [x_τ; x_t], the future slot from x_t alone.
struct ClipProjection {
  Linear past;    // (2·d_in) -> d_rsa
  Linear future;  // d_in -> d_rsa

  static ClipProjection create(ParamStore& store, Initializer& init, const RsaConfig& cfg);

  struct Output {
    ad::Var slots;        // Z, [(k+2)×d_rsa]
    ad::Var future_slot;  // z_{t+1}, [1×d_rsa]
  };
  /// clips: [(k+1)×d_in], oldest first.
  Output operator()(const Context& ctx, ad::Var clips, const RsaConfig& cfg) const;
};

struct RsaLayer {
  ParamId w_p;  // [(k+2)×d_rsa]
  ParamId w_h;  // [(k+2)×((k+2)·d_rsa)]
  ParamId w_g;  // [(k+2)×d_rsa]
  FeedForward ffn;
  LayerNorm norm;

  static RsaLayer create(ParamStore& store, Initializer& init, const std::string& name, const RsaConfig& cfg,
                         std::size_t ffn_hidden);
  /// Computes φ from h, substitutes it for row k and applies FFN then LN.
  ad::Var operator()(const Context& ctx, ad::Var h, std::size_t k) const;
};

/// Stand-in for an RSA layer in the no-RSA ablation: unmasked multi-head
/// self-attention over all slots followed by the same FFN and LN.
struct SelfAttentionLayer {
  MultiHeadAttention attention;
  FeedForward ffn;
  LayerNorm norm;

  static SelfAttentionLayer create(ParamStore& store, Initializer& init, const std::string& name,
                                   std::size_t d, std::size_t heads, std::size_t ffn_hidden);
  ad::Var operator()(const Context& ctx, ad::Var h) const;
};

class RsaEncoder {
 public:
  /// With `mha_heads` set, standard self-attention layers replace RSA layers.
  static RsaEncoder create(ParamStore& store, Initializer& init, const RsaConfig& cfg, std::size_t ffn_hidden,
                           std::optional<std::size_t> mha_heads = std::nullopt);

  /// Z (without positional encoding) -> h_rsa, [(k+2)×d_rsa].
  ad::Var operator()(const Context& ctx, ad::Var slots) const;

  const RsaConfig& config() const noexcept { return cfg_; }
  const std::vector<std::variant<RsaLayer, SelfAttentionLayer>>& layers() const noexcept { return layers_; }

 private:
  RsaConfig cfg_;
  std::vector<std::variant<RsaLayer, SelfAttentionLayer>> layers_;
  FeedForward final_ffn_;
  LayerNorm final_norm_;
};

}  // namespace rfcm
