#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rfcm/attention.hpp"
#include "rfcm/params.hpp"
#include "rfcm/rsa_encoder.hpp"
#include "rfcm/transformer.hpp"

namespace rfcm {

enum class Ablation { full, no_rsa, no_decoder };

std::string to_string(Ablation a);
Ablation parse_ablation(std::string_view name);

struct ModelConfig {
  RsaConfig rsa;
  StackConfig stack;
  Ablation ablation = Ablation::full;

  void validate() const;
};

struct VideoEncoding {
  ad::Var slots;        // Z, [(k+2)×d_rsa]
  ad::Var future_slot;  // z_{t+1}, [1×d_rsa]
  ad::Var future_clip;  // z_{t+1} mapped back to clip width, [1×d_in]
  ad::Var memory;       // h_rsa; invalid when the decoder is ablated
  ad::Var video_rows;   // video block of the encoder input, [(k+2)×d_enc]
};

/// The relational future captioning model.  Text positions follow the
/// shifted-right convention: logits row j predicts token j+1.
class RfcmModel {
 public:
  RfcmModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  /// clips: [(k+1)×d_in], oldest first.
  VideoEncoding encode_video(const Context& ctx, const Tensor& clips) const;

  /// Learned token embedding plus sinusoidal text positions, [L×d_enc].
  ad::Var embed_text(const Context& ctx, std::span<const std::size_t> ids) const;

  /// h_{N_e} over [video; text]; text rows at or after valid_text are padding.
  ad::Var encode(const Context& ctx, const VideoEncoding& video, ad::Var text, std::size_t valid_text) const;

  /// h_{N_d}; the identity when the decoder is ablated.
  ad::Var decode(const Context& ctx, const VideoEncoding& video, ad::Var encoded) const;

  /// Vocabulary logits for every text row, [L×N_v].
  ad::Var text_logits(const Context& ctx, const VideoEncoding& video, ad::Var text, std::size_t valid_text) const;
  ad::Var text_logits(const Context& ctx, const VideoEncoding& video, std::span<const std::size_t> ids,
                      std::size_t valid_text) const;

  const GenerationHead& head() const noexcept { return head_; }

 private:
  ModelConfig cfg_;
  ParamStore params_;
  ClipProjection projection_;
  std::optional<RsaEncoder> rsa_;
  Linear future_readout_;
  Linear video_in_;
  ParamId token_table_;
  ParamId segment_table_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  GenerationHead head_;
};

}  // namespace rfcm
