#include "rfcm/inference.hpp"

#include "rfcm/errors.hpp"

namespace rfcm {

void DecodeConfig::validate() const {
  if (max_len < 2) throw ConfigError("decode.max_len must be >= 2");
}

std::size_t greedy_token(const Tensor& logits, std::size_t row) {
  const std::size_t n = logits.cols();
  std::size_t best = n;
  for (std::size_t c = 0; c < n; ++c) {
    if (c == kBos || c == kPad) continue;
    if (best == n || logits.at(row, c) > logits.at(row, best)) best = c;
  }
  if (best == n) throw ContractError("vocabulary has no token other than BOS and PAD");
  return best;
}

Generation generate_caption(const RfcmModel& model, const Tensor& clips, const DecodeConfig& cfg,
                            const Vocabulary* vocab) {
  cfg.validate();
  const std::size_t max_len = std::min(cfg.max_len, model.config().stack.max_len);
  ad::Tape video_tape(false);
  const Context video_ctx(video_tape, model.params());
  const VideoEncoding video = model.encode_video(video_ctx, clips);

  Generation g;
  g.ids.push_back(kBos);
  while (g.ids.size() < max_len) {
    // Every step writes onto the same no-grad tape; Var handles stay valid.
    const ad::Var logits = model.text_logits(video_ctx, video, g.ids, g.ids.size());
    const std::size_t row = g.ids.size() - 1;
    Tensor last({1, logits.value().cols()});
    for (std::size_t c = 0; c < last.cols(); ++c) last.at(0, c) = logits.value().at(row, c);
    const std::size_t next = greedy_token(last);
    g.step_logits.push_back(std::move(last));
    g.ids.push_back(next);
    if (next == kEos) break;
  }
  if (vocab) g.caption = detokenize(g.ids, *vocab);
  return g;
}

Tensor rescore(const RfcmModel& model, const Tensor& clips, std::span<const std::size_t> ids) {
  ad::Tape tape(false);
  const Context ctx(tape, model.params());
  const VideoEncoding video = model.encode_video(ctx, clips);
  return model.text_logits(ctx, video, ids, ids.size()).value();
}

}  // namespace rfcm
