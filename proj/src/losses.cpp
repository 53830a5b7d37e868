#include "rfcm/losses.hpp"

#include <algorithm>

#include "rfcm/errors.hpp"

namespace rfcm {

namespace {

ad::Var zero(ad::Tape& tape) { return tape.constant(Tensor::scalar(0.0)); }

std::vector<std::size_t> shifted_targets(const TokenSequence& ref) {
  if (ref.valid_len < 2 || ref.valid_len > ref.ids.size()) {
    throw ContractError("reference needs BOS and EOS within its ids");
  }
  return {ref.ids.begin() + 1, ref.ids.begin() + static_cast<std::ptrdiff_t>(ref.valid_len)};
}

}  // namespace

void LossWeights::validate() const {
  if (ce < 0 || iwp < 0 || corr < 0 || mse < 0) throw ConfigError("loss weights must be nonnegative");
  if (iwp_scale == 0) throw ConfigError("loss.iwp_scale must be a positive integer");
  if (margin < 0) throw ConfigError("loss.margin must be nonnegative");
}

double weighted_total(const LossBreakdown& p, const LossWeights& w) {
  return w.ce * p.ce + w.iwp * p.iwp + w.corr * p.corr + w.mse * p.mse;
}

LossBreakdown total_loss(double ce, double iwp, double corr, double mse, const LossWeights& w) {
  LossBreakdown b{ce, iwp, corr, mse, 0.0};
  b.total = weighted_total(b, w);
  return b;
}

ad::Var caption_ce(ad::Var logits, const TokenSequence& reference) {
  const auto targets = shifted_targets(reference);
  if (logits.value().rows() < targets.size()) {
    throw DimensionError("caption_ce: " + std::to_string(logits.value().rows()) + " logit rows for " +
                         std::to_string(targets.size()) + " targets");
  }
  const ad::Var rows = logits.value().rows() == targets.size() ? logits : ad::slice_rows(logits, 0, targets.size());
  return ad::cross_entropy(rows, targets);
}

ad::Var iwp_loss(ad::Var first_word_logits, std::size_t first_word_id, std::size_t train_freq,
                 const LossWeights& w) {
  ad::Tape& tape = first_word_logits.tape();
  if (first_word_id == kEos || train_freq <= w.n_th) return zero(tape);
  const double gamma = w.iwp_per_word_frequency ? 1.0 / static_cast<double>(train_freq)
                                                : 1.0 / static_cast<double>(w.iwp_scale);
  const ad::Var row = first_word_logits.value().rows() == 1 ? first_word_logits
                                                            : ad::slice_rows(first_word_logits, 0, 1);
  const std::size_t target[] = {first_word_id};
  return ad::scale(ad::cross_entropy(row, target), gamma);
}

ad::Var corr_loss(ad::Var positive_nll, std::span<const ad::Var> negative_nll, double margin) {
  if (negative_nll.empty()) return zero(positive_nll.tape());
  ad::Var acc;
  for (const ad::Var& neg : negative_nll) {
    const ad::Var hinge = ad::relu(ad::add_scalar(ad::sub(positive_nll, neg), margin));
    acc = acc.valid() ? ad::add(acc, hinge) : hinge;
  }
  return ad::scale(acc, 1.0 / static_cast<double>(negative_nll.size()));
}

ad::Var future_mse(ad::Var target, ad::Var prediction) {
  if (target.value().size() != prediction.value().size()) {
    throw DimensionError("future_mse: widths " + shape_string(target.shape()) + " and " +
                         shape_string(prediction.shape()));
  }
  const ad::Var t = ad::reshape(target, {target.value().size()});
  const ad::Var p = ad::reshape(prediction, {prediction.value().size()});
  const ad::Var diff = ad::sub(t, p);
  return ad::mean(ad::hadamard(diff, diff));
}

Sample make_sample(const Episode& ep, const Vocabulary& vocab, std::size_t max_len) {
  Sample s;
  s.clips = ep.clip_matrix();
  s.caption = tokenize(ep.future_caption, vocab, max_len);
  for (const auto& c : ep.past_captions) s.negatives.push_back(tokenize(c, vocab, max_len));
  s.future_clip = ep.future_clip;
  s.first_word_freq = vocab.frequency(s.caption.ids[1]);
  return s;
}

EpisodeTerms episode_terms(const RfcmModel& model, const Context& ctx, const Sample& sample, const LossWeights& w,
                           std::size_t text_len) {
  ad::Tape& tape = ctx.tape();
  const VideoEncoding video = model.encode_video(ctx, sample.clips);
  auto score = [&](const TokenSequence& seq) {
    if (text_len < seq.valid_len || text_len > seq.ids.size()) {
      throw ContractError("text length " + std::to_string(text_len) + " cannot hold a sequence of valid length " +
                          std::to_string(seq.valid_len));
    }
    const std::span<const std::size_t> ids(seq.ids.data(), text_len);
    return model.text_logits(ctx, video, ids, seq.valid_len);
  };

  EpisodeTerms t;
  const ad::Var logits = score(sample.caption);
  t.ce = caption_ce(logits, sample.caption);
  t.iwp = iwp_loss(logits, sample.caption.ids[1], sample.first_word_freq, w);

  const std::size_t limit = w.corr_max_negatives == 0 ? sample.negatives.size()
                                                      : std::min(w.corr_max_negatives, sample.negatives.size());
  if (w.corr > 0.0 && limit > 0) {
    std::vector<ad::Var> negatives;
    // The most recent past captions are the hardest negatives.
    for (std::size_t i = sample.negatives.size() - limit; i < sample.negatives.size(); ++i) {
      negatives.push_back(caption_ce(score(sample.negatives[i]), sample.negatives[i]));
    }
    t.corr = corr_loss(t.ce, negatives, w.margin);
  } else {
    t.corr = zero(tape);
  }
  t.mse = future_mse(tape.constant(sample.future_clip), video.future_clip);
  return t;
}

std::size_t batch_text_length(std::span<const Sample* const> batch) {
  std::size_t len = 0;
  for (const Sample* s : batch) {
    len = std::max(len, s->caption.valid_len);
    for (const auto& n : s->negatives) len = std::max(len, n.valid_len);
  }
  return len;
}

BatchLoss batch_loss(const RfcmModel& model, const Context& ctx, std::span<const Sample* const> batch,
                     const LossWeights& w, std::size_t text_len) {
  if (batch.empty()) throw ContractError("batch_loss on an empty batch");
  if (text_len == 0) text_len = batch_text_length(batch);
  ad::Var ce, iwp, corr, mse;
  auto accumulate = [](ad::Var& acc, ad::Var v) { acc = acc.valid() ? ad::add(acc, v) : v; };
  for (const Sample* s : batch) {
    const EpisodeTerms t = episode_terms(model, ctx, *s, w, text_len);
    accumulate(ce, t.ce);
    accumulate(iwp, t.iwp);
    accumulate(corr, t.corr);
    accumulate(mse, t.mse);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  ce = ad::scale(ce, inv);
  iwp = ad::scale(iwp, inv);
  corr = ad::scale(corr, inv);
  mse = ad::scale(mse, inv);

  BatchLoss out;
  out.values = total_loss(ce.value()[0], iwp.value()[0], corr.value()[0], mse.value()[0], w);
  out.total = ad::add(ad::add(ad::add(ad::scale(ce, w.ce), ad::scale(iwp, w.iwp)), ad::scale(corr, w.corr)),
                      ad::scale(mse, w.mse));
  return out;
}

}  // namespace rfcm
