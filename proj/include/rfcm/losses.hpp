#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rfcm/autodiff.hpp"
#include "rfcm/dataset.hpp"
#include "rfcm/model.hpp"

namespace rfcm {

struct LossWeights {
  double ce = 1.0;
  double iwp = 0.1;
  double corr = 0.005;
  double mse = 10.0;
  std::size_t iwp_scale = 1000;  // W, so that gamma = 1/W
  std::size_t n_th = 30;
  double margin = 0.5;  // delta of the temporal-correctness hinge
  /// Use gamma = 1/freq(first word) instead of the constant 1/W.
  bool iwp_per_word_frequency = false;
  /// Upper bound on past captions scored per episode; 0 scores all of them.
  std::size_t corr_max_negatives = 0;

  void validate() const;
};

/// Unweighted components plus their weighted sum.
struct LossBreakdown {
  double ce = 0.0;
  double iwp = 0.0;
  double corr = 0.0;
  double mse = 0.0;
  double total = 0.0;
};

/// Weighted sum of per-component values, summed in the order ce, iwp, corr, mse.
double weighted_total(const LossBreakdown& parts, const LossWeights& w);
LossBreakdown total_loss(double ce, double iwp, double corr, double mse, const LossWeights& w);

/// Mean NLL of targets ids[1..valid_len-1] under logits rows 0..valid_len-2.
ad::Var caption_ce(ad::Var logits, const TokenSequence& reference);

/// gamma * CE of the first word; identically zero when the word's training
/// frequency is at most n_th or when the caption has no first word.
ad::Var iwp_loss(ad::Var first_word_logits, std::size_t first_word_id, std::size_t train_freq,
                 const LossWeights& w);

/// Mean over negatives of relu(margin + positive - negative); zero when empty.
ad::Var corr_loss(ad::Var positive_nll, std::span<const ad::Var> negative_nll, double margin);

/// Mean of squared differences over the feature width.
ad::Var future_mse(ad::Var target, ad::Var prediction);

/// Everything the objective needs for one episode.
struct Sample {
  Tensor clips;  // [(k+1)×d_in]
  TokenSequence caption;
  std::vector<TokenSequence> negatives;
  Tensor future_clip;  // [d_in]
  std::size_t first_word_freq = 0;
};

Sample make_sample(const Episode& ep, const Vocabulary& vocab, std::size_t max_len);

struct EpisodeTerms {
  ad::Var ce, iwp, corr, mse;
};

/// One forward pass of the episode objective.  Text is fed with text_len
/// rows (>= every sequence's valid length); rows past valid_len are padding.
EpisodeTerms episode_terms(const RfcmModel& model, const Context& ctx, const Sample& sample, const LossWeights& w,
                           std::size_t text_len);

/// Mean over the batch of each component, and the weighted scalar to
/// differentiate.  text_len 0 pads to the longest sequence in the batch.
struct BatchLoss {
  ad::Var total;
  LossBreakdown values;
};

BatchLoss batch_loss(const RfcmModel& model, const Context& ctx, std::span<const Sample* const> batch,
                     const LossWeights& w, std::size_t text_len = 0);

/// Length used when padding a batch: the longest caption or negative.
std::size_t batch_text_length(std::span<const Sample* const> batch);

}  // namespace rfcm
