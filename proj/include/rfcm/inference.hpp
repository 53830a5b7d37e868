#pragma once

#include <string>
#include <vector>

#include "rfcm/dataset.hpp"
#include "rfcm/model.hpp"

namespace rfcm {

struct DecodeConfig {
  std::size_t max_len = 20;  // I, counting BOS and EOS

  void validate() const;
};

struct Generation {
  std::vector<std::size_t> ids;  // BOS first; ends with EOS unless max_len was reached
  std::vector<Tensor> step_logits;  // logits row used to choose ids[j+1]
  std::string caption;
};

/// Greedy decoding: argmax over the vocabulary excluding BOS and PAD, ties
/// to the lowest id, until EOS or max_len tokens.
Generation generate_caption(const RfcmModel& model, const Tensor& clips, const DecodeConfig& cfg,
                            const Vocabulary* vocab = nullptr);

/// Logits of every row when ids are fed in a single forward pass, [len×N_v].
Tensor rescore(const RfcmModel& model, const Tensor& clips, std::span<const std::size_t> ids);

/// Index of the largest entry of row r that is neither BOS nor PAD.
std::size_t greedy_token(const Tensor& logits, std::size_t row = 0);

}  // namespace rfcm
