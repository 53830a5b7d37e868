#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rfcm/dataset.hpp"
#include "rfcm/inference.hpp"
#include "rfcm/metrics.hpp"
#include "rfcm/model.hpp"

namespace rfcm {

/// Candidate and reference tokens via the dataset tokenizer.
EvalPair make_eval_pair(std::string_view candidate, std::string_view reference);

MetricReport score_captions(std::span<const std::string> candidates, std::span<const Episode> episodes);

/// Greedily decodes every episode and scores against its future caption.
MetricReport evaluate_model(const RfcmModel& model, const Vocabulary& vocab, std::span<const Episode> episodes,
                            const DecodeConfig& decode, std::vector<std::string>* captions = nullptr);

/// Ceiling decoder: renders the template of the future event implied by the
/// episode's recorded past events.
std::string oracle_caption(const Episode& episode);

struct AggregateReport {
  MetricReport mean;
  MetricReport std;  // sample standard deviation; zero for one seed
  std::vector<MetricReport> per_seed;
};

AggregateReport aggregate(std::span<const MetricReport> per_seed);

nlohmann::json report_to_json(const MetricReport& r);
/// {n, bleu4, rouge_l, meteor_basic, cider_d, exact_match, per_seed, std, tokenizer}
nlohmann::json report_to_json(const AggregateReport& r);

}  // namespace rfcm
