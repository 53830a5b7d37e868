#include "rfcm/evaluation.hpp"

#include <cmath>

#include "rfcm/errors.hpp"

namespace rfcm {

EvalPair make_eval_pair(std::string_view candidate, std::string_view reference) {
  return {normalize_words(candidate), {normalize_words(reference)}};
}

MetricReport score_captions(std::span<const std::string> candidates, std::span<const Episode> episodes) {
  if (candidates.size() != episodes.size()) throw ContractError("one candidate per episode required");
  std::vector<EvalPair> corpus;
  corpus.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) corpus.push_back(make_eval_pair(candidates[i], episodes[i].future_caption));
  return score_corpus(corpus);
}

MetricReport evaluate_model(const RfcmModel& model, const Vocabulary& vocab, std::span<const Episode> episodes,
                            const DecodeConfig& decode, std::vector<std::string>* captions) {
  std::vector<std::string> out;
  out.reserve(episodes.size());
  for (const auto& ep : episodes) out.push_back(generate_caption(model, ep.clip_matrix(), decode, &vocab).caption);
  const MetricReport r = score_captions(out, episodes);
  if (captions) *captions = std::move(out);
  return r;
}

std::string oracle_caption(const Episode& ep) {
  if (ep.events.size() < 2) throw ContractError("episode " + ep.id + " carries no event metadata");
  const std::vector<Event> past(ep.events.begin(), ep.events.end() - 1);
  return render_caption(predict_future_event(past));
}

AggregateReport aggregate(std::span<const MetricReport> per_seed) {
  if (per_seed.empty()) throw ContractError("aggregate needs at least one report");
  AggregateReport a;
  a.per_seed.assign(per_seed.begin(), per_seed.end());
  const double k = static_cast<double>(per_seed.size());
  auto field = [&](auto member) {
    double mean = 0.0;
    for (const auto& r : per_seed) mean += r.*member;
    mean /= k;
    double var = 0.0;
    for (const auto& r : per_seed) var += (r.*member - mean) * (r.*member - mean);
    a.mean.*member = mean;
    a.std.*member = per_seed.size() > 1 ? std::sqrt(var / (k - 1.0)) : 0.0;
  };
  field(&MetricReport::bleu4);
  field(&MetricReport::rouge_l);
  field(&MetricReport::meteor_basic);
  field(&MetricReport::cider_d);
  field(&MetricReport::exact_match);
  a.mean.n = per_seed.front().n;
  a.std.n = per_seed.front().n;
  return a;
}

nlohmann::json report_to_json(const MetricReport& r) {
  return {{"n", r.n},
          {"bleu4", r.bleu4},
          {"rouge_l", r.rouge_l},
          {"meteor_basic", r.meteor_basic},
          {"cider_d", r.cider_d},
          {"exact_match", r.exact_match}};
}

nlohmann::json report_to_json(const AggregateReport& r) {
  nlohmann::json j = report_to_json(r.mean);
  j["per_seed"] = nlohmann::json::array();
  for (const auto& s : r.per_seed) j["per_seed"].push_back(report_to_json(s));
  nlohmann::json sd = report_to_json(r.std);
  sd.erase("n");
  j["std"] = std::move(sd);
  j["tokenizer"] = "dataset: lowercase, punctuation stripped, whitespace split";
  return j;
}

}  // namespace rfcm
