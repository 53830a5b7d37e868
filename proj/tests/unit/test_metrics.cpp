#include <filesystem>
#include <fstream>

#include <doctest.h>
#include <json.hpp>

#include "rfcm/dataset.hpp"
#include "rfcm/errors.hpp"
#include "rfcm/evaluation.hpp"
#include "rfcm/metrics.hpp"
#include "rfcm/rng.hpp"

using namespace rfcm;
using nlohmann::json;

namespace {

json read_json(const std::string& name) {
  std::ifstream in(std::filesystem::path(RFCM_SOURCE_DIR) / "tests" / "fixtures" / name);
  return json::parse(in);
}

std::vector<EvalPair> fixture_corpus() {
  std::vector<EvalPair> corpus;
  const json fixture = read_json("metric_pairs.json");
  for (const auto& p : fixture["pairs"]) {
    EvalPair e{normalize_words(p["candidate"].get<std::string>()), {}};
    for (const auto& r : p["references"]) e.references.push_back(normalize_words(r.get<std::string>()));
    corpus.push_back(std::move(e));
  }
  return corpus;
}

EvalPair pair(const std::string& c, std::vector<std::string> refs) {
  EvalPair e{normalize_words(c), {}};
  for (const auto& r : refs) e.references.push_back(normalize_words(r));
  return e;
}

}  // namespace

TEST_CASE("golden fixture from the independent script") {
  const auto corpus = fixture_corpus();
  const json g = read_json("metric_golden.json");
  CHECK(std::abs(bleu4(corpus) - g["bleu4"].get<double>()) < 1e-6);
  CHECK(std::abs(rouge_l(corpus) - g["rouge_l"].get<double>()) < 1e-6);
  CHECK(std::abs(cider_d(corpus) - g["cider_d"].get<double>()) < 1e-6);
  CHECK(std::abs(meteor_basic(corpus) - g["meteor_basic"].get<double>()) < 1e-6);
  const auto per = cider_d_per_pair(corpus);
  for (std::size_t i = 0; i < per.size(); ++i) {
    CHECK(std::abs(per[i] - g["cider_d_per_pair"][i].get<double>()) < 1e-6);
    CHECK(std::abs(sentence_bleu4(corpus[i]) - g["sentence_bleu4"][i].get<double>()) < 1e-6);
  }
}

TEST_CASE("metric maxima and minima") {
  const auto corpus = fixture_corpus();
  CHECK(cider_d_per_pair(corpus)[0] == doctest::Approx(10.0).epsilon(1e-10));
  const std::vector<EvalPair> same{pair("the red bottle falls down", {"the red bottle falls down"})};
  CHECK(bleu4(same) == 1.0);
  CHECK(rouge_l(same) == 1.0);
  const std::size_t m = 5;
  CHECK(meteor_basic(same) == doctest::Approx(1.0 - 0.5 / double(m * m * m)).epsilon(1e-12));
  const std::vector<EvalPair> disjoint{pair("alpha beta gamma delta", {"one two three four"}),
                                       pair("the cup", {"the cup"})};
  CHECK(sentence_bleu4(disjoint[0]) == 0.0);
  CHECK(rouge_l_pair(disjoint[0]) == 0.0);
  CHECK(cider_d_per_pair(disjoint)[0] == 0.0);
  CHECK(meteor_pair(disjoint[0]) == 0.0);
  CHECK_THROWS_AS(bleu4(std::vector<EvalPair>{}), ContractError);
}

TEST_CASE("ROUGE-L with beta 1.2") {
  CHECK(lcs_length({"a", "b", "c"}, {"a", "c"}) == 2);
  const double p = 2.0 / 3.0, r = 1.0, b2 = 1.44;
  CHECK(rouge_l_pair(pair("a b c", {"a c"})) == doctest::Approx((1 + b2) * p * r / (r + b2 * p)).epsilon(1e-12));
}

TEST_CASE("meteor stems and chunks") {
  CHECK(simple_stem("falling") == "fall");
  CHECK(simple_stem("placed") == "plac");
  CHECK(simple_stem("cups") == "cup");
  CHECK(simple_stem("is") == "is");
  const auto a = meteor_align(normalize_words("the cups fell over"), normalize_words("the cup fell"));
  CHECK(a.matches == 3);
  CHECK(a.chunks == 1);
  const auto b = meteor_align(normalize_words("b a"), normalize_words("a b"));
  CHECK(b.matches == 2);
  CHECK(b.chunks == 2);
}

TEST_CASE("scores are permutation invariant") {
  auto corpus = fixture_corpus();
  const MetricReport base = score_corpus(corpus);
  Rng rng(3);
  for (int t = 0; t < 5; ++t) {
    rng.shuffle(corpus);
    const MetricReport r = score_corpus(corpus);
    CHECK(r.bleu4 == doctest::Approx(base.bleu4).epsilon(1e-12));
    CHECK(r.rouge_l == doctest::Approx(base.rouge_l).epsilon(1e-12));
    CHECK(r.cider_d == doctest::Approx(base.cider_d).epsilon(1e-12));
    CHECK(r.meteor_basic == doctest::Approx(base.meteor_basic).epsilon(1e-12));
  }
}

TEST_CASE("aggregation across seeds") {
  MetricReport r;
  r.n = 10;
  r.cider_d = 3.0;
  r.bleu4 = 0.5;
  const std::vector<MetricReport> same(5, r);
  const AggregateReport a = aggregate(same);
  CHECK(a.mean.cider_d == 3.0);
  CHECK(a.std.cider_d == 0.0);
  CHECK(a.std.bleu4 == 0.0);
  MetricReport r2 = r;
  r2.cider_d = 5.0;
  const std::vector<MetricReport> two{r, r2};
  CHECK(aggregate(two).std.cider_d == doctest::Approx(std::sqrt(2.0)));
  const json j = report_to_json(a);
  for (const char* key : {"n", "bleu4", "rouge_l", "meteor_basic", "cider_d", "exact_match", "per_seed", "std"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["per_seed"].size() == 5);
}
