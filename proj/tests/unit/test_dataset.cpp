#include <filesystem>
#include <fstream>
#include <set>

#include <doctest.h>

#include "helpers.hpp"
#include "rfcm/errors.hpp"
#include "rfcm/evaluation.hpp"

using namespace rfcm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("rfcm_unit_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("generator defaults and determinism") {
  const GeneratorConfig defaults;
  CHECK(defaults.n_train == 800);
  CHECK(defaults.n_val == 100);
  CHECK(defaults.n_test == 100);
  const auto a = generate_dataset(test::tiny_generator(5));
  const auto b = generate_dataset(test::tiny_generator(5));
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(generate_episode(test::tiny_generator(5), "train", 3) == a.train[3]);
  CHECK_FALSE(generate_dataset(test::tiny_generator(6)).train == a.train);
  GeneratorConfig zero = test::tiny_generator(5);
  zero.n_train = 0;
  CHECK_THROWS_AS(generate_dataset(zero), ConfigError);
}

TEST_CASE("episode structure") {
  const auto data = generate_dataset(test::tiny_generator(7));
  for (const auto& ep : data.train) {
    CHECK(ep.clips.size() == 3);
    CHECK(ep.future_clip.size() == 8);
    CHECK(ep.past_captions.size() == 3);
    CHECK(ep.events.size() == 4);
    CHECK(ep.events.back() == predict_future_event({ep.events.begin(), ep.events.end() - 1}));
    CHECK(ep.future_caption == render_caption(ep.events.back()));
    CHECK(ep.collide == (ep.events.back().kind == EventKind::collide));
  }
}

TEST_CASE("splits are disjoint") {
  const auto data = generate_dataset(test::tiny_generator(8, 20));
  std::set<std::string> ids;
  for (const auto* split : {&data.train, &data.val, &data.test}) {
    for (const auto& ep : *split) CHECK(ids.insert(ep.id).second);
  }
  CHECK(data.train.front().clips != data.val.front().clips);
}

TEST_CASE("collision label balance over 10000 episodes") {
  GeneratorConfig g = test::tiny_generator(9);
  std::size_t collide = 0;
  for (std::size_t i = 0; i < 10000; ++i) collide += generate_episode(g, "train", i).collide;
  const double frac = static_cast<double>(collide) / 10000.0;
  CHECK(frac >= 0.3);
  CHECK(frac <= 0.7);
}

TEST_CASE("oracle captions reach the metric ceiling") {
  const auto data = generate_dataset(test::tiny_generator(10, 4));
  std::vector<std::string> captions;
  for (const auto& ep : data.test) captions.push_back(oracle_caption(ep));
  const MetricReport r = score_captions(captions, data.test);
  CHECK(r.exact_match == 1.0);
  CHECK(r.bleu4 == doctest::Approx(1.0));
}

TEST_CASE("JSONL round trip and errors") {
  const fs::path dir = scratch("jsonl");
  const auto data = generate_dataset(test::tiny_generator(11));
  save_dataset(data.train, dir / "train.jsonl");
  CHECK(load_dataset(dir / "train.jsonl") == data.train);
  save_dataset(data.train, dir / "again.jsonl");
  std::ifstream a(dir / "train.jsonl"), b(dir / "again.jsonl");
  CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));

  { std::ofstream(dir / "empty.jsonl"); }
  CHECK(load_dataset(dir / "empty.jsonl").empty());

  const std::string line = episode_to_json_line(data.train[0]);
  {
    std::ofstream out(dir / "bad.jsonl");
    out << line << "\n" << line.substr(0, line.size() / 2) << "\n";
  }
  try {
    load_dataset(dir / "bad.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_WITH_AS(episode_from_json_line(R"({"id":"x","clips":[[1]],"future_clip":"no"})", 4),
                       doctest::Contains("future_clip"), ParseError);
}

TEST_CASE("vocabulary and tokenization") {
  std::vector<Episode> fixture(1);
  fixture[0].future_caption = "The red cup falls.";
  fixture[0].past_captions = {"the robot grasps the cup", "a box"};
  const Vocabulary v = Vocabulary::build(fixture);
  CHECK(v.token(kBos) == "<bos>");
  CHECK(v.token(kEos) == "<eos>");
  CHECK(v.token(kPad) == "<pad>");
  CHECK(v.token(kUnk) == "<unk>");
  CHECK(v.frequency(v.id("the")) == 3);
  CHECK(v.frequency(v.id("cup")) == 2);
  CHECK(v.id("unseen") == kUnk);
  CHECK(Vocabulary::from_json(v.to_json()) == v);
  for (std::size_t i = 5; i < v.size(); ++i) CHECK(v.token(i - 1) < v.token(i));

  const TokenSequence s = tokenize("the red cup falls", v, 8);
  CHECK(s.ids.size() == 8);
  CHECK(s.valid_len == 6);
  CHECK(s.ids[0] == kBos);
  CHECK(s.ids[5] == kEos);
  CHECK(s.ids[7] == kPad);
  CHECK(detokenize(s.ids, v) == "the red cup falls");
  CHECK(tokenize(detokenize(s.ids, v), v, 8) == s);

  const TokenSequence cut = tokenize("the robot grasps the red cup", v, 6);
  CHECK(cut.valid_len == 6);
  CHECK(cut.ids[5] == kEos);
  CHECK(detokenize(cut.ids, v) == "the robot grasps the");
  CHECK(normalize_words("The, RED cup!") == std::vector<std::string>{"the", "red", "cup"});
}
