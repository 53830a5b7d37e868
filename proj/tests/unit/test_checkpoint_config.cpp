#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <doctest.h>
#include <json.hpp>

#include "helpers.hpp"
#include "rfcm/checkpoint.hpp"
#include "rfcm/config.hpp"
#include "rfcm/errors.hpp"

using namespace rfcm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Saved {
  DatasetSplits data = generate_dataset(test::tiny_generator(41, 8));
  Vocabulary vocab = Vocabulary::build(data.train);
  ModelConfig mc = test::tiny_model(vocab.size());
  RfcmModel model{mc, 42};
  Adam adam{model.params()};
  TrainState state;

  Saved() {
    const auto train_set = test::samples_of(data.train, vocab, mc.stack.max_len);
    const auto val_set = test::samples_of(data.val, vocab, mc.stack.max_len);
    TrainConfig cfg;
    cfg.max_epochs = 2;
    cfg.batch_size = 4;
    train(model, adam, state, train_set, val_set, cfg, LossWeights{}, 42);
  }
  RunConfig run_config() const {
    RunConfig c;
    c.model = mc;
    return c;
  }
  Checkpoint checkpoint() const { return make_checkpoint(model, &adam, state, vocab, config_to_json(run_config())); }
};

}  // namespace

TEST_CASE("checkpoint bytes round trip") {
  const Saved s;
  const std::string bytes = serialize_checkpoint(s.checkpoint());
  const Checkpoint back = parse_checkpoint(bytes);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(back.vocab == s.vocab);
  CHECK(back.state.epoch == 2);
  CHECK(back.state.log.size() == 2);
  CHECK(back.adam_steps == s.adam.steps());

  RfcmModel fresh(s.mc, 999);
  restore_parameters(back, fresh.params());
  for (std::size_t i = 0; i < fresh.params().size(); ++i)
    CHECK(fresh.params().all()[i].tensor == s.model.params().all()[i].tensor);
  const Adam adam = restore_optimizer(back, fresh.params());
  CHECK(adam.first_moments() == s.adam.first_moments());
  CHECK(adam.second_moments() == s.adam.second_moments());

  const fs::path p = fs::temp_directory_path() / "rfcm_unit_ckpt.bin";
  save_checkpoint(back, p);
  CHECK(serialize_checkpoint(load_checkpoint(p)) == bytes);
}

TEST_CASE("checkpoint errors") {
  const Saved s;
  const Checkpoint ckpt = s.checkpoint();
  const std::string bytes = serialize_checkpoint(ckpt);

  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, bytes.size() - 9)), CheckpointTruncatedError);
  std::string bumped = bytes;
  const auto pos = bumped.find("\"version\":1");
  REQUIRE(pos != std::string::npos);
  bumped.replace(pos, 11, "\"version\":7");
  CHECK_THROWS_AS(parse_checkpoint(bumped), CheckpointVersionError);
  CHECK_THROWS_AS(parse_checkpoint("not a checkpoint"), CheckpointError);

  Checkpoint extra = ckpt;
  extra.tensors.emplace_back("mystery.weight", Tensor({2}));
  RfcmModel m(s.mc, 1);
  CHECK_THROWS_AS(restore_parameters(extra, m.params()), UnknownParameterError);

  Checkpoint missing = ckpt;
  missing.tensors.erase(missing.tensors.begin());
  CHECK_THROWS_AS(restore_parameters(missing, m.params()), MissingParameterError);

  ModelConfig wide = s.mc;
  wide.rsa.d_rsa = 16;
  RfcmModel w(wide, 1);
  try {
    restore_parameters(ckpt, w.params());
    FAIL("expected ParameterShapeError");
  } catch (const ParameterShapeError& e) {
    CHECK(std::string(e.what()).find("rsa.") != std::string::npos);
  }
}

TEST_CASE("config parsing") {
  const RunConfig defaults;
  CHECK(defaults.model.rsa.d_rsa == 384);
  CHECK(defaults.train.learning_rate == 1e-4);
  CHECK(defaults.train.batch_size == 16);

  const RunConfig c = config_from_json(json::parse(
      R"({"seed": 5, "model": {"d_rsa": 32, "ablation": "no_rsa"}, "train": {"max_epochs": 3}, "data": {"n_train": 7}})"));
  CHECK(c.seed == 5u);
  CHECK(c.model.rsa.d_rsa == 32);
  CHECK(c.model.ablation == Ablation::no_rsa);
  CHECK(c.train.max_epochs == 3);
  CHECK(c.data.n_train == 7);
  CHECK(config_from_json(config_to_json(c)).model.rsa.d_rsa == 32);
  CHECK(config_to_json(config_from_json(config_to_json(c))) == config_to_json(c));

  CHECK_THROWS_WITH_AS(config_from_json(json::parse(R"({"model": {"d_rssa": 3}})")),
                       doctest::Contains("model.d_rssa"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json(json::parse(R"({"bogus": 1})")), doctest::Contains("bogus"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json(json::parse(R"({"train": {"learning_rate": "fast"}})")),
                       doctest::Contains("train.learning_rate"), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"model": {"ablation": "none"}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"model": {"d_enc": 30, "heads": 4}})")), ConfigError);
}

TEST_CASE("seed resolution order") {
  RunConfig cfg;
  ::unsetenv("RFCM_SEED");
  CHECK(resolve_seed(std::nullopt, cfg) == kDefaultSeed);
  ::setenv("RFCM_SEED", "17", 1);
  CHECK(resolve_seed(std::nullopt, cfg) == 17);
  cfg.seed = 4;
  CHECK(resolve_seed(std::nullopt, cfg) == 4);
  CHECK(resolve_seed(9, cfg) == 9);
  ::unsetenv("RFCM_SEED");
}

namespace {

void compare_to_schema(const json& value, const json& schema, const std::string& path) {
  INFO("at " << path);
  if (!schema.contains("properties")) return;
  CHECK(schema.value("additionalProperties", true) == false);
  const json& props = schema["properties"];
  for (const auto& [key, v] : value.items()) {
    CHECK_MESSAGE(props.contains(key), "schema lacks " << path << key);
    if (props.contains(key) && v.is_object()) compare_to_schema(v, props[key], path + key + ".");
  }
  for (const auto& [key, s] : props.items()) {
    if (key != "seed") CHECK_MESSAGE(value.contains(key), "config lacks " << path << key);
  }
}

}  // namespace

TEST_CASE("published schema matches the resolved config") {
  std::ifstream in(fs::path(RFCM_SOURCE_DIR) / "schemas" / "run_config.schema.json");
  const json schema = json::parse(in);
  RunConfig cfg;
  cfg.seed = 1;
  compare_to_schema(config_to_json(cfg), schema, "");
}
