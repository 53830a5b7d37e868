#include <cmath>

#include <doctest.h>

#include "helpers.hpp"
#include "rfcm/errors.hpp"
#include "rfcm/training.hpp"

using namespace rfcm;

TEST_CASE("Adam first step closed form") {
  ParamStore store;
  store.add("theta", Tensor::vector({1.0}));
  Adam adam(store);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  adam.step(store, {Tensor::vector({1.0})}, cfg);
  CHECK(store.all()[0].tensor[0] == 1.0 - 0.1 * 1.0 / (1.0 + 1e-8));
  CHECK(store.all()[0].tensor[0] == doctest::Approx(0.9));
  CHECK(adam.steps() == 1);
}

TEST_CASE("Adam with zero gradients leaves parameters unchanged") {
  ParamStore store;
  Rng rng(1);
  store.add("a", test::random_tensor(rng, {3, 2}));
  const Tensor before = store.all()[0].tensor;
  Adam adam(store);
  for (int i = 0; i < 5; ++i) adam.step(store, {Tensor({3, 2})}, TrainConfig{});
  CHECK(store.all()[0].tensor == before);
  CHECK_THROWS_AS(adam.step(store, {Tensor({2, 3})}, TrainConfig{}), ContractError);
  CHECK_THROWS_AS(adam.step(store, {}, TrainConfig{}), ContractError);
}

TEST_CASE("global-norm clipping") {
  GradStore g{Tensor::vector({3, 0}), Tensor::vector({0, 4})};
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0][0] == doctest::Approx(0.6));
  CHECK(g[1][1] == doctest::Approx(0.8));
  GradStore small{Tensor::vector({0.1})};
  clip_global_norm(small, 1.0);
  CHECK(small[0][0] == 0.1);
}

TEST_CASE("generalization-loss early stopping") {
  const std::vector<double> stop{1.0, 0.9, 0.95};
  CHECK(early_stop_check(stop, 5.0));
  EarlyStopState es;
  CHECK(es.generalization_loss(1.0) == 0.0);
  CHECK_FALSE(es.update(1.0, 5.0));
  CHECK_FALSE(es.update(0.9, 5.0));
  CHECK(es.generalization_loss(0.95) == doctest::Approx(5.5556).epsilon(1e-4));
  CHECK(es.update(0.95, 5.0));

  EarlyStopState down;
  for (double e = 2.0; e > 0.1; e *= 0.9) CHECK_FALSE(down.update(e, 5.0));
  CHECK(down.generalization_loss(down.best) == 0.0);
}

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = epoch_order(50, 3, 4);
  CHECK(a == epoch_order(50, 3, 4));
  CHECK(a != epoch_order(50, 3, 5));
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}

namespace {

struct Fixture {
  DatasetSplits data = generate_dataset(test::tiny_generator(31, 16));
  Vocabulary vocab = Vocabulary::build(data.train);
  ModelConfig mc = test::tiny_model(vocab.size());
  std::vector<Sample> train = test::samples_of(data.train, vocab, mc.stack.max_len);
  std::vector<Sample> val = test::samples_of(data.val, vocab, mc.stack.max_len);
};

}  // namespace

TEST_CASE("training is deterministic and logs every component") {
  Fixture f;
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.batch_size = 4;
  const auto run = [&] {
    RfcmModel model(f.mc, 7);
    Adam adam(model.params());
    TrainState state;
    train(model, adam, state, f.train, f.val, cfg, LossWeights{}, 7);
    return std::make_pair(model.params().all(), state);
  };
  const auto [p1, s1] = run();
  const auto [p2, s2] = run();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i].tensor == p2[i].tensor);
  REQUIRE(s1.log.size() == 3);
  for (const auto& row : s1.log) {
    CHECK(row.train.ce > 0.0);
    CHECK(row.train.mse > 0.0);
    CHECK(row.train.iwp >= 0.0);
    CHECK(row.train.corr >= 0.0);
    CHECK(row.train.total == weighted_total(row.train, LossWeights{}));
    CHECK(std::isfinite(row.val_total));
  }
}

TEST_CASE("all-zero loss weights leave parameters untouched") {
  Fixture f;
  RfcmModel model(f.mc, 8);
  const auto before = model.params().all();
  Adam adam(model.params());
  TrainState state;
  TrainConfig cfg;
  cfg.max_epochs = 1;
  cfg.batch_size = 4;
  train(model, adam, state, f.train, f.val, cfg, LossWeights{0, 0, 0, 0}, 8);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(model.params().all()[i].tensor == before[i].tensor);
}

TEST_CASE("resumed training matches uninterrupted training") {
  Fixture f;
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_epochs = 4;
  RfcmModel a(f.mc, 9);
  Adam adam_a(a.params());
  TrainState sa;
  train(a, adam_a, sa, f.train, f.val, cfg, LossWeights{}, 9);

  RfcmModel b(f.mc, 9);
  Adam adam_b(b.params());
  TrainState sb;
  cfg.max_epochs = 2;
  train(b, adam_b, sb, f.train, f.val, cfg, LossWeights{}, 9);
  cfg.max_epochs = 4;
  train(b, adam_b, sb, f.train, f.val, cfg, LossWeights{}, 9);
  for (std::size_t i = 0; i < a.params().size(); ++i) CHECK(a.params().all()[i].tensor == b.params().all()[i].tensor);
  CHECK(sa.log.size() == sb.log.size());
}

TEST_CASE("training CE drops on a small overfit set") {
  Fixture f;
  RfcmModel model(f.mc, 10);
  Adam adam(model.params());
  TrainState state;
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_epochs = 50;
  cfg.learning_rate = 1e-3;
  cfg.early_stopping = false;
  train(model, adam, state, f.train, f.train, cfg, LossWeights{}, 10);
  CHECK(state.log.back().train.ce < state.log.front().train.ce);
}

TEST_CASE("ablations train end to end") {
  Fixture f;
  for (const Ablation a : {Ablation::no_rsa, Ablation::no_decoder}) {
    ModelConfig mc = f.mc;
    mc.ablation = a;
    RfcmModel model(mc, 11);
    const auto before = model.params().all();
    Adam adam(model.params());
    TrainState state;
    TrainConfig cfg;
    cfg.max_epochs = 2;
    cfg.batch_size = 8;
    train(model, adam, state, f.train, f.val, cfg, LossWeights{}, 11);
    CHECK(std::isfinite(state.log.back().train.total));
    std::size_t changed = 0;
    for (std::size_t i = 0; i < before.size(); ++i) changed += model.params().all()[i].tensor != before[i].tensor;
    CHECK(changed == before.size());
  }
}

TEST_CASE("non-finite loss is reported with epoch and batch") {
  Fixture f;
  RfcmModel model(f.mc, 12);
  for (auto& p : model.params().all()) {
    if (p.name == "head.fc2.bias") p.tensor[0] = NAN;
  }
  Adam adam(model.params());
  TrainState state;
  TrainConfig cfg;
  cfg.batch_size = 8;
  try {
    train(model, adam, state, f.train, f.val, cfg, LossWeights{}, 12);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    INFO(std::string(e.what()));
    CHECK(std::string(e.what()).find("epoch 1, batch 1") != std::string::npos);
  }
}
