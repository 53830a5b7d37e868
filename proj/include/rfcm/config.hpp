#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "rfcm/dataset.hpp"
#include "rfcm/inference.hpp"
#include "rfcm/losses.hpp"
#include "rfcm/model.hpp"
#include "rfcm/training.hpp"

namespace rfcm {

struct DataConfig {
  std::string dir;  // directory holding train/val/test.jsonl and vocab.json
  std::size_t n_train = 800;
  std::size_t n_val = 100;
  std::size_t n_test = 100;
  double noise = 0.05;
};

/// Everything a run needs.  The model's vocab_size is 0 until resolved
/// against a vocabulary.
struct RunConfig {
  std::optional<std::uint64_t> seed;
  ModelConfig model;
  LossWeights loss;
  TrainConfig train;
  DecodeConfig decode;
  DataConfig data;

  /// Checks every section; vocab_size is only checked when nonzero.
  void validate() const;
};

inline constexpr std::uint64_t kDefaultSeed = 0;

/// Defaults overlaid with the keys present in j.  Unknown keys and
/// ill-typed values raise ConfigError naming the dotted field path.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const RunConfig& cfg);

/// Flag, then config file, then RFCM_SEED, then kDefaultSeed.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const RunConfig& cfg);

GeneratorConfig generator_config(const RunConfig& cfg, std::uint64_t seed);

}  // namespace rfcm
