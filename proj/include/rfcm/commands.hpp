#pragma once

// The pipeline behind each subcommand of the rfcm executable.  Functions
// throw ConfigError/ParseError/CheckpointError for bad input (exit code 2)
// and NumericalError for non-finite losses (exit code 3).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "rfcm/config.hpp"
#include "rfcm/dataset.hpp"
#include "rfcm/model.hpp"
#include "rfcm/training.hpp"

namespace rfcm {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitNumerical = 3 };

/// Splits and vocabulary of a gen-data output directory.  The vocabulary is
/// read from vocab.json when present, otherwise built from train.jsonl.
struct RunData {
  std::vector<Episode> train;
  std::vector<Episode> val;
  Vocabulary vocab;
};
RunData load_run_data(const std::filesystem::path& dir);

/// Fails with ConfigError when an episode does not have k+1 clips of width d_in.
void check_episode_shapes(std::span<const Episode> episodes, const ModelConfig& model, const std::string& source);

/// Sets model.vocab_size from the vocabulary when it is 0 and validates.
void resolve_vocab_size(RunConfig& cfg, const Vocabulary& vocab);

/// Seed stream for parameter initialization, distinct from the shuffle stream.
std::uint64_t init_seed(std::uint64_t run_seed);

struct TrainedRun {
  RfcmModel model;        // parameters after the last epoch
  ParamStore best;        // parameters at the best validation epoch
  TrainState state;
};

/// Trains from scratch without touching the filesystem.
TrainedRun train_in_memory(const RunConfig& cfg, std::uint64_t seed, const RunData& data, std::ostream* log);

struct GenDataOptions {
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_train, n_val, n_test, k, d_in;
  std::optional<double> noise;
};
void command_gen_data(const GenDataOptions& o, std::ostream& log);

struct TrainOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> data;
  std::filesystem::path out;
  std::optional<std::string> ablation;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_epochs;
  bool resume = false;
};
void command_train(const TrainOptions& o, std::ostream& log);

struct EvalOptions {
  std::optional<std::filesystem::path> checkpoint;
  std::filesystem::path data;  // test split JSONL
  std::optional<std::filesystem::path> out;
  std::size_t seeds = 1;
  bool oracle = false;
};
void command_eval(const EvalOptions& o, std::ostream& log);

struct CaptionOptions {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> clips;
  std::optional<std::string> episode_id;
  std::optional<std::filesystem::path> data;
  bool json = false;
};
void command_caption(const CaptionOptions& o, std::ostream& out);

struct GradcheckOptions {
  std::string scope = "ops";
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  bool inject_fault = false;
};
/// Returns true when every check passed.
bool command_gradcheck(const GradcheckOptions& o, std::ostream& out);

/// Maps the exception in flight to an exit code after printing it.
int report_exception(std::ostream& err);

}  // namespace rfcm
