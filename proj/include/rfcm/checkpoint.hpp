#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rfcm/dataset.hpp"
#include "rfcm/model.hpp"
#include "rfcm/training.hpp"

namespace rfcm {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class UnknownParameterError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class MissingParameterError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class ParameterShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// File layout: one JSON header line, then the tensors' float64 payload in
/// little-endian order at the byte offsets the header lists.
struct Checkpoint {
  int version = kCheckpointVersion;
  nlohmann::json config = nlohmann::json::object();
  Vocabulary vocab;
  TrainState state;
  std::uint64_t adam_steps = 0;
  /// Model parameters in store order, then "adam.m.<name>" and "adam.v.<name>".
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(std::string_view name) const;
};

/// adam may be null for inference-only checkpoints.
Checkpoint make_checkpoint(const RfcmModel& model, const Adam* adam, const TrainState& state,
                           const Vocabulary& vocab, const nlohmann::json& config);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies stored parameters into params.  Every parameter must be present
/// with its exact shape; stored names the model lacks are rejected.
void restore_parameters(const Checkpoint& ckpt, ParamStore& params);
/// Optimizer moments for params; zero state when the checkpoint has none.
Adam restore_optimizer(const Checkpoint& ckpt, const ParamStore& params);

nlohmann::json epoch_log_to_json(const EpochLog& row);
EpochLog epoch_log_from_json(const nlohmann::json& j);

}  // namespace rfcm
