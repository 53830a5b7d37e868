#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "rfcm/autodiff.hpp"
#include "rfcm/losses.hpp"
#include "rfcm/model.hpp"
#include "rfcm/params.hpp"

namespace rfcm {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 25;
  double early_stop_alpha = 5.0;
  bool early_stopping = true;
  double clip_norm = 1.0;  // global-norm clipping threshold; 0 disables

  void validate() const;
};

/// One gradient per parameter, indexed like the ParamStore.
using GradStore = std::vector<Tensor>;

/// Gradients of every parameter after tape.backward(); parameters the
/// loss does not reach get zeros.
GradStore collect_gradients(const ad::Tape& tape, const ParamStore& params);

/// Scales grads in place so their global L2 norm is at most max_norm.
/// Returns the norm before scaling.
double clip_global_norm(GradStore& grads, double max_norm);

class Adam {
 public:
  Adam() = default;
  explicit Adam(const ParamStore& params);

  /// Bias-corrected update of every parameter.  grads must hold one tensor
  /// of matching shape per parameter.
  void step(ParamStore& params, const GradStore& grads, const TrainConfig& cfg);

  std::uint64_t steps() const noexcept { return step_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }

  /// Restores optimizer state, e.g. from a checkpoint.
  void restore(std::uint64_t steps, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  std::uint64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

/// Prechelt's generalization-loss criterion.
struct EarlyStopState {
  std::vector<double> history;
  double best = std::numeric_limits<double>::infinity();

  /// GL = 100 * (e_va / E_opt - 1), with E_opt including e_va.
  double generalization_loss(double e_va) const;
  /// Records e_va and reports whether GL exceeds alpha.
  bool update(double e_va, double alpha);
};

/// Stateless form: stop iff GL > alpha over history (last element current).
bool early_stop_check(std::span<const double> history, double alpha);

struct EpochLog {
  std::size_t epoch = 0;
  LossBreakdown train;
  double val_total = 0.0;
  double gl = 0.0;
  bool stopped = false;
};

struct TrainState {
  std::size_t epoch = 0;  // completed epochs
  std::vector<EpochLog> log;
  EarlyStopState early_stop;
  std::size_t best_epoch = 0;
  bool stopped = false;
};

struct TrainCallbacks {
  /// After each epoch, with the updated state.  improved is true when this
  /// epoch set a new best validation loss.
  std::function<void(const EpochLog&, bool improved, const RfcmModel&, const Adam&, const TrainState&)> on_epoch;
};

/// Mean of the batch losses over data without recording gradients,
/// weighted by batch size.
LossBreakdown evaluate_loss(const RfcmModel& model, std::span<const Sample> data, const LossWeights& w,
                            std::size_t batch_size);

/// Epoch permutation of n training indices; a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Continues training from state.epoch until max_epochs or early stop.
void train(RfcmModel& model, Adam& adam, TrainState& state, std::span<const Sample> train_set,
           std::span<const Sample> val_set, const TrainConfig& cfg, const LossWeights& w, std::uint64_t seed,
           const TrainCallbacks& callbacks = {});

}  // namespace rfcm
