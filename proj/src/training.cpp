#include "rfcm/training.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "rfcm/errors.hpp"
#include "rfcm/rng.hpp"

namespace rfcm {

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("train.learning_rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("train.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("train.beta2 must lie in [0, 1)");
  if (!(epsilon > 0)) throw ConfigError("train.epsilon must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(early_stop_alpha > 0)) throw ConfigError("train.early_stop_alpha must be positive");
  if (!(clip_norm >= 0)) throw ConfigError("train.clip_norm must be nonnegative");
}

GradStore collect_gradients(const ad::Tape& tape, const ParamStore& params) {
  GradStore grads;
  grads.reserve(params.size());
  for (const auto& p : params.all()) {
    const Tensor* g = tape.grad_of(p.tensor);
    grads.push_back(g ? *g : Tensor(p.tensor.shape()));
  }
  return grads;
}

double clip_global_norm(GradStore& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (const double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) {
      for (auto& v : g.data()) v *= s;
    }
  }
  return norm;
}

Adam::Adam(const ParamStore& params) {
  for (const auto& p : params.all()) {
    m_.emplace_back(p.tensor.shape());
    v_.emplace_back(p.tensor.shape());
  }
}

void Adam::step(ParamStore& params, const GradStore& grads, const TrainConfig& cfg) {
  if (m_.size() != params.size()) throw ContractError("optimizer state does not match the parameter set");
  if (grads.size() != params.size()) {
    throw ContractError("missing gradient: " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params.all()[i].tensor.shape()) {
      throw ContractError("gradient for " + params.all()[i].name + " has shape " + shape_string(grads[i].shape()));
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& theta = params.all()[i].tensor.data();
    auto& m = m_[i].data();
    auto& v = v_[i].data();
    const auto& g = grads[i].data();
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      theta[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

void Adam::restore(std::uint64_t steps, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != v.size()) throw ContractError("moment vectors differ in length");
  step_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

double EarlyStopState::generalization_loss(double e_va) const {
  const double opt = std::min(best, e_va);
  return 100.0 * (e_va / opt - 1.0);
}

bool EarlyStopState::update(double e_va, double alpha) {
  const double gl = generalization_loss(e_va);
  history.push_back(e_va);
  best = std::min(best, e_va);
  return gl > alpha;
}

bool early_stop_check(std::span<const double> history, double alpha) {
  if (history.empty()) throw ContractError("early_stop_check needs at least one validation value");
  EarlyStopState s;
  bool stop = false;
  for (const double e : history) stop = s.update(e, alpha);
  return stop;
}

namespace {

std::vector<const Sample*> gather(std::span<const Sample> data, std::span<const std::size_t> order,
                                  std::size_t begin, std::size_t end) {
  std::vector<const Sample*> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(&data[order.empty() ? i : order[i]]);
  return out;
}

void accumulate(LossBreakdown& acc, const LossBreakdown& b, double weight) {
  acc.ce += weight * b.ce;
  acc.iwp += weight * b.iwp;
  acc.corr += weight * b.corr;
  acc.mse += weight * b.mse;
  acc.total += weight * b.total;
}

}  // namespace

LossBreakdown evaluate_loss(const RfcmModel& model, std::span<const Sample> data, const LossWeights& w,
                            std::size_t batch_size) {
  if (data.empty()) throw ContractError("evaluate_loss on an empty set");
  LossBreakdown acc;
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    const std::size_t e = std::min(data.size(), b + batch_size);
    const auto batch = gather(data, {}, b, e);
    ad::Tape tape(false);
    Context ctx(tape, model.params());
    accumulate(acc, batch_loss(model, ctx, batch, w).values, static_cast<double>(e - b));
  }
  const double inv = 1.0 / static_cast<double>(data.size());
  acc.ce *= inv;
  acc.iwp *= inv;
  acc.corr *= inv;
  acc.mse *= inv;
  acc.total *= inv;
  return acc;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x7a11'0000ULL + epoch));
  rng.shuffle(order);
  return order;
}

void train(RfcmModel& model, Adam& adam, TrainState& state, std::span<const Sample> train_set,
           std::span<const Sample> val_set, const TrainConfig& cfg, const LossWeights& w, std::uint64_t seed,
           const TrainCallbacks& callbacks) {
  cfg.validate();
  w.validate();
  if (train_set.empty()) throw ContractError("training set is empty");
  if (val_set.empty()) throw ContractError("validation set is empty");
  while (!state.stopped && state.epoch < cfg.max_epochs) {
    const std::size_t epoch = state.epoch + 1;
    const auto order = epoch_order(train_set.size(), seed, epoch);
    LossBreakdown epoch_loss;
    for (std::size_t b = 0, index = 0; b < train_set.size(); b += cfg.batch_size, ++index) {
      const std::size_t e = std::min(train_set.size(), b + cfg.batch_size);
      const auto batch = gather(train_set, order, b, e);
      ad::Tape tape;
      Context ctx(tape, model.params());
      const BatchLoss loss = batch_loss(model, ctx, batch, w);
      if (!std::isfinite(loss.values.total)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(index + 1));
      }
      tape.backward(loss.total);
      GradStore grads = collect_gradients(tape, model.params());
      clip_global_norm(grads, cfg.clip_norm);
      adam.step(model.params(), grads, cfg);
      accumulate(epoch_loss, loss.values, static_cast<double>(e - b));
    }
    const double inv = 1.0 / static_cast<double>(train_set.size());
    epoch_loss.ce *= inv;
    epoch_loss.iwp *= inv;
    epoch_loss.corr *= inv;
    epoch_loss.mse *= inv;
    epoch_loss.total *= inv;

    EpochLog row;
    row.epoch = epoch;
    row.train = epoch_loss;
    row.val_total = evaluate_loss(model, val_set, w, cfg.batch_size).total;
    if (!std::isfinite(row.val_total)) {
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    const bool improved = row.val_total < state.early_stop.best;
    row.gl = state.early_stop.generalization_loss(row.val_total);
    const bool stop = state.early_stop.update(row.val_total, cfg.early_stop_alpha);
    row.stopped = cfg.early_stopping && stop;
    if (improved) state.best_epoch = epoch;
    state.epoch = epoch;
    state.stopped = row.stopped;
    state.log.push_back(row);
    if (callbacks.on_epoch) callbacks.on_epoch(row, improved, model, adam, state);
  }
}

}  // namespace rfcm
