#include "rfcm/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <fstream>
#include <set>
#include <sstream>

#include "rfcm/errors.hpp"

namespace rfcm {

using nlohmann::json;

namespace {

constexpr std::string_view kMomentPrefix[2] = {"adam.m.", "adam.v."};

json state_to_json(const TrainState& s, std::uint64_t adam_steps) {
  json j;
  j["epoch"] = s.epoch;
  j["best_epoch"] = s.best_epoch;
  j["stopped"] = s.stopped;
  j["adam_step"] = adam_steps;
  j["best_val"] = std::isfinite(s.early_stop.best) ? json(s.early_stop.best) : json(nullptr);
  j["val_history"] = s.early_stop.history;
  json rows = json::array();
  for (const auto& r : s.log) rows.push_back(epoch_log_to_json(r));
  j["history"] = std::move(rows);
  return j;
}

TrainState state_from_json(const json& j, std::uint64_t& adam_steps) {
  TrainState s;
  s.epoch = j.at("epoch").get<std::size_t>();
  s.best_epoch = j.at("best_epoch").get<std::size_t>();
  s.stopped = j.at("stopped").get<bool>();
  adam_steps = j.at("adam_step").get<std::uint64_t>();
  const json& best = j.at("best_val");
  s.early_stop.best = best.is_null() ? std::numeric_limits<double>::infinity() : best.get<double>();
  s.early_stop.history = j.at("val_history").get<std::vector<double>>();
  for (const auto& row : j.at("history")) s.log.push_back(epoch_log_from_json(row));
  return s;
}

void put_le(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out += static_cast<char>((bits >> (8 * i)) & 0xff);
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

const Tensor* Checkpoint::find(std::string_view name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

json epoch_log_to_json(const EpochLog& r) {
  return json{{"epoch", r.epoch},           {"train_ce", r.train.ce},       {"train_iwp", r.train.iwp},
              {"train_corr", r.train.corr}, {"train_mse", r.train.mse},     {"train_total", r.train.total},
              {"val_total", r.val_total},   {"gl", r.gl},                   {"stopped", r.stopped}};
}

EpochLog epoch_log_from_json(const json& j) {
  EpochLog r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.train.ce = j.at("train_ce").get<double>();
  r.train.iwp = j.at("train_iwp").get<double>();
  r.train.corr = j.at("train_corr").get<double>();
  r.train.mse = j.at("train_mse").get<double>();
  r.train.total = j.at("train_total").get<double>();
  r.val_total = j.at("val_total").get<double>();
  r.gl = j.at("gl").get<double>();
  r.stopped = j.at("stopped").get<bool>();
  return r;
}

Checkpoint make_checkpoint(const RfcmModel& model, const Adam* adam, const TrainState& state,
                           const Vocabulary& vocab, const json& config) {
  Checkpoint c;
  c.config = config;
  c.vocab = vocab;
  c.state = state;
  const auto& params = model.params().all();
  for (const auto& p : params) c.tensors.emplace_back(p.name, p.tensor);
  if (adam && adam->steps() > 0) {
    c.adam_steps = adam->steps();
    const std::vector<Tensor>* moments[2] = {&adam->first_moments(), &adam->second_moments()};
    for (int k = 0; k < 2; ++k) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        c.tensors.emplace_back(std::string(kMomentPrefix[k]) + params[i].name, (*moments[k])[i]);
      }
    }
  }
  return c;
}

std::string serialize_checkpoint(const Checkpoint& c) {
  json header;
  header["version"] = c.version;
  header["config"] = c.config;
  header["vocab"] = json::parse(c.vocab.to_json());
  header["train_state"] = state_to_json(c.state, c.adam_steps);
  json entries = json::array();
  std::size_t offset = 0;
  std::string payload;
  for (const auto& [name, t] : c.tensors) {
    const std::size_t length = t.size() * sizeof(double);
    entries.push_back({{"name", name}, {"dtype", "f64"}, {"shape", t.shape()}, {"offset", offset}, {"length", length}});
    for (const double v : t.data()) put_le(payload, v);
    offset += length;
  }
  header["tensors"] = std::move(entries);
  std::string out = header.dump();
  out += '\n';
  out += payload;
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw CheckpointTruncatedError("checkpoint truncated: header line incomplete");
  json header;
  try {
    header = json::parse(bytes.substr(0, nl));
  } catch (const json::parse_error& e) {
    throw CheckpointError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  Checkpoint c;
  try {
    c.version = header.at("version").get<int>();
    if (c.version != kCheckpointVersion) {
      throw CheckpointVersionError("checkpoint version " + std::to_string(c.version) + " is not supported (expected " +
                                   std::to_string(kCheckpointVersion) + ")");
    }
    c.config = header.at("config");
    c.vocab = Vocabulary::from_json(header.at("vocab").dump());
    c.state = state_from_json(header.at("train_state"), c.adam_steps);
    const std::string_view payload = bytes.substr(nl + 1);
    for (const auto& e : header.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      if (e.at("dtype").get<std::string>() != "f64") throw CheckpointError("tensor " + name + " has unsupported dtype");
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto length = e.at("length").get<std::size_t>();
      if (length != shape_size(shape) * sizeof(double)) {
        throw CheckpointError("tensor " + name + " length disagrees with its shape");
      }
      if (offset > payload.size() || payload.size() - offset < length) {
        throw CheckpointTruncatedError("checkpoint truncated: payload of tensor " + name + " is incomplete");
      }
      std::vector<double> values(shape_size(shape));
      for (std::size_t i = 0; i < values.size(); ++i) values[i] = get_le(payload.data() + offset + 8 * i);
      c.tensors.emplace_back(name, Tensor(shape, std::move(values)));
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint header is malformed: ") + e.what());
  } catch (const DimensionError& e) {
    throw CheckpointError(std::string("checkpoint tensor has an invalid shape: ") + e.what());
  } catch (const ParseError& e) {
    throw CheckpointError(std::string("checkpoint vocabulary is malformed: ") + e.what());
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

void restore_parameters(const Checkpoint& ckpt, ParamStore& params) {
  std::set<std::string> seen;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.starts_with(kMomentPrefix[0]) || name.starts_with(kMomentPrefix[1])) continue;
    Parameter* p = params.find(name);
    if (!p) throw UnknownParameterError("checkpoint parameter " + name + " does not exist in the model");
    if (p->tensor.shape() != t.shape()) {
      throw ParameterShapeError("parameter " + name + ": checkpoint shape " + shape_string(t.shape()) +
                                ", model shape " + shape_string(p->tensor.shape()));
    }
    seen.insert(name);
  }
  for (const auto& p : params.all()) {
    if (!seen.contains(p.name)) throw MissingParameterError("checkpoint lacks parameter " + p.name);
  }
  for (const auto& [name, t] : ckpt.tensors) {
    if (Parameter* p = params.find(name)) p->tensor = t;
  }
}

Adam restore_optimizer(const Checkpoint& ckpt, const ParamStore& params) {
  Adam adam(params);
  if (ckpt.adam_steps == 0) return adam;
  std::vector<Tensor> moments[2];
  for (int k = 0; k < 2; ++k) {
    for (const auto& p : params.all()) {
      const Tensor* t = ckpt.find(std::string(kMomentPrefix[k]) + p.name);
      if (!t) throw MissingParameterError("checkpoint lacks optimizer state for " + p.name);
      if (t->shape() != p.tensor.shape()) {
        throw ParameterShapeError("optimizer state for " + p.name + " has shape " + shape_string(t->shape()));
      }
      moments[k].push_back(*t);
    }
  }
  adam.restore(ckpt.adam_steps, std::move(moments[0]), std::move(moments[1]));
  return adam;
}

}  // namespace rfcm
