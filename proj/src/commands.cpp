#include "rfcm/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rfcm/checkpoint.hpp"
#include "rfcm/errors.hpp"
#include "rfcm/evaluation.hpp"
#include "rfcm/grad_suites.hpp"
#include "rfcm/inference.hpp"
#include "rfcm/rng.hpp"

namespace rfcm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<Sample> make_samples(std::span<const Episode> episodes, const Vocabulary& vocab, std::size_t max_len) {
  std::vector<Sample> out;
  out.reserve(episodes.size());
  for (const auto& ep : episodes) out.push_back(make_sample(ep, vocab, max_len));
  return out;
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("failed writing " + path.string());
}

std::string epoch_line(const EpochLog& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "epoch %zu  train_total %.6f  ce %.6f  iwp %.6f  corr %.6f  mse %.6f  val_total %.6f  gl %.3f%s",
                r.epoch, r.train.total, r.train.ce, r.train.iwp, r.train.corr, r.train.mse, r.val_total, r.gl,
                r.stopped ? "  early stop" : "");
  return buf;
}

/// First dotted path at which two config objects differ, ignoring ignore.
std::string first_difference(const json& a, const json& b, const std::string& ignore) {
  for (const auto& op : json::diff(a, b)) {
    std::string path = op.at("path").get<std::string>();
    std::replace(path.begin(), path.end(), '/', '.');
    if (!path.empty() && path.front() == '.') path.erase(0, 1);
    if (path != ignore) return path;
  }
  return {};
}

struct LoadedModel {
  RunConfig cfg;
  Checkpoint ckpt;
  RfcmModel model;
};

LoadedModel load_model(const fs::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  RunConfig cfg = config_from_json(ckpt.config);
  if (cfg.model.stack.vocab_size != ckpt.vocab.size()) {
    throw ConfigError("checkpoint vocabulary has " + std::to_string(ckpt.vocab.size()) +
                      " tokens but model.vocab_size is " + std::to_string(cfg.model.stack.vocab_size));
  }
  RfcmModel model(cfg.model, 0);
  restore_parameters(ckpt, model.params());
  return {std::move(cfg), std::move(ckpt), std::move(model)};
}

Tensor parse_clips(const fs::path& path, const ModelConfig& mc) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open clips file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("clips file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (j.is_object()) {
    if (!j.contains("clips")) throw ParseError("clips file: object needs a 'clips' field");
    j = j["clips"];
  }
  if (!j.is_array() || j.size() != mc.rsa.k + 1) {
    throw ParseError("clips file: expected an array of " + std::to_string(mc.rsa.k + 1) + " clips");
  }
  std::vector<double> values;
  for (const auto& clip : j) {
    if (!clip.is_array() || clip.size() != mc.rsa.d_in) {
      throw ParseError("clips file: every clip must be an array of " + std::to_string(mc.rsa.d_in) + " numbers");
    }
    for (const auto& v : clip) {
      if (!v.is_number()) throw ParseError("clips file: clip entries must be numbers");
      values.push_back(v.get<double>());
    }
  }
  return Tensor({mc.rsa.k + 1, mc.rsa.d_in}, std::move(values));
}

}  // namespace

RunData load_run_data(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("data directory " + dir.string() + " does not exist");
  RunData d;
  d.train = load_dataset(dir / "train.jsonl");
  d.val = load_dataset(dir / "val.jsonl");
  d.vocab = fs::exists(dir / "vocab.json") ? Vocabulary::load(dir / "vocab.json") : Vocabulary::build(d.train);
  return d;
}

void check_episode_shapes(std::span<const Episode> episodes, const ModelConfig& model, const std::string& source) {
  for (const auto& ep : episodes) {
    if (ep.clips.size() != model.rsa.k + 1) {
      throw ConfigError(source + ": episode " + ep.id + " has " + std::to_string(ep.clips.size()) +
                        " clips but model.k = " + std::to_string(model.rsa.k));
    }
    if (ep.future_clip.size() != model.rsa.d_in) {
      throw ConfigError(source + ": episode " + ep.id + " has clip width " + std::to_string(ep.future_clip.size()) +
                        " but model.d_in = " + std::to_string(model.rsa.d_in));
    }
  }
}

void resolve_vocab_size(RunConfig& cfg, const Vocabulary& vocab) {
  if (cfg.model.stack.vocab_size == 0) cfg.model.stack.vocab_size = vocab.size();
  if (cfg.model.stack.vocab_size != vocab.size()) {
    throw ConfigError("model.vocab_size is " + std::to_string(cfg.model.stack.vocab_size) + " but the vocabulary has " +
                      std::to_string(vocab.size()) + " tokens");
  }
  cfg.validate();
}

std::uint64_t init_seed(std::uint64_t run_seed) { return derive_seed(run_seed, 0x1417'0001ULL); }

TrainedRun train_in_memory(const RunConfig& cfg, std::uint64_t seed, const RunData& data, std::ostream* log) {
  check_episode_shapes(data.train, cfg.model, "train");
  check_episode_shapes(data.val, cfg.model, "val");
  const std::size_t max_len = cfg.model.stack.max_len;
  const auto train_set = make_samples(data.train, data.vocab, max_len);
  const auto val_set = make_samples(data.val, data.vocab, max_len);
  TrainedRun run{RfcmModel(cfg.model, init_seed(seed)), ParamStore{}, TrainState{}};
  run.best = run.model.params();
  Adam adam(run.model.params());
  TrainCallbacks cb;
  cb.on_epoch = [&](const EpochLog& row, bool improved, const RfcmModel& m, const Adam&, const TrainState&) {
    if (improved) run.best = m.params();
    if (log) *log << epoch_line(row) << std::endl;
  };
  train(run.model, adam, run.state, train_set, val_set, cfg.train, cfg.loss, seed, cb);
  return run;
}

void command_gen_data(const GenDataOptions& o, std::ostream& log) {
  RunConfig cfg = o.config ? load_config(*o.config) : RunConfig{};
  if (o.n_train) cfg.data.n_train = *o.n_train;
  if (o.n_val) cfg.data.n_val = *o.n_val;
  if (o.n_test) cfg.data.n_test = *o.n_test;
  if (o.k) cfg.model.rsa.k = *o.k;
  if (o.d_in) cfg.model.rsa.d_in = *o.d_in;
  if (o.noise) cfg.data.noise = *o.noise;
  cfg.validate();
  const std::uint64_t seed = resolve_seed(o.seed, cfg);
  ensure_directory(o.out);
  const DatasetSplits splits = generate_dataset(generator_config(cfg, seed));
  try {
    save_dataset(splits.train, o.out / "train.jsonl");
    save_dataset(splits.val, o.out / "val.jsonl");
    save_dataset(splits.test, o.out / "test.jsonl");
    Vocabulary::build(splits.train).save(o.out / "vocab.json");
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  log << "wrote " << splits.train.size() << "/" << splits.val.size() << "/" << splits.test.size()
      << " episodes (seed " << seed << ") to " << o.out.string() << "\n";
}

void command_train(const TrainOptions& o, std::ostream& log) {
  RunConfig cfg = o.config ? load_config(*o.config) : RunConfig{};
  if (o.ablation) cfg.model.ablation = parse_ablation(*o.ablation);
  if (o.max_epochs) cfg.train.max_epochs = *o.max_epochs;
  if (o.data) cfg.data.dir = o.data->string();
  if (cfg.data.dir.empty()) throw ConfigError("train needs --data or data.dir in the config");
  const std::uint64_t seed = resolve_seed(o.seed, cfg);
  cfg.seed = seed;

  const RunData data = load_run_data(cfg.data.dir);
  resolve_vocab_size(cfg, data.vocab);
  check_episode_shapes(data.train, cfg.model, "train");
  check_episode_shapes(data.val, cfg.model, "val");
  const std::size_t max_len = cfg.model.stack.max_len;
  const auto train_set = make_samples(data.train, data.vocab, max_len);
  const auto val_set = make_samples(data.val, data.vocab, max_len);
  const json cfg_json = config_to_json(cfg);

  ensure_directory(o.out);
  RfcmModel model(cfg.model, init_seed(seed));
  Adam adam(model.params());
  TrainState state;
  if (o.resume) {
    const Checkpoint ckpt = load_checkpoint(o.out / "last.ckpt");
    if (const auto diff = first_difference(ckpt.config, cfg_json, "train.max_epochs"); !diff.empty()) {
      throw ConfigError("cannot resume: config field '" + diff + "' differs from the checkpoint");
    }
    if (!(ckpt.vocab == data.vocab)) throw ConfigError("cannot resume: vocabulary differs from the checkpoint");
    restore_parameters(ckpt, model.params());
    adam = restore_optimizer(ckpt, model.params());
    state = ckpt.state;
    log << "resuming after epoch " << state.epoch << "\n";
  }
  write_text(o.out / "config.json", cfg_json.dump(2) + "\n");

  TrainCallbacks cb;
  cb.on_epoch = [&](const EpochLog& row, bool improved, const RfcmModel& m, const Adam& opt, const TrainState& st) {
    log << epoch_line(row) << std::endl;
    std::string rows;
    for (const auto& r : st.log) rows += epoch_log_to_json(r).dump() + "\n";
    write_text(o.out / "log.jsonl", rows);
    const Checkpoint ckpt = make_checkpoint(m, &opt, st, data.vocab, cfg_json);
    save_checkpoint(ckpt, o.out / "last.ckpt");
    if (improved) save_checkpoint(ckpt, o.out / "best.ckpt");
  };
  train(model, adam, state, train_set, val_set, cfg.train, cfg.loss, seed, cb);
  log << "finished after epoch " << state.epoch << "; best validation loss " << state.early_stop.best
      << " at epoch " << state.best_epoch << "\n";
}

void command_eval(const EvalOptions& o, std::ostream& log) {
  const std::vector<Episode> episodes = load_dataset(o.data);
  if (episodes.empty()) throw ConfigError("evaluation set " + o.data.string() + " is empty");
  std::vector<MetricReport> per_seed;
  if (o.oracle) {
    std::vector<std::string> captions;
    for (const auto& ep : episodes) captions.push_back(oracle_caption(ep));
    per_seed.push_back(score_captions(captions, episodes));
  } else {
    if (!o.checkpoint) throw ConfigError("eval needs --checkpoint unless --oracle is given");
    LoadedModel loaded = load_model(*o.checkpoint);
    check_episode_shapes(episodes, loaded.cfg.model, o.data.string());
    if (o.seeds <= 1) {
      per_seed.push_back(evaluate_model(loaded.model, loaded.ckpt.vocab, episodes, loaded.cfg.decode));
    } else {
      if (loaded.cfg.data.dir.empty()) throw ConfigError("multi-seed evaluation needs data.dir in the checkpoint config");
      const RunData data = load_run_data(loaded.cfg.data.dir);
      if (!(data.vocab == loaded.ckpt.vocab)) throw ConfigError("training vocabulary differs from the checkpoint");
      const std::uint64_t base = loaded.cfg.seed.value_or(kDefaultSeed);
      for (std::size_t i = 0; i < o.seeds; ++i) {
        log << "seed " << base + i << ": training\n";
        TrainedRun run = train_in_memory(loaded.cfg, base + i, data, nullptr);
        run.model.params() = run.best;
        per_seed.push_back(evaluate_model(run.model, data.vocab, episodes, loaded.cfg.decode));
        log << "seed " << base + i << ": cider_d " << per_seed.back().cider_d << "\n";
      }
    }
  }
  const json report = report_to_json(aggregate(per_seed));
  if (o.out) {
    write_text(*o.out, report.dump(2) + "\n");
    log << "wrote " << o.out->string() << "\n";
  }
  log << report.dump(2) << "\n";
}

void command_caption(const CaptionOptions& o, std::ostream& out) {
  LoadedModel loaded = load_model(o.checkpoint);
  Tensor clips;
  if (o.clips) {
    clips = parse_clips(*o.clips, loaded.cfg.model);
  } else if (o.episode_id) {
    const fs::path source = o.data ? *o.data : fs::path(loaded.cfg.data.dir) / "test.jsonl";
    const auto episodes = load_dataset(source);
    const auto it = std::find_if(episodes.begin(), episodes.end(), [&](const Episode& e) { return e.id == *o.episode_id; });
    if (it == episodes.end()) throw ConfigError("episode " + *o.episode_id + " not found in " + source.string());
    check_episode_shapes(std::span(&*it, 1), loaded.cfg.model, source.string());
    clips = it->clip_matrix();
  } else {
    throw ConfigError("caption needs --clips or --episode-id");
  }
  const Generation g = generate_caption(loaded.model, clips, loaded.cfg.decode, &loaded.ckpt.vocab);
  if (o.json) {
    json tokens = json::array();
    for (const auto id : g.ids) tokens.push_back(loaded.ckpt.vocab.token(id));
    out << json{{"caption", g.caption}, {"ids", g.ids}, {"tokens", tokens}}.dump() << "\n";
  } else {
    out << g.caption << "\n";
  }
}

bool command_gradcheck(const GradcheckOptions& o, std::ostream& out) {
  struct FaultGuard {
    explicit FaultGuard(bool on) { ad::set_gelu_gradient_fault(on); }
    ~FaultGuard() { ad::set_gelu_gradient_fault(false); }
  } guard(o.inject_fault);
  if (o.inject_fault) out << "gelu backward fault injected\n";
  if (o.scope == "ops") {
    bool ok = true;
    char line[160];
    for (const auto& r : run_ops_gradcheck(o.seed)) {
      const bool pass = r.report.passed(o.tolerance);
      ok = ok && pass;
      std::snprintf(line, sizeof line, "%-28s %6zu elements  max rel err %.3e  %s\n", r.name.c_str(), r.report.checked,
                    r.report.max_rel_error, pass ? "PASS" : "FAIL");
      out << line;
    }
    out << (ok ? "all ops PASS" : "some ops FAIL") << " at tolerance " << o.tolerance << "\n";
    return ok;
  }
  if (o.scope == "model") {
    const GradCheckReport report = run_model_gradcheck(o.seed);
    out << format_report(report, o.tolerance);
    return report.passed(o.tolerance);
  }
  throw ConfigError("--scope must be ops or model");
}

int report_exception(std::ostream& err) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace rfcm
