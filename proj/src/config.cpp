#include "rfcm/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>

#include "rfcm/errors.hpp"

namespace rfcm {

using nlohmann::json;

namespace {

using Setter = std::function<void(const json&, const std::string& path)>;

[[noreturn]] void type_error(const std::string& path, const char* expected) {
  throw ConfigError("config field '" + path + "' must be " + expected);
}

template <typename T>
Setter unsigned_field(T& target) {
  return [&target](const json& v, const std::string& path) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      type_error(path, "a nonnegative integer");
    }
    target = v.get<T>();
  };
}

Setter real_field(double& target) {
  return [&target](const json& v, const std::string& path) {
    if (!v.is_number()) type_error(path, "a number");
    target = v.get<double>();
  };
}

Setter bool_field(bool& target) {
  return [&target](const json& v, const std::string& path) {
    if (!v.is_boolean()) type_error(path, "a boolean");
    target = v.get<bool>();
  };
}

Setter string_field(std::string& target) {
  return [&target](const json& v, const std::string& path) {
    if (!v.is_string()) type_error(path, "a string");
    target = v.get<std::string>();
  };
}

void apply_section(const json& j, const std::string& prefix, const std::map<std::string, Setter>& fields) {
  if (!j.is_object()) type_error(prefix, "an object");
  for (const auto& [key, value] : j.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown config key '" + path + "'");
    it->second(value, path);
  }
}

}  // namespace

void RunConfig::validate() const {
  model.rsa.validate();
  model.stack.validate();
  if (model.stack.vocab_size != 0) model.validate();
  loss.validate();
  train.validate();
  decode.validate();
  if (decode.max_len > model.stack.max_len) throw ConfigError("decode.max_len must not exceed model.max_len");
  if (data.n_train == 0 || data.n_val == 0 || data.n_test == 0) {
    throw ConfigError("data.n_train, data.n_val and data.n_test must be >= 1");
  }
  if (!(data.noise >= 0)) throw ConfigError("data.noise must be nonnegative");
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  auto& r = c.model.rsa;
  auto& s = c.model.stack;
  std::string ablation = to_string(c.model.ablation);
  const std::map<std::string, Setter> model_fields = {
      {"k", unsigned_field(r.k)},
      {"d_in", unsigned_field(r.d_in)},
      {"d_rsa", unsigned_field(r.d_rsa)},
      {"rsa_layers", unsigned_field(r.layers)},
      {"enc_layers", unsigned_field(s.enc_layers)},
      {"dec_layers", unsigned_field(s.dec_layers)},
      {"heads", unsigned_field(s.heads)},
      {"d_enc", unsigned_field(s.d_enc)},
      {"d_dec", unsigned_field(s.d_dec)},
      {"max_len", unsigned_field(s.max_len)},
      {"ffn_mult", unsigned_field(s.ffn_mult)},
      {"vocab_size", unsigned_field(s.vocab_size)},
      {"ablation", string_field(ablation)},
  };
  auto& l = c.loss;
  const std::map<std::string, Setter> loss_fields = {
      {"ce", real_field(l.ce)},
      {"iwp", real_field(l.iwp)},
      {"corr", real_field(l.corr)},
      {"mse", real_field(l.mse)},
      {"iwp_scale", unsigned_field(l.iwp_scale)},
      {"n_th", unsigned_field(l.n_th)},
      {"margin", real_field(l.margin)},
      {"iwp_per_word_frequency", bool_field(l.iwp_per_word_frequency)},
      {"corr_max_negatives", unsigned_field(l.corr_max_negatives)},
  };
  auto& t = c.train;
  const std::map<std::string, Setter> train_fields = {
      {"learning_rate", real_field(t.learning_rate)},
      {"beta1", real_field(t.beta1)},
      {"beta2", real_field(t.beta2)},
      {"epsilon", real_field(t.epsilon)},
      {"batch_size", unsigned_field(t.batch_size)},
      {"max_epochs", unsigned_field(t.max_epochs)},
      {"early_stop_alpha", real_field(t.early_stop_alpha)},
      {"early_stopping", bool_field(t.early_stopping)},
      {"clip_norm", real_field(t.clip_norm)},
  };
  const std::map<std::string, Setter> decode_fields = {{"max_len", unsigned_field(c.decode.max_len)}};
  auto& d = c.data;
  const std::map<std::string, Setter> data_fields = {
      {"dir", string_field(d.dir)},
      {"n_train", unsigned_field(d.n_train)},
      {"n_val", unsigned_field(d.n_val)},
      {"n_test", unsigned_field(d.n_test)},
      {"noise", real_field(d.noise)},
  };
  std::uint64_t seed = 0;
  bool has_seed = false;
  const std::map<std::string, Setter> top = {
      {"seed",
       [&](const json& v, const std::string& path) {
         if (v.is_null()) return;
         unsigned_field(seed)(v, path);
         has_seed = true;
       }},
      {"model", [&](const json& v, const std::string& path) { apply_section(v, path, model_fields); }},
      {"loss", [&](const json& v, const std::string& path) { apply_section(v, path, loss_fields); }},
      {"train", [&](const json& v, const std::string& path) { apply_section(v, path, train_fields); }},
      {"decode", [&](const json& v, const std::string& path) { apply_section(v, path, decode_fields); }},
      {"data", [&](const json& v, const std::string& path) { apply_section(v, path, data_fields); }},
  };
  apply_section(j, "", top);
  if (has_seed) c.seed = seed;
  c.model.ablation = parse_ablation(ablation);
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const RunConfig& c) {
  const auto& r = c.model.rsa;
  const auto& s = c.model.stack;
  const auto& l = c.loss;
  const auto& t = c.train;
  json j;
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  j["model"] = {{"k", r.k},
                {"d_in", r.d_in},
                {"d_rsa", r.d_rsa},
                {"rsa_layers", r.layers},
                {"enc_layers", s.enc_layers},
                {"dec_layers", s.dec_layers},
                {"heads", s.heads},
                {"d_enc", s.d_enc},
                {"d_dec", s.d_dec},
                {"max_len", s.max_len},
                {"ffn_mult", s.ffn_mult},
                {"vocab_size", s.vocab_size},
                {"ablation", to_string(c.model.ablation)}};
  j["loss"] = {{"ce", l.ce},
               {"iwp", l.iwp},
               {"corr", l.corr},
               {"mse", l.mse},
               {"iwp_scale", l.iwp_scale},
               {"n_th", l.n_th},
               {"margin", l.margin},
               {"iwp_per_word_frequency", l.iwp_per_word_frequency},
               {"corr_max_negatives", l.corr_max_negatives}};
  j["train"] = {{"learning_rate", t.learning_rate},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"epsilon", t.epsilon},
                {"batch_size", t.batch_size},
                {"max_epochs", t.max_epochs},
                {"early_stop_alpha", t.early_stop_alpha},
                {"early_stopping", t.early_stopping},
                {"clip_norm", t.clip_norm}};
  j["decode"] = {{"max_len", c.decode.max_len}};
  j["data"] = {{"dir", c.data.dir},
               {"n_train", c.data.n_train},
               {"n_val", c.data.n_val},
               {"n_test", c.data.n_test},
               {"noise", c.data.noise}};
  return j;
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const RunConfig& cfg) {
  if (flag) return *flag;
  if (cfg.seed) return *cfg.seed;
  if (const char* env = std::getenv("RFCM_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0' || env[0] == '-') throw ConfigError("RFCM_SEED must be a nonnegative integer, got '" + std::string(env) + "'");
    return v;
  }
  return kDefaultSeed;
}

GeneratorConfig generator_config(const RunConfig& cfg, std::uint64_t seed) {
  GeneratorConfig g;
  g.seed = seed;
  g.n_train = cfg.data.n_train;
  g.n_val = cfg.data.n_val;
  g.n_test = cfg.data.n_test;
  g.k = cfg.model.rsa.k;
  g.d_in = cfg.model.rsa.d_in;
  g.noise = cfg.data.noise;
  return g;
}

}  // namespace rfcm
