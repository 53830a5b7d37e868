#include "rfcm/dataset.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rfcm/errors.hpp"
#include "rfcm/rng.hpp"

namespace rfcm {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 6> kColors = {"red", "blue", "green", "yellow", "white", "black"};
constexpr std::array<std::string_view, 6> kCategories = {"bottle", "can", "cup", "box", "bowl", "jar"};
constexpr std::array<std::string_view, 2> kSizes = {"small", "large"};
constexpr std::array<std::string_view, 5> kFurniture = {"table", "shelf", "desk", "cabinet", "counter"};
constexpr std::array<std::string_view, 7> kKinds = {"approach", "grasp", "move", "place",
                                                    "collide", "fall", "settle"};

constexpr double kLargeProbability = 0.7;
constexpr double kOccupiedProbability = 0.7;

// One-hot layout: kind | actor color, category, size | patient flag, color,
// category, size | furniture.
constexpr std::size_t kObjectWidth = kColors.size() + kCategories.size() + kSizes.size();
constexpr std::size_t kAttributeWidth = kKinds.size() + kObjectWidth + 1 + kObjectWidth + kFurniture.size();

template <std::size_t N>
std::size_t index_of(const std::array<std::string_view, N>& catalog, std::string_view value, const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (catalog[i] == value) return i;
  }
  throw ParseError(std::string("unknown ") + what + " '" + std::string(value) + "'");
}

void encode_object(const ObjectDesc& o, std::vector<double>& onehot, std::size_t offset) {
  onehot[offset + index_of(kColors, o.color, "color")] = 1.0;
  onehot[offset + kColors.size() + index_of(kCategories, o.category, "category")] = 1.0;
  onehot[offset + kColors.size() + kCategories.size() + index_of(kSizes, o.size, "size")] = 1.0;
}

std::vector<double> encode_event(const Event& e) {
  std::vector<double> onehot(kAttributeWidth, 0.0);
  onehot[static_cast<std::size_t>(e.kind)] = 1.0;
  std::size_t offset = kKinds.size();
  encode_object(e.actor, onehot, offset);
  offset += kObjectWidth;
  if (e.patient) {
    onehot[offset] = 1.0;
    encode_object(*e.patient, onehot, offset + 1);
  }
  offset += 1 + kObjectWidth;
  if (!e.furniture.empty()) onehot[offset + index_of(kFurniture, e.furniture, "furniture")] = 1.0;
  return onehot;
}

/// Fixed random projection from attribute space to clip space, shared by
/// every split generated from the same seed.
std::vector<double> world_projection(const GeneratorConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 0x5eedf00dULL));
  std::vector<double> p(cfg.d_in * kAttributeWidth);
  const double s = 1.0 / std::sqrt(6.0);
  for (auto& v : p) v = rng.normal(0.0, s);
  return p;
}

Tensor render_clip(const Event& e, const std::vector<double>& projection, std::size_t d_in, double noise,
                   Rng& rng) {
  const auto onehot = encode_event(e);
  Tensor clip({d_in});
  for (std::size_t r = 0; r < d_in; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < kAttributeWidth; ++c) s += projection[r * kAttributeWidth + c] * onehot[c];
    clip[r] = s + noise * rng.normal();
  }
  return clip;
}

std::uint64_t split_stream(std::string_view split) {
  if (split == "train") return 1;
  if (split == "val") return 2;
  if (split == "test") return 3;
  throw ContractError("unknown split '" + std::string(split) + "'");
}

template <std::size_t N>
std::string pick(const std::array<std::string_view, N>& catalog, Rng& rng) {
  return std::string(catalog[rng.index(N)]);
}

std::string object_phrase(const ObjectDesc& o) { return o.color + " " + o.category; }

void append_escaped(std::string& out, std::string_view s) {
  out += '"';
  for (const char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(ch) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", ch);
          out += buf;
        } else {
          out += ch;
        }
    }
  }
  out += '"';
}

void append_number(std::string& out, double v) {
  if (!std::isfinite(v)) throw NumericalError("cannot serialize non-finite clip feature");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

void append_vector(std::string& out, const Tensor& t) {
  out += '[';
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) out += ',';
    append_number(out, t[i]);
  }
  out += ']';
}

void append_object(std::string& out, const ObjectDesc& o) {
  out += "{\"color\":";
  append_escaped(out, o.color);
  out += ",\"category\":";
  append_escaped(out, o.category);
  out += ",\"size\":";
  append_escaped(out, o.size);
  out += '}';
}

[[noreturn]] void schema_error(std::size_t line, const std::string& field, const std::string& what) {
  throw ParseError("line " + std::to_string(line) + ": field '" + field + "' " + what);
}

const json& require(const json& obj, const char* field, std::size_t line) {
  const auto it = obj.find(field);
  if (it == obj.end()) schema_error(line, field, "is missing");
  return *it;
}

Tensor parse_vector(const json& j, const std::string& field, std::size_t line) {
  if (!j.is_array() || j.empty()) schema_error(line, field, "must be a nonempty array of numbers");
  std::vector<double> values;
  values.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) schema_error(line, field, "must contain only numbers");
    values.push_back(v.get<double>());
  }
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

ObjectDesc parse_object(const json& j, const std::string& field, std::size_t line) {
  if (!j.is_object()) schema_error(line, field, "must be an object");
  ObjectDesc o;
  for (const char* key : {"color", "category", "size"}) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_string()) schema_error(line, field + "." + key, "must be a string");
  }
  o.color = j["color"].get<std::string>();
  o.category = j["category"].get<std::string>();
  o.size = j["size"].get<std::string>();
  return o;
}

}  // namespace

std::string_view to_string(EventKind kind) { return kKinds[static_cast<std::size_t>(kind)]; }

EventKind parse_event_kind(std::string_view name) {
  return static_cast<EventKind>(index_of(kKinds, name, "event kind"));
}

Tensor Episode::clip_matrix() const {
  if (clips.empty()) throw ContractError("episode " + id + " has no clips");
  const std::size_t d = clips.front().size();
  std::vector<double> data;
  data.reserve(clips.size() * d);
  for (const auto& c : clips) {
    if (c.size() != d) throw ContractError("episode " + id + " has clips of unequal width");
    data.insert(data.end(), c.data().begin(), c.data().end());
  }
  return Tensor({clips.size(), d}, std::move(data));
}

Event predict_future_event(const std::vector<Event>& past) {
  const auto move = std::find_if(past.rbegin(), past.rend(), [](const Event& e) { return e.kind == EventKind::move; });
  if (move == past.rend()) throw ContractError("past events contain no move event");
  Event future;
  future.actor = move->actor;
  future.furniture = move->furniture;
  std::optional<ObjectDesc> occupant = move->patient;
  for (const auto& e : past) {
    if (e.kind == EventKind::place && e.furniture == move->furniture) occupant = e.actor;
  }
  if (occupant && move->actor.size == "large") {
    future.kind = EventKind::collide;
    future.patient = occupant;
  } else if (occupant) {
    future.kind = EventKind::place;
    future.patient = occupant;
  } else {
    future.kind = EventKind::settle;
  }
  return future;
}

std::string render_caption(const Event& e) {
  const std::string actor = object_phrase(e.actor);
  switch (e.kind) {
    case EventKind::approach: return "the robot approaches the " + actor;
    case EventKind::grasp: return "the robot grasps the " + e.actor.size + " " + actor;
    case EventKind::move: return "the robot moves the " + actor + " toward the " + e.furniture;
    case EventKind::place:
      if (e.patient) return "the " + actor + " is placed beside the " + object_phrase(*e.patient) + " on the " + e.furniture;
      return "the robot places the " + actor + " on the " + e.furniture;
    case EventKind::collide: {
      const std::string patient = object_phrase(*e.patient);
      return "the " + actor + " may contact the " + patient + " and the " + patient + " may fall";
    }
    case EventKind::fall: return "the " + actor + " falls from the " + e.furniture;
    case EventKind::settle: return "the " + actor + " is placed on the " + e.furniture + " safely";
  }
  return {};
}

Episode generate_episode(const GeneratorConfig& cfg, std::string_view split, std::size_t index) {
  Rng rng(derive_seed(cfg.seed, (split_stream(split) << 40) | index));
  const std::string target = pick(kFurniture, rng);

  ObjectDesc actor{pick(kColors, rng), pick(kCategories, rng),
                   rng.bernoulli(kLargeProbability) ? "large" : "small"};
  ObjectDesc occupant;
  do {
    occupant = ObjectDesc{pick(kColors, rng), pick(kCategories, rng), pick(kSizes, rng)};
  } while (occupant.color == actor.color && occupant.category == actor.category);
  const bool occupied = rng.bernoulli(kOccupiedProbability);
  std::string elsewhere;
  do {
    elsewhere = pick(kFurniture, rng);
  } while (elsewhere == target);

  std::vector<Event> past;
  if (cfg.k == 0) {
    Event move{EventKind::move, actor, std::nullopt, target};
    if (occupied) move.patient = occupant;
    past.push_back(move);
  } else {
    past.push_back(Event{EventKind::place, occupant, std::nullopt, occupied ? target : elsewhere});
    for (std::size_t i = 1; i + 1 < cfg.k; ++i) {
      past.push_back(Event{EventKind::approach, actor, std::nullopt, pick(kFurniture, rng)});
    }
    if (cfg.k >= 2) past.push_back(Event{EventKind::grasp, actor, std::nullopt, ""});
    past.push_back(Event{EventKind::move, actor, std::nullopt, target});
  }
  const Event future = predict_future_event(past);

  static thread_local std::pair<std::pair<std::uint64_t, std::size_t>, std::vector<double>> cache;
  if (cache.first != std::make_pair(cfg.seed, cfg.d_in) || cache.second.empty()) {
    cache = {{cfg.seed, cfg.d_in}, world_projection(cfg)};
  }
  const auto& projection = cache.second;

  Episode ep;
  char id[48];
  std::snprintf(id, sizeof id, "%.*s-%06zu", static_cast<int>(split.size()), split.data(), index);
  ep.id = id;
  for (const auto& e : past) {
    ep.clips.push_back(render_clip(e, projection, cfg.d_in, cfg.noise, rng));
    ep.past_captions.push_back(render_caption(e));
  }
  ep.future_clip = render_clip(future, projection, cfg.d_in, cfg.noise, rng);
  ep.future_caption = render_caption(future);
  ep.collide = future.kind == EventKind::collide;
  ep.events = past;
  ep.events.push_back(future);
  return ep;
}

DatasetSplits generate_dataset(const GeneratorConfig& cfg) {
  if (cfg.n_train == 0 || cfg.n_val == 0 || cfg.n_test == 0) {
    throw ConfigError("dataset split sizes must all be >= 1");
  }
  if (cfg.d_in == 0) throw ConfigError("d_in must be >= 1");
  DatasetSplits s;
  for (std::size_t i = 0; i < cfg.n_train; ++i) s.train.push_back(generate_episode(cfg, "train", i));
  for (std::size_t i = 0; i < cfg.n_val; ++i) s.val.push_back(generate_episode(cfg, "val", i));
  for (std::size_t i = 0; i < cfg.n_test; ++i) s.test.push_back(generate_episode(cfg, "test", i));
  return s;
}

std::string episode_to_json_line(const Episode& ep) {
  std::string out;
  out.reserve(64 + 20 * (ep.clips.size() + 1) * ep.future_clip.size());
  out += "{\"id\":";
  append_escaped(out, ep.id);
  out += ",\"clips\":[";
  for (std::size_t i = 0; i < ep.clips.size(); ++i) {
    if (i) out += ',';
    append_vector(out, ep.clips[i]);
  }
  out += "],\"future_clip\":";
  append_vector(out, ep.future_clip);
  out += ",\"future_caption\":";
  append_escaped(out, ep.future_caption);
  out += ",\"past_captions\":[";
  for (std::size_t i = 0; i < ep.past_captions.size(); ++i) {
    if (i) out += ',';
    append_escaped(out, ep.past_captions[i]);
  }
  out += "],\"meta\":{\"collide\":";
  out += ep.collide ? "true" : "false";
  if (!ep.events.empty()) {
    out += ",\"events\":[";
    for (std::size_t i = 0; i < ep.events.size(); ++i) {
      const Event& e = ep.events[i];
      if (i) out += ',';
      out += "{\"kind\":";
      append_escaped(out, to_string(e.kind));
      out += ",\"actor\":";
      append_object(out, e.actor);
      out += ",\"patient\":";
      if (e.patient) append_object(out, *e.patient);
      else out += "null";
      out += ",\"furniture\":";
      append_escaped(out, e.furniture);
      out += '}';
    }
    out += ']';
  }
  out += "}}";
  return out;
}

Episode episode_from_json_line(std::string_view line, std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError("line " + std::to_string(line_number) + ": malformed JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw ParseError("line " + std::to_string(line_number) + ": expected a JSON object");
  Episode ep;
  const json& id = require(j, "id", line_number);
  if (!id.is_string()) schema_error(line_number, "id", "must be a string");
  ep.id = id.get<std::string>();

  const json& clips = require(j, "clips", line_number);
  if (!clips.is_array() || clips.empty()) schema_error(line_number, "clips", "must be a nonempty array");
  for (std::size_t i = 0; i < clips.size(); ++i) {
    ep.clips.push_back(parse_vector(clips[i], "clips[" + std::to_string(i) + "]", line_number));
    if (ep.clips.back().size() != ep.clips.front().size()) {
      schema_error(line_number, "clips", "must have equal widths");
    }
  }
  ep.future_clip = parse_vector(require(j, "future_clip", line_number), "future_clip", line_number);
  if (ep.future_clip.size() != ep.clips.front().size()) {
    schema_error(line_number, "future_clip", "must match the clip width");
  }
  const json& caption = require(j, "future_caption", line_number);
  if (!caption.is_string()) schema_error(line_number, "future_caption", "must be a string");
  ep.future_caption = caption.get<std::string>();

  const json& past = require(j, "past_captions", line_number);
  if (!past.is_array()) schema_error(line_number, "past_captions", "must be an array of strings");
  for (const auto& c : past) {
    if (!c.is_string()) schema_error(line_number, "past_captions", "must be an array of strings");
    ep.past_captions.push_back(c.get<std::string>());
  }
  const json& meta = require(j, "meta", line_number);
  if (!meta.is_object()) schema_error(line_number, "meta", "must be an object");
  const json& collide = require(meta, "collide", line_number);
  if (!collide.is_boolean()) schema_error(line_number, "meta.collide", "must be a boolean");
  ep.collide = collide.get<bool>();
  if (const auto it = meta.find("events"); it != meta.end()) {
    if (!it->is_array()) schema_error(line_number, "meta.events", "must be an array");
    for (const auto& ev : *it) {
      if (!ev.is_object() || !ev.contains("kind") || !ev["kind"].is_string()) {
        schema_error(line_number, "meta.events.kind", "must be a string");
      }
      Event e;
      try {
        e.kind = parse_event_kind(ev["kind"].get<std::string>());
      } catch (const ParseError& err) {
        schema_error(line_number, "meta.events.kind", err.what());
      }
      e.actor = parse_object(require(ev, "actor", line_number), "meta.events.actor", line_number);
      const json& patient = require(ev, "patient", line_number);
      if (!patient.is_null()) e.patient = parse_object(patient, "meta.events.patient", line_number);
      const json& furniture = require(ev, "furniture", line_number);
      if (!furniture.is_string()) schema_error(line_number, "meta.events.furniture", "must be a string");
      e.furniture = furniture.get<std::string>();
      ep.events.push_back(std::move(e));
    }
  }
  return ep;
}

void save_dataset(const std::vector<Episode>& episodes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& ep : episodes) out << episode_to_json_line(ep) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<Episode> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open dataset file " + path.string());
  std::vector<Episode> episodes;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    episodes.push_back(episode_from_json_line(line, number));
  }
  return episodes;
}

std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (const char raw : text) {
    const auto ch = static_cast<unsigned char>(raw);
    if (std::isspace(ch)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else if (!std::ispunct(ch)) {
      current += static_cast<char>(std::tolower(ch));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

Vocabulary::Vocabulary() {
  tokens_ = {"<bos>", "<eos>", "<pad>", "<unk>"};
  freq_.assign(tokens_.size(), 0);
  reindex();
}

void Vocabulary::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
}

Vocabulary Vocabulary::build(const std::vector<Episode>& train) {
  std::map<std::string, std::size_t> counts;
  auto count = [&](const std::string& caption) {
    for (auto& w : normalize_words(caption)) ++counts[w];
  };
  for (const auto& ep : train) {
    count(ep.future_caption);
    for (const auto& c : ep.past_captions) count(c);
  }
  Vocabulary v;
  for (const auto& [word, n] : counts) {
    if (v.index_.contains(word)) continue;
    v.tokens_.push_back(word);
    v.freq_.push_back(n);
  }
  v.reindex();
  return v;
}

Vocabulary Vocabulary::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("vocabulary: malformed JSON (") + e.what() + ")");
  }
  if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_array()) {
    throw ParseError("vocabulary: field 'tokens' must be an array of strings");
  }
  if (!j.contains("freq") || !j["freq"].is_array() || j["freq"].size() != j["tokens"].size()) {
    throw ParseError("vocabulary: field 'freq' must be an integer array parallel to 'tokens'");
  }
  Vocabulary v;
  v.tokens_.clear();
  v.freq_.clear();
  for (const auto& t : j["tokens"]) {
    if (!t.is_string()) throw ParseError("vocabulary: field 'tokens' must contain only strings");
    v.tokens_.push_back(t.get<std::string>());
  }
  for (const auto& f : j["freq"]) {
    if (!f.is_number_unsigned() && !f.is_number_integer()) {
      throw ParseError("vocabulary: field 'freq' must contain only integers");
    }
    v.freq_.push_back(f.get<std::size_t>());
  }
  if (v.tokens_.size() < 4 || v.tokens_[kBos] != "<bos>" || v.tokens_[kEos] != "<eos>" ||
      v.tokens_[kPad] != "<pad>" || v.tokens_[kUnk] != "<unk>") {
    throw ParseError("vocabulary: ids 0-3 must be <bos>, <eos>, <pad>, <unk>");
  }
  v.reindex();
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open vocabulary file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string Vocabulary::to_json() const {
  json j;
  j["tokens"] = tokens_;
  j["freq"] = freq_;
  return j.dump();
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << to_json() << '\n';
}

std::size_t Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) throw IndexError("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[id];
}

std::size_t Vocabulary::frequency(std::size_t id) const {
  if (id >= freq_.size()) throw IndexError("token id " + std::to_string(id) + " outside vocabulary");
  return freq_[id];
}

TokenSequence tokenize(std::string_view caption, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 2) throw ContractError("max_len must be >= 2");
  auto words = normalize_words(caption);
  if (words.size() > max_len - 2) words.resize(max_len - 2);
  TokenSequence seq;
  seq.ids.reserve(max_len);
  seq.ids.push_back(kBos);
  for (const auto& w : words) seq.ids.push_back(vocab.id(w));
  seq.ids.push_back(kEos);
  seq.valid_len = seq.ids.size();
  seq.ids.resize(max_len, kPad);
  return seq;
}

std::string detokenize(std::span<const std::size_t> ids, const Vocabulary& vocab) {
  std::string out;
  for (const auto id : ids) {
    if (id == kEos) break;
    if (id == kBos || id == kPad) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

}  // namespace rfcm
