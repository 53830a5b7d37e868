#pragma once

// Synthetic future-captioning corpus in the style of an object-placement
// benchmark.  A robot places an object on a piece of furniture; whether the
// next event is a collision depends on the actor's size (seen when it is
// grasped) and on whether an earlier clip put another object on the same
// furniture.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rfcm/tensor.hpp"

namespace rfcm {

inline constexpr std::size_t kBos = 0;
inline constexpr std::size_t kEos = 1;
inline constexpr std::size_t kPad = 2;
inline constexpr std::size_t kUnk = 3;

enum class EventKind { approach, grasp, move, place, collide, fall, settle };

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view name);

struct ObjectDesc {
  std::string color;
  std::string category;
  std::string size;  // "small" or "large"

  bool operator==(const ObjectDesc&) const = default;
};

struct Event {
  EventKind kind = EventKind::approach;
  ObjectDesc actor;
  std::optional<ObjectDesc> patient;
  std::string furniture;

  bool operator==(const Event&) const = default;
};

struct Episode {
  std::string id;
  std::vector<Tensor> clips;  // k+1 clips of width d_in, oldest first
  Tensor future_clip;
  std::string future_caption;
  std::vector<std::string> past_captions;
  bool collide = false;
  /// Past events followed by the future event.  Empty for files that carry
  /// only features (e.g. externally extracted data).
  std::vector<Event> events;

  /// [(k+1)×d_in] matrix of the clip features.
  Tensor clip_matrix() const;
  bool operator==(const Episode&) const = default;
};

struct GeneratorConfig {
  std::uint64_t seed = 0;
  std::size_t n_train = 800;
  std::size_t n_val = 100;
  std::size_t n_test = 100;
  std::size_t k = 2;
  std::size_t d_in = 32;
  double noise = 0.05;
};

struct DatasetSplits {
  std::vector<Episode> train;
  std::vector<Episode> val;
  std::vector<Episode> test;
};

DatasetSplits generate_dataset(const GeneratorConfig& cfg);

/// One episode of split `split` ("train", "val", "test") at position index;
/// a pure function of (cfg, split, index).
Episode generate_episode(const GeneratorConfig& cfg, std::string_view split, std::size_t index);

/// Future event implied by the past events under the collision rule.
Event predict_future_event(const std::vector<Event>& past);

std::string render_caption(const Event& event);

// JSONL persistence: one episode per line; features written with 17
// significant digits so they reload bit-exact.
std::string episode_to_json_line(const Episode& episode);
Episode episode_from_json_line(std::string_view line, std::size_t line_number = 1);
void save_dataset(const std::vector<Episode>& episodes, const std::filesystem::path& path);
std::vector<Episode> load_dataset(const std::filesystem::path& path);

struct TokenSequence {
  std::vector<std::size_t> ids;  // [BOS, w1.., EOS, PAD..], length I
  std::size_t valid_len = 0;     // tokens up to and including EOS

  bool operator==(const TokenSequence&) const = default;
};

/// Lowercases, strips punctuation and splits on whitespace.
std::vector<std::string> normalize_words(std::string_view text);

class Vocabulary {
 public:
  Vocabulary();

  /// Tokens of the training split's captions (future and past); ids 0-3 are
  /// reserved, words follow in lexicographic order.
  static Vocabulary build(const std::vector<Episode>& train);
  static Vocabulary from_json(std::string_view json);
  static Vocabulary load(const std::filesystem::path& path);

  std::string to_json() const;
  void save(const std::filesystem::path& path) const;

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t id(std::string_view token) const;  // kUnk when absent
  const std::string& token(std::size_t id) const;
  std::size_t frequency(std::size_t id) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::vector<std::size_t>& frequencies() const noexcept { return freq_; }

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && freq_ == other.freq_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::size_t> freq_;
  std::map<std::string, std::size_t, std::less<>> index_;

  void reindex();
};

/// Captions longer than max_len - 2 words are truncated before EOS.
TokenSequence tokenize(std::string_view caption, const Vocabulary& vocab, std::size_t max_len);
/// Words between BOS and the first EOS; PAD and BOS are skipped.
std::string detokenize(std::span<const std::size_t> ids, const Vocabulary& vocab);

}  // namespace rfcm
