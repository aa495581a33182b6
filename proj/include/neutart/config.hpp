#pragma once

#include <map>
#include <string>

#include "neutart/dsp.hpp"
#include "neutart/losses.hpp"
#include "neutart/model.hpp"

namespace neutart::cfg {

// Flat dotted-key configuration text: one "key = value" per line, '#' starts
// a comment, blank lines ignored. Values are kept verbatim, so
// parse -> serialize -> parse is the identity on the key/value map.
class ConfigMap {
public:
  static ConfigMap parse_file(const std::string& path);
  static ConfigMap parse_text(const std::string& text, const std::string& origin);

  // Sorted keys, "key = value" lines.
  std::string serialize() const;

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  // Missing keys fall back; malformed values throw ConfigError naming the key.
  std::string get_string(const std::string& key, const std::string& fallback) const;
  long get_long(const std::string& key, long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value);
  void set_long(const std::string& key, long v);
  void set_double(const std::string& key, double v);
  void set_bool(const std::string& key, bool v);

private:
  std::map<std::string, std::string> entries_;
};

struct TrainingConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  long batch_size = 8;
  long iterations = 50000;
  std::uint64_t seed = 1234;
  long checkpoint_every = 1000;
  long log_every = 50;
};

struct PathsConfig {
  std::string lexicon;
  std::string flame_asset;
  std::string corpus_manifest;
  std::string output_dir;
  std::string visemes; // empty selects the built-in table
};

struct RunConfig {
  model::ModelConfig model;
  dsp::AudioConfig audio; // n_mels is tied to model.mel_channels, not a key
  TrainingConfig training;
  PathsConfig paths;
  loss::LossFlags losses;
  std::string prepare_tier = "phones";
  long griffin_lim_iterations = 60;

  // Unknown keys are a ConfigError; so are invalid field combinations.
  static RunConfig from_map(const ConfigMap& map);
  static RunConfig load(const std::string& path);
  ConfigMap to_map() const;
  void validate() const;
};

// Relative paths resolve against $NEUTART_DATA_DIR when it is set; absolute
// paths and empty strings pass through.
std::string resolve_path(const std::string& path);

// path interpreted relative to the directory holding `anchor_file`.
std::string sibling_path(const std::string& anchor_file, const std::string& path);

} // namespace neutart::cfg
