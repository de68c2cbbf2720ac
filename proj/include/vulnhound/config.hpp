#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vulnhound/dataset.hpp"
#include "vulnhound/embed.hpp"
#include "vulnhound/providers.hpp"
#include "vulnhound/rnn.hpp"

namespace vulnhound::config {

namespace fs = std::filesystem;

inline constexpr const char* kSeedEnv = "VULNHOUND_SEED";

struct SastInput {
  std::string format;  // "bandit-json" | "generic-csv"
  fs::path path;
  bool operator==(const SastInput&) const = default;
};

struct PipelineConfig {
  // inputs
  fs::path repos;
  fs::path keywords;  // empty: built-in keyword list
  fs::path vectors;   // external route: vectors over the exported pre-images
  fs::path scan;      // files or directory to scan
  fs::path scan_vectors;
  fs::path truth;  // file-level ground truth CSV for the scanned files
  std::vector<SastInput> sast;
  fs::path workdir = "vulnhound-work";

  std::vector<std::string> providers{"skipgram"};
  std::uint64_t seed = 1;
  std::size_t jobs = 0;  // scan threads; 0 picks the hardware count

  std::size_t max_files_per_commit = 50;
  bool keep_comments = false;
  dataset::WindowSpec window;
  dataset::SplitRatios ratios;
  bool dedup = true;
  double negative_keep = 1.0;  // 1 keeps every negative window

  embed::SgConfig sg;
  rnn::TrainConfig train;

  // Exactly one provider must be selected.
  providers::Kind provider() const;
  void validate() const;

  // Module configs with the shared seed filled in.
  embed::SgConfig sg_config() const;
  rnn::TrainConfig train_config() const;

  // Every key and its value, in registry order.
  std::string snapshot_json() const;
  // Only the named keys; used to fingerprint pipeline stages.
  std::string snapshot_json(const std::vector<std::string>& keys) const;
};

// Raw assignments: key -> values (arrays give several values).
using Assignments = std::map<std::string, std::vector<std::string>>;

struct KeyInfo {
  std::string name;
  std::string help;
  bool list = false;  // accepts several values
};

const std::vector<KeyInfo>& keys();
bool is_key(std::string_view name);

// Flat TOML: `key = value` lines, arrays allowed, no tables.
Assignments parse_toml(std::string_view text);
Assignments read_toml(const fs::path& path);

// Defaults, then the config file, then the seed environment variable, then
// explicit flags.
PipelineConfig resolve(const Assignments& file, const Assignments& flags, std::optional<std::string> env_seed);

// Applies one assignment; throws UsageError for unknown keys or bad values.
void apply(PipelineConfig& config, const std::string& key, const std::vector<std::string>& values);

}  // namespace vulnhound::config
