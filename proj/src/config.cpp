#include "vulnhound/config.hpp"

#include <charconv>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

namespace vulnhound::config {

namespace {

using Json = nlohmann::ordered_json;

const std::string& single(const std::string& key, const std::vector<std::string>& v) {
  if (v.size() != 1) throw UsageError("config key '" + key + "' takes exactly one value");
  return v.front();
}

std::uint64_t to_uint(const std::string& key, const std::vector<std::string>& v) {
  const std::string& s = single(key, v);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw UsageError("config key '" + key + "' expects a non-negative integer, got '" + s + "'");
  return out;
}

double to_double(const std::string& key, const std::vector<std::string>& v) {
  const std::string& s = single(key, v);
  double out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(out))
    throw UsageError("config key '" + key + "' expects a number, got '" + s + "'");
  return out;
}

bool to_bool(const std::string& key, const std::vector<std::string>& v) {
  const std::string& s = single(key, v);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw UsageError("config key '" + key + "' expects true or false, got '" + s + "'");
}

struct Entry {
  KeyInfo info;
  std::function<void(PipelineConfig&, const std::string&, const std::vector<std::string>&)> set;
  std::function<Json(const PipelineConfig&)> get;
};

#define VH_PATH(name, field, help)                                                                   \
  Entry {                                                                                            \
    {name, help, false}, [](PipelineConfig& c, const std::string& k, const std::vector<std::string>& v) { \
      c.field = single(k, v);                                                                        \
    },                                                                                               \
        [](const PipelineConfig& c) { return Json(c.field.generic_string()); }                       \
  }
#define VH_UINT(name, field, help)                                                                   \
  Entry {                                                                                            \
    {name, help, false}, [](PipelineConfig& c, const std::string& k, const std::vector<std::string>& v) { \
      c.field = static_cast<decltype(c.field)>(to_uint(k, v));                                       \
    },                                                                                               \
        [](const PipelineConfig& c) { return Json(c.field); }                                        \
  }
#define VH_DOUBLE(name, field, help)                                                                 \
  Entry {                                                                                            \
    {name, help, false}, [](PipelineConfig& c, const std::string& k, const std::vector<std::string>& v) { \
      c.field = to_double(k, v);                                                                     \
    },                                                                                               \
        [](const PipelineConfig& c) { return Json(c.field); }                                        \
  }
#define VH_BOOL(name, field, help)                                                                   \
  Entry {                                                                                            \
    {name, help, false}, [](PipelineConfig& c, const std::string& k, const std::vector<std::string>& v) { \
      c.field = to_bool(k, v);                                                                       \
    },                                                                                               \
        [](const PipelineConfig& c) { return Json(c.field); }                                        \
  }

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      VH_PATH("repos", repos, "directory of git repositories, or a file listing one path per line"),
      VH_PATH("keywords", keywords, "commit-message keyword file, one pattern per line"),
      VH_PATH("vectors", vectors, "external vectors (CVEC) over the exported pre-images; a skip-gram table for train, eval and scan"),
      VH_PATH("scan", scan, "file or directory to scan"),
      VH_PATH("scan_vectors", scan_vectors, "external vectors (CVEC) over the scanned files"),
      VH_PATH("truth", truth, "file-level ground truth CSV (path,verdict) for the scanned files"),
      Entry{{"sast", "SAST verdict file as format:path (bandit-json or generic-csv); repeatable", true},
            [](PipelineConfig& c, const std::string& k, const std::vector<std::string>& v) {
              c.sast.clear();
              for (const auto& item : v) {
                const auto colon = item.find(':');
                if (colon == std::string::npos || colon == 0 || colon + 1 == item.size())
                  throw UsageError("config key '" + k + "' expects format:path, got '" + item + "'");
                c.sast.push_back({item.substr(0, colon), item.substr(colon + 1)});
              }
            },
            [](const PipelineConfig& c) {
              Json a = Json::array();
              for (const auto& s : c.sast) a.push_back(s.format + ":" + s.path.generic_string());
              return a;
            }},
      VH_PATH("workdir", workdir, "pipeline working directory"),
      Entry{{"provider", "vector provider: skipgram or external", true},
            [](PipelineConfig& c, const std::string&, const std::vector<std::string>& v) { c.providers = v; },
            [](const PipelineConfig& c) { return Json(c.providers); }},
      VH_UINT("seed", seed, "seed for splitting, embedding and training"),
      VH_UINT("jobs", jobs, "scan threads (0: hardware count)"),
      VH_UINT("max_files_per_commit", max_files_per_commit, "skip commits touching more files than this"),
      VH_BOOL("keep_comments", keep_comments, "emit comments as tokens"),
      VH_UINT("window_len", window.window_len, "tokens per window"),
      VH_UINT("stride", window.stride, "tokens between window starts"),
      VH_UINT("min_positive_tokens", window.min_positive_tokens, "positive tokens that make a window positive"),
      VH_DOUBLE("train_ratio", ratios.train, "training share of repositories"),
      VH_DOUBLE("validation_ratio", ratios.validation, "validation share of repositories"),
      VH_DOUBLE("test_ratio", ratios.test, "test share of repositories"),
      VH_BOOL("dedup", dedup, "collapse duplicate windows, dropping label conflicts"),
      VH_DOUBLE("negative_keep", negative_keep, "probability of keeping each negative window"),
      VH_UINT("sg_dim", sg.dim, "skip-gram vector size"),
      VH_UINT("sg_window", sg.window, "skip-gram context radius"),
      VH_UINT("sg_negatives", sg.negatives, "negative samples per pair"),
      VH_UINT("sg_epochs", sg.epochs, "skip-gram passes over the corpus"),
      VH_DOUBLE("sg_learning_rate", sg.learning_rate, "initial skip-gram learning rate"),
      VH_DOUBLE("sg_min_learning_rate", sg.min_learning_rate, "final skip-gram learning rate"),
      VH_UINT("sg_min_count", sg.min_count, "minimum token count for the vocabulary"),
      VH_UINT("epochs", train.epochs, "LSTM training epochs"),
      VH_UINT("batch_size", train.batch_size, "windows per Adam step"),
      VH_UINT("hidden", train.hidden, "LSTM hidden units"),
      VH_DOUBLE("dropout", train.dropout_rate, "dropout rate on the final hidden state"),
      VH_DOUBLE("learning_rate", train.adam.learning_rate, "Adam learning rate"),
      VH_DOUBLE("beta1", train.adam.beta1, "Adam first-moment decay"),
      VH_DOUBLE("beta2", train.adam.beta2, "Adam second-moment decay"),
      VH_DOUBLE("epsilon", train.adam.epsilon, "Adam epsilon"),
      VH_DOUBLE("threshold", train.threshold, "probability at or above which a window is flagged"),
      VH_UINT("patience", train.patience, "early-stopping patience in epochs (0: off)"),
  };
  return entries;
}

#undef VH_PATH
#undef VH_UINT
#undef VH_DOUBLE
#undef VH_BOOL

const Entry* find_entry(std::string_view name) {
  for (const auto& e : registry())
    if (e.info.name == name) return &e;
  return nullptr;
}

}  // namespace

providers::Kind PipelineConfig::provider() const {
  if (providers.size() != 1)
    throw UsageError("exactly one provider must be selected, got " + std::to_string(providers.size()));
  return providers::parse_kind(providers.front());
}

void PipelineConfig::validate() const {
  (void)provider();
  window.validate();
  ratios.validate();
  sg.validate();
  train.validate();
  if (!(negative_keep > 0 && negative_keep <= 1)) throw UsageError("negative_keep must lie in (0, 1]");
  for (const auto& s : sast)
    if (s.format != "bandit-json" && s.format != "generic-csv")
      throw UsageError("unknown SAST format '" + s.format + "'");
}

embed::SgConfig PipelineConfig::sg_config() const {
  auto c = sg;
  c.seed = seed;
  return c;
}

rnn::TrainConfig PipelineConfig::train_config() const {
  auto c = train;
  c.seed = seed;
  return c;
}

std::string PipelineConfig::snapshot_json() const {
  Json j = Json::object();
  for (const auto& e : registry()) j[e.info.name] = e.get(*this);
  return j.dump();
}

std::string PipelineConfig::snapshot_json(const std::vector<std::string>& names) const {
  Json j = Json::object();
  for (const auto& name : names) {
    const Entry* e = find_entry(name);
    if (!e) throw std::logic_error("unknown config key " + name);
    j[name] = e->get(*this);
  }
  return j.dump();
}

const std::vector<KeyInfo>& keys() {
  static const std::vector<KeyInfo> out = [] {
    std::vector<KeyInfo> k;
    for (const auto& e : registry()) k.push_back(e.info);
    return k;
  }();
  return out;
}

bool is_key(std::string_view name) { return find_entry(name) != nullptr; }

Assignments parse_toml(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw UsageError(std::string("malformed config: ") + e.what());
  }
  Assignments out;
  for (const auto& item : items) {
    if (!item.parents.empty()) throw UsageError("config must be flat; found table entry '" + item.fullname() + "'");
    if (!is_key(item.name)) throw UsageError("unknown config key '" + item.name + "'");
    out[item.name] = item.inputs;
  }
  return out;
}

Assignments read_toml(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_toml(ss.str());
}

void apply(PipelineConfig& config, const std::string& key, const std::vector<std::string>& values) {
  const Entry* e = find_entry(key);
  if (!e) throw UsageError("unknown config key '" + key + "'");
  e->set(config, key, values);
}

PipelineConfig resolve(const Assignments& file, const Assignments& flags, std::optional<std::string> env_seed) {
  PipelineConfig c;
  for (const auto& [k, v] : file) apply(c, k, v);
  if (env_seed && !env_seed->empty()) apply(c, "seed", {*env_seed});
  for (const auto& [k, v] : flags) apply(c, k, v);
  return c;
}

}  // namespace vulnhound::config
