#include "vulnhound/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vulnhound/io.hpp"
#include "vulnhound/random.hpp"

namespace vulnhound::dataset {

void WindowSpec::validate() const {
  if (window_len == 0 || stride == 0) throw UsageError("window_len and stride must be positive");
  if (stride > window_len) throw UsageError("stride must not exceed window_len");
  if (min_positive_tokens == 0) throw UsageError("min_positive_tokens must be positive");
}

std::vector<std::uint8_t> label_tokens(const miner::MinedChange& change, const pylex::TokenStream& stream,
                                       const std::vector<Span>& lines) {
  std::vector<std::uint8_t> labels(stream.tokens.size(), 0);
  std::vector<Span> changed;
  for (std::size_t line : change.changed_lines) {
    if (line == 0 || line > lines.size())
      throw LabelingError("changed line " + std::to_string(line) + " outside " + change.file_path + " (" +
                          std::to_string(lines.size()) + " lines) in commit " + change.commit_id);
    changed.push_back(lines[line - 1]);
  }
  for (std::size_t i = 0; i < stream.tokens.size(); ++i) {
    const Span& span = stream.tokens[i].span;
    labels[i] = std::any_of(changed.begin(), changed.end(), [&](const Span& l) { return spans_intersect(span, l); });
  }
  return labels;
}

std::vector<LabeledWindow> make_windows(const pylex::TokenStream& stream, std::span<const std::uint8_t> token_labels,
                                        const WindowSpec& spec, const Origin& origin) {
  spec.validate();
  const std::size_t n = stream.tokens.size();
  if (token_labels.size() != n)
    throw DataError("label count " + std::to_string(token_labels.size()) + " does not match token count " +
                    std::to_string(n));
  std::vector<LabeledWindow> windows;
  for (std::size_t start = 0; start < n; start += spec.stride) {
    const std::size_t len = std::min(spec.window_len, n - start);
    LabeledWindow w;
    w.origin = origin;
    w.origin.start = start;
    w.pad_len = spec.window_len - len;
    std::size_t positives = 0;
    for (std::size_t i = start; i < start + len; ++i) {
      w.tokens.push_back(pylex::token_key(stream.tokens[i]));
      w.token_spans.push_back(stream.tokens[i].span);
      positives += token_labels[i] != 0;
    }
    w.label = positives >= spec.min_positive_tokens ? 1 : 0;
    windows.push_back(std::move(w));
  }
  return windows;
}

std::vector<LabeledWindow> windows_for_change(const miner::MinedChange& change, const WindowSpec& spec) {
  return windows_for_change(change, spec, pylex::tokenize(change.pre_image));
}

std::vector<LabeledWindow> windows_for_change(const miner::MinedChange& change, const WindowSpec& spec,
                                              const pylex::TokenStream& stream) {
  const auto labels = label_tokens(change, stream, pylex::line_spans(change.pre_image));
  return make_windows(stream, labels, spec, Origin{change.repo_id, change.commit_id, change.file_path, 0});
}

void SplitRatios::validate() const {
  if (!(train > 0 && validation > 0 && test > 0)) throw UsageError("split ratios must all be positive");
  if (std::abs(train + validation + test - 1.0) > 1e-9) throw UsageError("split ratios must sum to 1");
}

std::array<std::size_t, 3> partition_sizes(std::size_t n, const SplitRatios& ratios, bool each_nonempty) {
  const std::array<double, 3> r{ratios.train, ratios.validation, ratios.test};
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double exact = r[k] * static_cast<double>(n);
    sizes[k] = static_cast<std::size_t>(std::floor(exact));
    remainder[k] = exact - std::floor(exact);
    assigned += sizes[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++sizes[order[i % 3]];
  if (each_nonempty && n >= 3) {
    for (std::size_t k = 0; k < 3; ++k) {
      if (sizes[k] > 0) continue;
      const auto donor = static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      --sizes[donor];
      ++sizes[k];
    }
  }
  return sizes;
}

DatasetSplit split(std::vector<LabeledWindow> windows, const SplitRatios& ratios, std::uint64_t seed) {
  ratios.validate();
  DatasetSplit out;
  out.ratios = ratios;
  out.seed = seed;
  Rng rng(seed);

  std::set<std::string> repo_set;
  for (const auto& w : windows) repo_set.insert(w.origin.repo);

  if (repo_set.size() < 3) {
    out.window_level = true;
    out.warnings.push_back("only " + std::to_string(repo_set.size()) +
                           " repositories; falling back to a window-level split");
    std::vector<std::size_t> idx(windows.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    const auto sizes = partition_sizes(windows.size(), ratios, false);
    std::vector<std::uint8_t> part(windows.size());
    for (std::size_t i = 0; i < idx.size(); ++i) part[idx[i]] = i < sizes[0] ? 0 : (i < sizes[0] + sizes[1] ? 1 : 2);
    for (std::size_t i = 0; i < windows.size(); ++i) {
      auto& dst = part[i] == 0 ? out.train : (part[i] == 1 ? out.validation : out.test);
      dst.push_back(std::move(windows[i]));
    }
    return out;
  }

  std::vector<std::string> repos(repo_set.begin(), repo_set.end());
  rng.shuffle(repos);
  const auto sizes = partition_sizes(repos.size(), ratios, true);
  std::map<std::string, int> assignment;
  for (std::size_t i = 0; i < repos.size(); ++i) assignment[repos[i]] = i < sizes[0] ? 0 : (i < sizes[0] + sizes[1] ? 1 : 2);
  for (auto& w : windows) {
    const int p = assignment.at(w.origin.repo);
    auto& dst = p == 0 ? out.train : (p == 1 ? out.validation : out.test);
    dst.push_back(std::move(w));
  }
  return out;
}

DedupResult dedup(std::vector<LabeledWindow> windows) {
  struct Seen {
    std::size_t first;
    bool conflict = false;
  };
  std::map<std::vector<std::string>, Seen> seen;
  std::vector<bool> keep(windows.size(), false);
  DedupResult result;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    auto [it, inserted] = seen.try_emplace(windows[i].tokens, Seen{i});
    if (inserted) {
      keep[i] = true;
      continue;
    }
    if (windows[it->second.first].label != windows[i].label) it->second.conflict = true;
  }
  std::map<std::vector<std::string>, std::size_t> copies;
  for (const auto& w : windows) ++copies[w.tokens];
  for (const auto& [tokens, s] : seen) {
    const std::size_t n = copies[tokens];
    if (s.conflict) {
      keep[s.first] = false;
      ++result.conflicts;
      result.conflicting_dropped += n;
    } else {
      result.duplicates_removed += n - 1;
    }
  }
  for (std::size_t i = 0; i < windows.size(); ++i)
    if (keep[i]) result.windows.push_back(std::move(windows[i]));
  return result;
}

std::vector<LabeledWindow> downsample_negatives(std::vector<LabeledWindow> windows, double keep, std::uint64_t seed) {
  if (!(keep > 0.0 && keep <= 1.0)) throw UsageError("negative keep ratio must be in (0, 1]");
  Rng rng(seed);
  std::vector<LabeledWindow> out;
  for (auto& w : windows) {
    const bool draw = rng.bernoulli(keep);
    if (w.label == 1 || draw) out.push_back(std::move(w));
  }
  return out;
}

double positive_ratio(std::span<const LabeledWindow> windows) {
  if (windows.empty()) return 0.0;
  const auto pos = std::count_if(windows.begin(), windows.end(), [](const auto& w) { return w.label == 1; });
  return static_cast<double>(pos) / static_cast<double>(windows.size());
}

std::string to_json_line(const LabeledWindow& w) {
  nlohmann::ordered_json j;
  j["repo"] = w.origin.repo;
  j["commit"] = w.origin.commit;
  j["path"] = w.origin.path;
  j["start"] = w.origin.start;
  j["tokens"] = w.tokens;
  auto spans = nlohmann::ordered_json::array();
  for (const auto& s : w.token_spans) spans.push_back({s.start, s.end});
  j["spans"] = std::move(spans);
  j["label"] = w.label;
  j["pad"] = w.pad_len;
  return j.dump();
}

LabeledWindow from_json_line(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    LabeledWindow w;
    w.origin.repo = j.at("repo").get<std::string>();
    w.origin.commit = j.at("commit").get<std::string>();
    w.origin.path = j.at("path").get<std::string>();
    w.origin.start = j.at("start").get<std::size_t>();
    w.tokens = j.at("tokens").get<std::vector<std::string>>();
    for (const auto& s : j.at("spans")) w.token_spans.push_back({s.at(0).get<std::uint64_t>(), s.at(1).get<std::uint64_t>()});
    w.label = j.at("label").get<std::uint8_t>();
    w.pad_len = j.at("pad").get<std::size_t>();
    if (w.label > 1) throw DataError("window label must be 0 or 1");
    if (w.tokens.size() != w.token_spans.size()) throw DataError("window tokens and spans differ in length");
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed window record: ") + e.what());
  }
}

void write_windows(const std::filesystem::path& path, std::span<const LabeledWindow> windows) {
  std::string out;
  for (const auto& w : windows) out += to_json_line(w) + "\n";
  io::write_file(path, out);
}

std::vector<LabeledWindow> read_windows(const std::filesystem::path& path) {
  std::vector<LabeledWindow> windows;
  std::istringstream in(io::read_file(path));
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.empty()) continue;
    try {
      windows.push_back(from_json_line(line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return windows;
}

}  // namespace vulnhound::dataset
