#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vulnhound/error.hpp"
#include "vulnhound/miner.hpp"
#include "vulnhound/pylex.hpp"

namespace vulnhound::dataset {

struct WindowSpec {
  std::size_t window_len = 128;
  std::size_t stride = 16;
  // A window is positive once it holds this many positive tokens.
  std::size_t min_positive_tokens = 1;

  void validate() const;
  bool operator==(const WindowSpec&) const = default;
};

struct Origin {
  std::string repo;
  std::string commit;
  std::string path;
  std::size_t start = 0;  // first token index within the file

  auto operator<=>(const Origin&) const = default;
  bool operator==(const Origin&) const = default;
};

struct LabeledWindow {
  std::vector<std::string> tokens;
  std::vector<Span> token_spans;
  std::uint8_t label = 0;
  Origin origin;
  std::size_t pad_len = 0;

  bool operator==(const LabeledWindow&) const = default;
};

class LabelingError : public DataError {
 public:
  using DataError::DataError;
};

// 1 for every token whose span meets a changed line, else 0. `stream` and
// `lines` must come from `change.pre_image`.
std::vector<std::uint8_t> label_tokens(const miner::MinedChange& change, const pylex::TokenStream& stream,
                                       const std::vector<Span>& lines);

// Windows start at 0, stride, 2*stride, ... while start < token count; the
// last ones are padded up to window_len. `origin.start` is filled per window.
std::vector<LabeledWindow> make_windows(const pylex::TokenStream& stream, std::span<const std::uint8_t> token_labels,
                                        const WindowSpec& spec, const Origin& origin);

// Tokenizes, labels and windows one mined file.
std::vector<LabeledWindow> windows_for_change(const miner::MinedChange& change, const WindowSpec& spec);

// Same, over a caller-supplied tokenization of `change.pre_image` (for
// example the subtokens of an external vector sequence).
std::vector<LabeledWindow> windows_for_change(const miner::MinedChange& change, const WindowSpec& spec,
                                              const pylex::TokenStream& stream);

struct SplitRatios {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;

  void validate() const;
};

struct DatasetSplit {
  std::vector<LabeledWindow> train;
  std::vector<LabeledWindow> validation;
  std::vector<LabeledWindow> test;
  SplitRatios ratios;
  std::uint64_t seed = 0;
  bool window_level = false;  // set when too few repositories forced the fallback
  std::vector<std::string> warnings;
};

// Largest-remainder allocation of n items to the three partitions.
std::array<std::size_t, 3> partition_sizes(std::size_t n, const SplitRatios& ratios, bool each_nonempty);

// Whole repositories go to one partition, chosen by a seeded shuffle of the
// repository ids. Fewer than three repositories falls back to a window-level
// split with the same seed.
DatasetSplit split(std::vector<LabeledWindow> windows, const SplitRatios& ratios, std::uint64_t seed);

struct DedupResult {
  std::vector<LabeledWindow> windows;
  std::size_t duplicates_removed = 0;  // redundant copies with agreeing labels
  std::size_t conflicts = 0;           // token sequences seen with both labels
  std::size_t conflicting_dropped = 0;
};

// Identical token sequences collapse to the first occurrence; sequences that
// appear with both labels are dropped entirely.
DedupResult dedup(std::vector<LabeledWindow> windows);

// Keeps each negative with probability `keep`; positives are untouched.
std::vector<LabeledWindow> downsample_negatives(std::vector<LabeledWindow> windows, double keep, std::uint64_t seed);

double positive_ratio(std::span<const LabeledWindow> windows);

std::string to_json_line(const LabeledWindow& w);
LabeledWindow from_json_line(std::string_view line);
void write_windows(const std::filesystem::path& path, std::span<const LabeledWindow> windows);
std::vector<LabeledWindow> read_windows(const std::filesystem::path& path);

}  // namespace vulnhound::dataset
