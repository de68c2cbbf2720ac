#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vulnhound/error.hpp"

namespace vulnhound::evalkit {

struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  Confusion& operator+=(const Confusion& o) {
    tp += o.tp, fp += o.fp, fn += o.fn, tn += o.tn;
    return *this;
  }
  bool operator==(const Confusion&) const = default;
};

// Each score is empty when its denominator is zero.
struct Metrics {
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;

  bool operator==(const Metrics&) const = default;
};

// Every score is a single division of exact integer counts, so it is the
// correctly rounded binary64 value of the true ratio. Throws on an empty
// confusion matrix.
Metrics compute_metrics(const Confusion& c);

// Harmonic mean of two rates; empty when both are zero.
std::optional<double> f1_score(double precision, double recall);

Confusion score_windows(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> labels);

using FileVerdicts = std::map<std::string, bool>;

// A file is positive once `min_positive` of its windows are.
FileVerdicts lift_to_files(std::span<const std::pair<std::string, bool>> window_verdicts, std::size_t min_positive = 1);

// Both sides must cover the same files; a mismatch lists the difference.
Confusion score_files(const FileVerdicts& predicted, const FileVerdicts& truth);

struct Finding {
  std::string path;
  std::uint64_t line = 0;
  std::string rule;
};

struct SastVerdictSet {
  std::string tool;
  FileVerdicts verdicts;
  std::vector<Finding> findings;
};

struct SastOptions {
  std::set<std::string> sql_test_ids{"B608"};
};

// Formats: "bandit-json" (files scanned are the report's metrics keys) and
// "generic-csv" (`path,verdict` with verdict 1 or 0, optional header row).
SastVerdictSet ingest_sast(const std::filesystem::path& path, std::string_view format, const SastOptions& options = {});
SastVerdictSet parse_bandit_json(std::string_view text, const SastOptions& options = {});
SastVerdictSet parse_verdict_csv(std::string_view text, std::string tool);

// "./a/b.py" and "a//b.py" both become "a/b.py".
std::string normalize_path(std::string_view path);

struct ComparisonTable {
  std::string text;  // percentages with one decimal, "-" when undefined
  std::string csv;   // full-precision values, empty field when undefined
};

ComparisonTable comparison_table(std::span<const std::pair<std::string, Confusion>> rows);
// Rows given as scores directly, e.g. figures quoted from another report.
ComparisonTable comparison_table(std::span<const std::pair<std::string, Metrics>> rows);

// Reads back the CSV half of a comparison table.
std::vector<std::pair<std::string, Metrics>> parse_comparison_csv(std::string_view csv);

std::string format_percent(const std::optional<double>& value);

}  // namespace vulnhound::evalkit
