#include "vulnhound/evalkit.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "vulnhound/io.hpp"

namespace vulnhound::evalkit {

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_row(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw DataError("unterminated quote in CSV row: " + std::string(line));
  return fields;
}

std::string full_precision(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

std::optional<double> parse_optional_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw DataError("bad number in comparison CSV: " + s);
  return v;
}

}  // namespace

Metrics compute_metrics(const Confusion& c) {
  if (c.total() == 0) throw DataError("confusion matrix is empty");
  Metrics m;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  // 2PR/(P+R) reduces to 2tp/(2tp+fp+fn). With P and R defined, tp == 0
  // means both are zero and F1 stays undefined.
  if (m.precision && m.recall && c.tp > 0) m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  return m;
}

std::optional<double> f1_score(double precision, double recall) {
  if (precision + recall == 0) return std::nullopt;
  return 2 * precision * recall / (precision + recall);
}

Confusion score_windows(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> labels) {
  if (predictions.size() != labels.size())
    throw DataError("prediction count " + std::to_string(predictions.size()) + " differs from label count " +
                    std::to_string(labels.size()));
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] != 0, l = labels[i] != 0;
    if (p && l) ++c.tp;
    else if (p) ++c.fp;
    else if (l) ++c.fn;
    else ++c.tn;
  }
  return c;
}

FileVerdicts lift_to_files(std::span<const std::pair<std::string, bool>> window_verdicts, std::size_t min_positive) {
  if (min_positive == 0) throw UsageError("min_positive must be at least 1");
  std::map<std::string, std::size_t> positives;
  for (const auto& [path, verdict] : window_verdicts) positives[path] += verdict ? 1 : 0;
  FileVerdicts out;
  for (const auto& [path, n] : positives) out[path] = n >= min_positive;
  return out;
}

Confusion score_files(const FileVerdicts& predicted, const FileVerdicts& truth) {
  std::vector<std::string> only_predicted, only_truth;
  for (const auto& [path, v] : predicted)
    if (!truth.count(path)) only_predicted.push_back(path);
  for (const auto& [path, v] : truth)
    if (!predicted.count(path)) only_truth.push_back(path);
  if (!only_predicted.empty() || !only_truth.empty()) {
    std::string msg = "file sets differ;";
    for (const auto& p : only_predicted) msg += " predicted-only: " + p + ";";
    for (const auto& p : only_truth) msg += " truth-only: " + p + ";";
    throw DataError(msg);
  }
  Confusion c;
  for (const auto& [path, p] : predicted) {
    const bool l = truth.at(path);
    if (p && l) ++c.tp;
    else if (p) ++c.fp;
    else if (l) ++c.fn;
    else ++c.tn;
  }
  return c;
}

std::string normalize_path(std::string_view path) {
  std::string s = std::filesystem::path(path).lexically_normal().generic_string();
  while (s.rfind("./", 0) == 0) s.erase(0, 2);
  return s;
}

SastVerdictSet parse_bandit_json(std::string_view text, const SastOptions& options) {
  SastVerdictSet set;
  set.tool = "bandit";
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.contains("metrics"))
      for (const auto& [key, value] : j.at("metrics").items())
        if (key != "_totals") set.verdicts[normalize_path(key)] = false;
    for (const auto& r : j.at("results")) {
      const std::string path = normalize_path(r.at("filename").get<std::string>());
      const std::string id = r.at("test_id").get<std::string>();
      auto& verdict = set.verdicts[path];
      if (options.sql_test_ids.count(id)) {
        verdict = true;
        set.findings.push_back(Finding{path, r.value("line_number", std::uint64_t{0}), id});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed bandit report: ") + e.what());
  }
  return set;
}

SastVerdictSet parse_verdict_csv(std::string_view text, std::string tool) {
  SastVerdictSet set;
  set.tool = std::move(tool);
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_row(line);
    if (fields.size() != 2) throw DataError("CSV line " + std::to_string(line_no) + ": expected path,verdict");
    const std::string path(trim(fields[0]));
    const std::string_view verdict = trim(fields[1]);
    if (line_no == 1 && path == "path" && verdict == "verdict") continue;
    if (verdict != "0" && verdict != "1")
      throw DataError("CSV line " + std::to_string(line_no) + ": verdict must be 0 or 1");
    const std::string key = normalize_path(path);
    if (!set.verdicts.emplace(key, verdict == "1").second)
      throw DataError("CSV line " + std::to_string(line_no) + ": duplicate path " + key);
  }
  return set;
}

SastVerdictSet ingest_sast(const std::filesystem::path& path, std::string_view format, const SastOptions& options) {
  if (format == "bandit-json") return parse_bandit_json(io::read_file(path), options);
  if (format == "generic-csv") return parse_verdict_csv(io::read_file(path), path.stem().string());
  throw UsageError("unknown SAST format '" + std::string(format) + "' (expected bandit-json or generic-csv)");
}

std::string format_percent(const std::optional<double>& value) {
  if (!value) return "-";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f%%", *value * 100.0);
  return buf;
}

ComparisonTable comparison_table(std::span<const std::pair<std::string, Metrics>> rows) {
  if (rows.empty()) throw UsageError("comparison table needs at least one row");
  std::vector<std::array<std::string, 5>> cells;
  cells.push_back({"", "Acc", "Precision", "Recall", "F1"});
  ComparisonTable out;
  out.csv = "name,accuracy,precision,recall,f1\n";
  for (const auto& [name, m] : rows) {
    cells.push_back({name, format_percent(m.accuracy), format_percent(m.precision), format_percent(m.recall),
                     format_percent(m.f1)});
    out.csv += csv_field(name) + "," + full_precision(m.accuracy) + "," + full_precision(m.precision) + "," +
               full_precision(m.recall) + "," + full_precision(m.f1) + "\n";
  }

  std::array<std::size_t, 5> width{};
  for (const auto& row : cells)
    for (std::size_t k = 0; k < 5; ++k) width[k] = std::max(width[k], row[k].size());
  for (const auto& row : cells) {
    std::string line = row[0] + std::string(width[0] - row[0].size(), ' ');
    for (std::size_t k = 1; k < 5; ++k) line += "  " + std::string(width[k] - row[k].size(), ' ') + row[k];
    out.text += line + "\n";
  }
  return out;
}

ComparisonTable comparison_table(std::span<const std::pair<std::string, Confusion>> rows) {
  std::vector<std::pair<std::string, Metrics>> metrics;
  for (const auto& [name, c] : rows) metrics.emplace_back(name, compute_metrics(c));
  return comparison_table(std::span<const std::pair<std::string, Metrics>>(metrics));
}

std::vector<std::pair<std::string, Metrics>> parse_comparison_csv(std::string_view csv) {
  std::vector<std::pair<std::string, Metrics>> rows;
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != "name,accuracy,precision,recall,f1")
    throw DataError("comparison CSV lacks its header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_row(line);
    if (f.size() != 5) throw DataError("comparison CSV row has " + std::to_string(f.size()) + " fields");
    rows.emplace_back(f[0], Metrics{parse_optional_double(f[1]), parse_optional_double(f[2]),
                                    parse_optional_double(f[3]), parse_optional_double(f[4])});
  }
  return rows;
}

}  // namespace vulnhound::evalkit
