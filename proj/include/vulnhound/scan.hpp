#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vulnhound/dataset.hpp"
#include "vulnhound/model_io.hpp"
#include "vulnhound/providers.hpp"

namespace vulnhound::scan {

namespace fs = std::filesystem;

struct FlaggedWindow {
  Span span;  // [start of first token, end of last token)
  std::size_t first_line = 0;  // 1-based, inclusive
  std::size_t last_line = 0;
  double probability = 0;
  bool operator==(const FlaggedWindow&) const = default;
};

struct FileReport {
  std::string path;
  std::string error;  // non-empty: the file could not be scanned
  bool verdict = false;
  std::optional<double> max_probability;  // none when the file has no windows
  std::size_t window_count = 0;
  std::vector<FlaggedWindow> flagged;  // sorted by span start

  bool ok() const { return error.empty(); }
  bool operator==(const FileReport&) const = default;
};

struct ScanReport {
  std::string model_id;  // sha256 of the model file
  std::string provider;
  double threshold = 0.5;
  dataset::WindowSpec window;
  std::string config_json = "{}";  // snapshot stored in the model
  std::vector<FileReport> files;  // sorted by path
};

// `.py` files under each path (a file is taken as given), normalized, sorted
// and deduplicated. A missing path is a usage error.
std::vector<std::string> collect_python_files(const std::vector<fs::path>& paths);

// Hard error when the model cannot consume the source's vectors.
void check_compatibility(const model_io::Model& model, const providers::VectorSource& source,
                         const std::string& table_sha256 = {});

// Files are scanned in parallel (jobs 0: hardware count); results are ordered
// by path. Read, decode and vector failures stay inside the report.
ScanReport scan_files(const std::vector<std::string>& files, const model_io::Model& model, const std::string& model_id,
                      const providers::VectorSource& source, std::size_t jobs = 0);

FileReport scan_file(const std::string& path, const model_io::Model& model, const providers::VectorSource& source);

std::string to_json(const ScanReport& report);
ScanReport from_json(std::string_view text);
std::string to_text(const ScanReport& report);

// File-level verdicts of the scanned files, for scoring.
std::vector<std::pair<std::string, bool>> verdicts(const ScanReport& report);

}  // namespace vulnhound::scan
