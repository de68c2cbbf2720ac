#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vulnhound/error.hpp"

namespace vulnhound::miner {

class NotARepositoryError : public DataError {
 public:
  explicit NotARepositoryError(const std::filesystem::path& p) : DataError("not a git repository: " + p.string()) {}
};

// Case-insensitive substring patterns over commit messages.
struct KeywordFilter {
  std::vector<std::string> patterns;

  static KeywordFilter defaults();
  // One pattern per line; blank lines and lines starting with '#' are ignored.
  static KeywordFilter parse(std::string_view text);
  void validate() const;
};

bool match_commit(std::string_view message, const KeywordFilter& filter);

// A Python file as it was before a fix commit, with the lines the fix touched.
struct MinedChange {
  std::string repo_id;
  std::string commit_id;
  std::string file_path;
  std::string pre_image;
  std::vector<std::size_t> changed_lines;  // 1-based, strictly increasing
  std::string commit_message;
  std::int64_t commit_time = 0;

  bool operator==(const MinedChange&) const = default;
};

struct MineOptions {
  std::size_t max_files_per_commit = 50;
};

struct MineResult {
  std::vector<MinedChange> changes;
  std::vector<std::string> warnings;
};

// Reads the repository through git plumbing. `repo_id` defaults to the
// directory name. Ordered by (commit time, commit id, path).
MineResult mine_repository(const std::filesystem::path& repo, const KeywordFilter& filter,
                           const MineOptions& options = {}, std::string repo_id = {});

// Mines each repository on its own thread; results are concatenated in input
// order. Per-repository failures become warnings.
MineResult mine_repositories(const std::vector<std::filesystem::path>& repos, const KeywordFilter& filter,
                             const MineOptions& options = {});

// A directory is either itself a repository or a parent of repositories; any
// other file is read as a newline-separated list of repository paths.
std::vector<std::filesystem::path> resolve_repositories(const std::filesystem::path& dir_or_list);

std::string to_json_line(const MinedChange& change);
MinedChange from_json_line(std::string_view line);
void write_changes(const std::filesystem::path& path, const std::vector<MinedChange>& changes);
std::vector<MinedChange> read_changes(const std::filesystem::path& path);

}  // namespace vulnhound::miner
