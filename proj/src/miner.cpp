#include "vulnhound/miner.hpp"

#include <algorithm>
#include <future>
#include <sstream>

#include "json.hpp"
#include "vulnhound/io.hpp"
#include "vulnhound/linediff.hpp"
#include "vulnhound/pylex.hpp"
#include "vulnhound/subprocess.hpp"

namespace vulnhound::miner {

namespace fs = std::filesystem;

namespace {

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

struct CommitRecord {
  std::string id;
  std::vector<std::string> parents;
  std::int64_t time = 0;
  std::string message;
};

ProcessResult git(const fs::path& repo, std::vector<std::string> args) {
  args.insert(args.begin(), {"git", "-C", repo.string()});
  return run_process(args);
}

std::vector<CommitRecord> list_commits(const fs::path& repo) {
  const auto res = git(repo, {"rev-list", "--all", "--format=%H%x1f%P%x1f%ct%x1f%B%x1e"});
  if (res.exit_code != 0) throw DataError("git rev-list failed in " + repo.string() + ": " + res.err);
  std::vector<CommitRecord> commits;
  std::size_t pos = 0;
  const std::string& out = res.out;
  while (pos < out.size()) {
    const std::size_t end = out.find('\x1e', pos);
    if (end == std::string::npos) break;
    std::string_view rec(out.data() + pos, end - pos);
    pos = end + 1;
    if (pos < out.size() && out[pos] == '\n') ++pos;
    // Each record starts with a "commit <sha>" header line.
    if (const std::size_t nl = rec.find('\n'); rec.starts_with("commit ") && nl != std::string_view::npos)
      rec.remove_prefix(nl + 1);
    std::vector<std::string_view> fields;
    for (int f = 0; f < 3; ++f) {
      const std::size_t sep = rec.find('\x1f');
      if (sep == std::string_view::npos) break;
      fields.push_back(rec.substr(0, sep));
      rec.remove_prefix(sep + 1);
    }
    if (fields.size() != 3) continue;
    CommitRecord c;
    c.id = std::string(fields[0]);
    std::istringstream parents{std::string(fields[1])};
    for (std::string p; parents >> p;) c.parents.push_back(p);
    c.time = std::stoll(std::string(fields[2]));
    c.message = std::string(rec);
    while (!c.message.empty() && c.message.back() == '\n') c.message.pop_back();
    commits.push_back(std::move(c));
  }
  return commits;
}

struct TreeChange {
  char status;
  std::string path;
};

std::vector<TreeChange> changed_files(const fs::path& repo, const std::string& parent, const std::string& commit) {
  const auto res = git(repo, {"diff-tree", "-r", "-z", "--no-renames", "--name-status", parent, commit});
  if (res.exit_code != 0) throw DataError("diff-tree failed for " + commit);
  std::vector<TreeChange> files;
  std::vector<std::string_view> parts;
  std::string_view rest(res.out);
  while (!rest.empty()) {
    const std::size_t nul = rest.find('\0');
    parts.push_back(rest.substr(0, nul));
    if (nul == std::string_view::npos) break;
    rest.remove_prefix(nul + 1);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); i += 2) {
    if (parts[i].empty()) continue;
    files.push_back({parts[i][0], std::string(parts[i + 1])});
  }
  return files;
}

std::string blob(const fs::path& repo, const std::string& rev, const std::string& path) {
  auto res = git(repo, {"cat-file", "blob", rev + ":" + path});
  if (res.exit_code != 0) throw DataError("cannot read object " + rev + ":" + path);
  return std::move(res.out);
}

}  // namespace

KeywordFilter KeywordFilter::defaults() {
  return {{"sql injection fixed", "sql injection prevented", "fix sql injection", "prevent sql injection"}};
}

KeywordFilter KeywordFilter::parse(std::string_view text) {
  KeywordFilter f;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    f.patterns.push_back(line.substr(first));
  }
  f.validate();
  return f;
}

void KeywordFilter::validate() const {
  if (patterns.empty()) throw UsageError("keyword filter has no patterns");
  for (const auto& p : patterns)
    if (p.empty()) throw UsageError("keyword filter contains an empty pattern");
}

bool match_commit(std::string_view message, const KeywordFilter& filter) {
  const std::string haystack = ascii_lower(message);
  return std::any_of(filter.patterns.begin(), filter.patterns.end(),
                     [&](const std::string& p) { return haystack.find(ascii_lower(p)) != std::string::npos; });
}

MineResult mine_repository(const fs::path& repo, const KeywordFilter& filter, const MineOptions& options,
                           std::string repo_id) {
  filter.validate();
  if (!fs::is_directory(repo) || git(repo, {"rev-parse", "--git-dir"}).exit_code != 0)
    throw NotARepositoryError(repo);
  if (repo_id.empty()) repo_id = fs::weakly_canonical(repo).filename().string();

  MineResult result;
  for (const auto& commit : list_commits(repo)) {
    if (commit.parents.size() != 1 || !match_commit(commit.message, filter)) continue;
    const std::string& parent = commit.parents.front();
    try {
      const auto files = changed_files(repo, parent, commit.id);
      if (files.size() > options.max_files_per_commit) {
        result.warnings.push_back(commit.id + ": touches " + std::to_string(files.size()) +
                                  " files, skipped as a bulk change");
        continue;
      }
      std::vector<MinedChange> from_commit;
      for (const auto& f : files) {
        if (f.status != 'M' || !f.path.ends_with(".py")) continue;
        std::string pre = blob(repo, parent, f.path);
        const std::string post = blob(repo, commit.id, f.path);
        try {
          pylex::validate_utf8(pre);
        } catch (const EncodingError& e) {
          result.warnings.push_back(commit.id + ":" + f.path + ": pre-fix image is not UTF-8 (" + e.what() + ")");
          continue;
        }
        const auto old_lines = linediff::split_lines(pre);
        const auto hunks = linediff::diff(old_lines, linediff::split_lines(post));
        auto changed = linediff::changed_old_lines(hunks, old_lines.size());
        if (changed.empty()) continue;
        from_commit.push_back(MinedChange{repo_id, commit.id, f.path, std::move(pre), std::move(changed),
                                          commit.message, commit.time});
      }
      std::move(from_commit.begin(), from_commit.end(), std::back_inserter(result.changes));
    } catch (const DataError& e) {
      result.warnings.push_back(commit.id + ": " + e.what());
    }
  }
  std::sort(result.changes.begin(), result.changes.end(), [](const MinedChange& a, const MinedChange& b) {
    return std::tie(a.commit_time, a.commit_id, a.file_path) < std::tie(b.commit_time, b.commit_id, b.file_path);
  });
  return result;
}

MineResult mine_repositories(const std::vector<fs::path>& repos, const KeywordFilter& filter,
                             const MineOptions& options) {
  std::vector<std::future<MineResult>> tasks;
  tasks.reserve(repos.size());
  for (const auto& repo : repos) {
    tasks.push_back(std::async(std::launch::async, [&repo, &filter, &options] {
      try {
        return mine_repository(repo, filter, options);
      } catch (const std::exception& e) {
        MineResult failed;
        failed.warnings.push_back(repo.string() + ": " + e.what());
        return failed;
      }
    }));
  }
  MineResult merged;
  for (auto& t : tasks) {
    auto r = t.get();
    std::move(r.changes.begin(), r.changes.end(), std::back_inserter(merged.changes));
    std::move(r.warnings.begin(), r.warnings.end(), std::back_inserter(merged.warnings));
  }
  return merged;
}

std::vector<fs::path> resolve_repositories(const fs::path& dir_or_list) {
  std::vector<fs::path> repos;
  if (fs::is_directory(dir_or_list)) {
    if (fs::exists(dir_or_list / ".git")) return {dir_or_list};
    for (const auto& entry : fs::directory_iterator(dir_or_list))
      if (entry.is_directory() && fs::exists(entry.path() / ".git")) repos.push_back(entry.path());
    std::sort(repos.begin(), repos.end());
    return repos;
  }
  std::istringstream in(io::read_file(dir_or_list));
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty() && line[0] != '#') repos.emplace_back(line);
  }
  return repos;
}

std::string to_json_line(const MinedChange& c) {
  nlohmann::ordered_json j;
  j["repo"] = c.repo_id;
  j["commit"] = c.commit_id;
  j["path"] = c.file_path;
  j["time"] = c.commit_time;
  j["message"] = c.commit_message;
  j["changed_lines"] = c.changed_lines;
  j["pre_image"] = c.pre_image;
  return j.dump();
}

MinedChange from_json_line(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    MinedChange c;
    c.repo_id = j.at("repo").get<std::string>();
    c.commit_id = j.at("commit").get<std::string>();
    c.file_path = j.at("path").get<std::string>();
    c.commit_time = j.at("time").get<std::int64_t>();
    c.commit_message = j.at("message").get<std::string>();
    c.changed_lines = j.at("changed_lines").get<std::vector<std::size_t>>();
    c.pre_image = j.at("pre_image").get<std::string>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed mined-change record: ") + e.what());
  }
}

void write_changes(const fs::path& path, const std::vector<MinedChange>& changes) {
  std::string out;
  for (const auto& c : changes) out += to_json_line(c) + "\n";
  io::write_file(path, out);
}

std::vector<MinedChange> read_changes(const fs::path& path) {
  std::vector<MinedChange> changes;
  std::istringstream in(io::read_file(path));
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) changes.push_back(from_json_line(line));
  return changes;
}

}  // namespace vulnhound::miner
