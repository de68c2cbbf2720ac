#include <random>

#include "doctest.h"
#include "support/fixtures.hpp"
#include "vulnhound/linediff.hpp"
#include "vulnhound/miner.hpp"

using namespace vulnhound;
using namespace vulnhound::miner;
namespace t = vulnhound::testing;

namespace {

const char* const kVulnerable =
    "import sqlite3\n"
    "def get(db, uid):\n"
    "    cur = db.cursor()\n"
    "    q = \"SELECT * FROM users WHERE id=\" + uid\n"
    "    cur.execute(q)\n"
    "    return cur.fetchone()\n";

const char* const kFixed =
    "import sqlite3\n"
    "def get(db, uid):\n"
    "    cur = db.cursor()\n"
    "    q = \"SELECT * FROM users WHERE id=?\"\n"
    "    cur.execute(q, (uid,))\n"
    "    return cur.fetchone()\n";

// Classic O(nm) LCS length; independent of the Myers implementation.
std::size_t lcs_length(const std::vector<std::string_view>& a, const std::vector<std::string_view>& b) {
  std::vector<std::vector<std::size_t>> dp(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1 : std::max(dp[i - 1][j], dp[i][j - 1]);
  return dp[a.size()][b.size()];
}

}  // namespace

TEST_CASE("match_commit") {
  const auto filter = KeywordFilter::defaults();
  CHECK(match_commit("SQL injection fixed in login handler", filter));
  CHECK_FALSE(match_commit("Update README", filter));
  CHECK(match_commit("Prevent SQL Injection via parametrized query", filter));
  CHECK(match_commit("security: FIX SQL INJECTION\n\nlong body", filter));
}

TEST_CASE("keyword file parsing") {
  const auto f = KeywordFilter::parse("# comment\n\nsql injection fixed\n  escape query  \n");
  CHECK(f.patterns == std::vector<std::string>{"sql injection fixed", "escape query"});
  CHECK_THROWS_AS(KeywordFilter::parse("# nothing here\n"), UsageError);
  CHECK_THROWS_AS((KeywordFilter{{"ok", ""}}.validate()), UsageError);
}

TEST_CASE("line diff hunks") {
  using linediff::Hunk;
  const std::string a = "a\nb\nc\nd\n", b = "a\nx\nc\nd\ne\n";
  const auto hunks = linediff::diff(linediff::split_lines(a), linediff::split_lines(b));
  CHECK(hunks == std::vector<Hunk>{{1, 1, 1, 1}, {4, 0, 4, 1}});
  CHECK(linediff::changed_old_lines(hunks, 4) == std::vector<std::size_t>{2, 4});
  // Insertion before the first line anchors to line 1.
  CHECK(linediff::changed_old_lines({{0, 0, 0, 2}}, 3) == std::vector<std::size_t>{1});
  CHECK(linediff::diff(linediff::split_lines(a), linediff::split_lines(a)).empty());
}

TEST_CASE("property: diff equals an LCS and reconstructs the new text") {
  std::mt19937_64 rng(11);
  const std::vector<std::string> alphabet = {"a\n", "b\n", "c\n", "d\n", "return x\n"};
  for (int round = 0; round < 400; ++round) {
    std::vector<std::string> sa(rng() % 14), sb(rng() % 14);
    for (auto& s : sa) s = alphabet[rng() % alphabet.size()];
    for (auto& s : sb) s = alphabet[rng() % alphabet.size()];
    std::vector<std::string_view> a(sa.begin(), sa.end()), b(sb.begin(), sb.end());
    const auto hunks = linediff::diff(a, b);

    std::size_t changed_old = 0;
    std::vector<std::string_view> rebuilt;
    std::size_t i = 0;
    for (const auto& h : hunks) {
      CHECK(h.old_start >= i);
      while (i < h.old_start) rebuilt.push_back(a[i++]);
      for (std::size_t k = 0; k < h.new_count; ++k) rebuilt.push_back(b[h.new_start + k]);
      i += h.old_count;
      changed_old += h.old_count;
    }
    while (i < a.size()) rebuilt.push_back(a[i++]);
    CHECK(rebuilt == b);
    CHECK(a.size() - changed_old == lcs_length(a, b));
  }
}

TEST_CASE("mining a scripted three-commit repository") {
  t::TempDir dir;
  t::GitFixture repo(dir / "webapp");
  repo.commit({{"app.py", std::string(kVulnerable)}, {"README.md", std::string("demo\n")}}, "init");
  const std::string fix = repo.commit({{"app.py", std::string(kFixed)}}, "SQL injection fixed");
  repo.commit({{"README.md", std::string("demo app\n")}}, "typo");

  const auto result = mine_repository(repo.path(), KeywordFilter::defaults());
  CHECK(result.warnings.empty());
  REQUIRE(result.changes.size() == 1);
  const auto& c = result.changes.front();
  CHECK(c.repo_id == "webapp");
  CHECK(c.commit_id == fix);
  CHECK(c.file_path == "app.py");
  CHECK(c.pre_image == kVulnerable);
  CHECK(c.changed_lines == std::vector<std::size_t>{4, 5});
  CHECK(c.commit_message == "SQL injection fixed");

  SUBCASE("re-running is deterministic") {
    CHECK(mine_repository(repo.path(), KeywordFilter::defaults()).changes == result.changes);
  }
  SUBCASE("JSONL round trip") {
    CHECK(from_json_line(to_json_line(c)) == c);
  }
}

TEST_CASE("repository without matching commits") {
  t::TempDir dir;
  t::GitFixture repo(dir / "r");
  repo.commit({{"a.py", std::string("x = 1\n")}}, "init");
  repo.commit({{"a.py", std::string("x = 2\n")}}, "tweak");
  CHECK(mine_repository(repo.path(), KeywordFilter::defaults()).changes.empty());
}

TEST_CASE("pure insertion fixes anchor on the preceding parent line") {
  t::TempDir dir;
  t::GitFixture repo(dir / "r");
  repo.commit({{"app.py", std::string(kVulnerable)}}, "init");
  std::string patched = kVulnerable;
  patched.insert(patched.find("    q ="), "    uid = int(uid)\n");
  repo.commit({{"app.py", patched}}, "Prevent SQL injection by casting");
  repo.commit({{"app.py", "# header\n" + patched}}, "fix sql injection (header)");

  const auto result = mine_repository(repo.path(), KeywordFilter::defaults());
  REQUIRE(result.changes.size() == 2);
  CHECK(result.changes[0].changed_lines == std::vector<std::size_t>{3});
  CHECK(result.changes[1].changed_lines == std::vector<std::size_t>{1});
}

TEST_CASE("non-Python files, merges and bulk commits are skipped") {
  t::TempDir dir;
  t::GitFixture repo(dir / "r");
  repo.commit({{"a.py", std::string("a = 1\n")}, {"q.sql", std::string("select 1;\n")}}, "init");
  repo.commit({{"q.sql", std::string("select 2;\n")}}, "SQL injection fixed in query file");

  std::map<std::string, std::optional<std::string>> many;
  for (int i = 0; i < 4; ++i) many["m" + std::to_string(i) + ".py"] = "v = " + std::to_string(i) + "\n";
  repo.commit(many, "init more");
  for (auto& [k, v] : many) v = *v + "w = 0\n";
  repo.commit(many, "SQL injection fixed everywhere");

  MineOptions opts;
  opts.max_files_per_commit = 3;
  const auto result = mine_repository(repo.path(), KeywordFilter::defaults(), opts);
  CHECK(result.changes.empty());
  REQUIRE(result.warnings.size() == 1);
  CHECK(result.warnings[0].find("bulk") != std::string::npos);

  opts.max_files_per_commit = 50;
  CHECK(mine_repository(repo.path(), KeywordFilter::defaults(), opts).changes.size() == 4);
}

TEST_CASE("not a repository") {
  t::TempDir dir;
  CHECK_THROWS_AS(mine_repository(dir.path(), KeywordFilter::defaults()), NotARepositoryError);
  CHECK_THROWS_AS(mine_repository(dir / "missing", KeywordFilter::defaults()), NotARepositoryError);
}

TEST_CASE("mining several repositories merges in input order") {
  t::TempDir dir;
  for (const char* name : {"b", "a"}) {
    t::GitFixture repo(dir / "repos" / name);
    repo.commit({{"app.py", std::string(kVulnerable)}}, "init");
    repo.commit({{"app.py", std::string(kFixed)}}, "SQL injection prevented");
  }
  const auto repos = resolve_repositories(dir / "repos");
  REQUIRE(repos.size() == 2);
  CHECK(repos[0].filename() == "a");
  t::write_file(dir / "list.txt", (dir / "repos" / "b").string() + "\n" + (dir / "nope").string() + "\n");
  const auto listed = resolve_repositories(dir / "list.txt");
  const auto result = mine_repositories(listed, KeywordFilter::defaults());
  REQUIRE(result.changes.size() == 1);
  CHECK(result.changes[0].repo_id == "b");
  CHECK(result.warnings.size() == 1);
}
