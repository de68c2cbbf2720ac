#pragma once
// Shared helpers for the test binaries: temp dirs, scripted git repos,
// random Python-ish text and the synthetic SQL-injection corpus.

#include <algorithm>
#include <cstdio>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "json.hpp"

namespace vulnhound::testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "vulnhound-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

// Little-endian byte assembly, kept apart from the codecs under test.
struct Bytes {
  std::string b;
  Bytes& raw(std::string_view s) {
    b.append(s);
    return *this;
  }
  template <typename T>
  Bytes& le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) b.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
    return *this;
  }
  Bytes& f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    return le(u);
  }
  Bytes& f64(double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    return le(u);
  }
  Bytes& str(std::string_view s) { return le(static_cast<std::uint16_t>(s.size())).raw(s); }
};

inline void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

inline void run_or_throw(const std::string& cmd) {
  if (std::system((cmd + " >/dev/null 2>&1").c_str()) != 0) throw std::runtime_error("command failed: " + cmd);
}

// Scripted git repository with fixed identities and timestamps so commit ids
// are reproducible.
class GitFixture {
 public:
  explicit GitFixture(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    git("init -q");
  }

  // Writes (or deletes, when content is nullopt) files and commits them.
  std::string commit(const std::map<std::string, std::optional<std::string>>& files, const std::string& message) {
    for (const auto& [rel, content] : files) {
      if (content) write_file(dir_ / rel, *content);
      else fs::remove(dir_ / rel);
    }
    git("add -A");
    const std::string date = std::to_string(1700000000 + 3600 * counter_++) + " +0000";
    const std::string env = "GIT_AUTHOR_DATE=" + shell_quote(date) + " GIT_COMMITTER_DATE=" + shell_quote(date) + " ";
    write_file(dir_ / ".git" / "fixture-msg", message);
    run_or_throw(env + "git -C " + shell_quote(dir_.string()) +
                 " -c user.name=fixture -c user.email=fixture@example.com -c commit.gpgsign=false"
                 " commit -q --allow-empty -F .git/fixture-msg");
    return head();
  }

  std::string head() const {
    const std::string cmd = "git -C " + shell_quote(dir_.string()) + " rev-parse HEAD";
    FILE* pipe = popen(cmd.c_str(), "r");
    char buf[128] = {};
    std::string out;
    while (fgets(buf, sizeof buf, pipe)) out += buf;
    pclose(pipe);
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out;
  }

  const fs::path& path() const { return dir_; }

 private:
  void git(const std::string& args) { run_or_throw("git -C " + shell_quote(dir_.string()) + " " + args); }

  fs::path dir_;
  int counter_ = 0;
};

// Random text biased toward Python lexemes; exercises lexer totality.
inline std::string random_pythonish(std::mt19937_64& rng, std::size_t pieces) {
  static const std::vector<std::string> atoms = {
      "def", " ", "  ", "    ", "\n", "\n", "\t", "x", "cursor", ".", "execute", "(", ")", "[", "]", "{", "}",
      "\"", "'", "\"\"\"", "'''", "#", " # c\n", "+", "=", "==", "**=", "->", ":", ",", "\\", "\\\n", "1", "0x1f",
      "3.5e-2", "f\"", "rb'", "SELECT * FROM t", "%s", "\r\n", "\r", "$", "?", "`", "caf\xC3\xA9", "\xE2\x82\xAC",
      "if", "return", "lambda", "..."};
  std::string out;
  for (std::size_t i = 0; i < pieces; ++i) out += atoms[rng() % atoms.size()];
  return out;
}

inline const char* const kTokenizerCorpus = R"PY(import os, sqlite3
from typing import Optional  # comment

@decorator(arg=1)
class Repo(Base):
    """Doc string
    spanning lines with 'quotes' and "more"."""

    LIMIT = 0x1F + 0o17 + 0b101 + 1_000 + 3.14e-2 + 2j

    def find(self, uid: int, *args, **kw) -> Optional[dict]:
        q = "SELECT * FROM users WHERE id=" + str(uid)
        r = rb'\d+' if uid else b"\x00"
        items = [
            a ** 2 for a in range(10)  # inline
            if a % 3 != 0
        ]
        total = uid \
            + 1
        total //= 2; total <<= 1
        fn = lambda v: v >= 1 and not v == 2
        msg = f"user {uid} has {len(items)} items"
        self.cur.execute(q)
        return {"q": q, 'n': ...}

x = (1,
     2)
)PY";

// Runs CPython's tokenize module over `source` (ASCII) and returns
// (text, start, end) for each lexical token that carries source bytes.
inline std::optional<std::vector<std::tuple<std::string, std::uint64_t, std::uint64_t>>> python_tokens(
    const std::string& source) {
  TempDir dir;
  write_file(dir / "src.py", source);
  write_file(dir / "tok.py", R"PY(import io, json, sys, tokenize
src = open(sys.argv[1], 'rb').read()
starts = [0]
for i, b in enumerate(src):
    if b == 10:
        starts.append(i + 1)
skip = {tokenize.ENCODING, tokenize.ENDMARKER, tokenize.NL, tokenize.COMMENT, tokenize.INDENT, tokenize.DEDENT}
for t in tokenize.tokenize(io.BytesIO(src).readline):
    if t.type in skip or (t.type == tokenize.NEWLINE and t.string == ''):
        continue
    s = starts[t.start[0] - 1] + t.start[1]
    e = starts[t.end[0] - 1] + t.end[1]
    print(json.dumps([t.string, s, e]))
)PY");
  const std::string cmd = "python3 " + shell_quote((dir / "tok.py").string()) + " " +
                          shell_quote((dir / "src.py").string()) + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return std::nullopt;
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  if (pclose(pipe) != 0) return std::nullopt;
  std::vector<std::tuple<std::string, std::uint64_t, std::uint64_t>> tokens;
  std::istringstream lines(out);
  for (std::string line; std::getline(lines, line);) {
    const auto j = nlohmann::json::parse(line);
    tokens.emplace_back(j[0].get<std::string>(), j[1].get<std::uint64_t>(), j[2].get<std::uint64_t>());
  }
  return tokens;
}

// One synthetic database-access function. Vulnerable variants build the query
// by concatenation or interpolation and pass it to execute(); safe variants
// bind parameters. Returns the source and the 1-based lines that carry the
// injection (empty for safe variants).
struct SqlSnippet {
  std::string source;
  std::vector<std::size_t> vulnerable_lines;
  bool vulnerable = false;
};

inline SqlSnippet sql_snippet(std::mt19937_64& rng, bool vulnerable) {
  static const std::vector<std::string> tables = {"users", "orders", "items", "accounts", "sessions"};
  static const std::vector<std::string> columns = {"id", "name", "email", "owner"};
  static const std::vector<std::string> params = {"uid", "name", "key", "value", "term"};
  static const std::vector<std::string> funcs = {"fetch", "lookup", "load", "find", "get_row", "query_by"};
  static const std::vector<std::string> conns = {"db", "conn", "connection"};
  auto pick = [&](const std::vector<std::string>& v) -> const std::string& { return v[rng() % v.size()]; };

  const std::string table = pick(tables), column = pick(columns), param = pick(params), conn = pick(conns);
  std::vector<std::string> lines;
  std::vector<std::size_t> bad;
  lines.push_back("def " + pick(funcs) + "(" + conn + ", " + param + "):");
  static const std::vector<std::string> prologue = {
      "    log.debug(\"lookup\")", "    if not " + std::string("{p}") + ":\n        return None",
      "    limit = 10", "    msg = \"Hello \" + str({p})", "    start = time.time()"};
  std::string pro = pick(prologue);
  for (std::size_t pos; (pos = pro.find("{p}")) != std::string::npos;) pro.replace(pos, 3, param);
  std::istringstream pro_lines(pro);
  for (std::string l; std::getline(pro_lines, l);) lines.push_back(l);
  lines.push_back("    cur = " + conn + ".cursor()");

  const std::string select = "SELECT * FROM " + table + " WHERE " + column;
  if (vulnerable) {
    switch (rng() % 4) {
      case 0:
        lines.push_back("    cur.execute(\"" + select + " = '\" + " + param + " + \"'\")");
        bad.push_back(lines.size());
        break;
      case 1:
        lines.push_back("    query = \"" + select + " = '%s'\" % " + param);
        bad.push_back(lines.size());
        lines.push_back("    cur.execute(query)");
        bad.push_back(lines.size());
        break;
      case 2:
        lines.push_back("    cur.execute(\"" + select + " = \" + str(" + param + "))");
        bad.push_back(lines.size());
        break;
      default:
        lines.push_back("    sql = \"" + select + " = '{}'\".format(" + param + ")");
        bad.push_back(lines.size());
        lines.push_back("    cur.execute(sql)");
        bad.push_back(lines.size());
        break;
    }
  } else {
    switch (rng() % 4) {
      case 0: lines.push_back("    cur.execute(\"" + select + " = %s\", (" + param + ",))"); break;
      case 1: lines.push_back("    cur.execute(\"" + select + " = ?\", [" + param + "])"); break;
      case 2:
        lines.push_back("    query = \"" + select + " = %s\"");
        lines.push_back("    cur.execute(query, (" + param + ",))");
        break;
      default:
        lines.push_back("    label = \"" + table + ": \" + str(" + param + ")");
        lines.push_back("    cur.execute(\"" + select + " = :v\", {\"v\": " + param + "})");
        break;
    }
  }
  lines.push_back(rng() % 2 ? "    return cur.fetchall()" : "    return cur.fetchone()");
  SqlSnippet out;
  for (const auto& l : lines) out.source += l + "\n";
  out.vulnerable_lines = bad;
  out.vulnerable = vulnerable;
  return out;
}

// A file of several database functions; vulnerable ones carry their
// injection lines (1-based, within the file).
struct SqlFile {
  std::string source;
  std::string fixed;  // each injection line replaced by a bound-parameter call
  std::vector<std::size_t> vulnerable_lines;
};

inline SqlFile sql_file(std::mt19937_64& rng, std::size_t snippets, double vulnerable_share) {
  SqlFile f;
  std::size_t line = 0;
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < snippets; ++i) {
    const auto s = sql_snippet(rng, u(rng) < vulnerable_share);
    std::istringstream in(s.source);
    std::size_t k = 0;
    for (std::string l; std::getline(in, l);) {
      ++k;
      f.source += l + "\n";
      if (std::find(s.vulnerable_lines.begin(), s.vulnerable_lines.end(), k) != s.vulnerable_lines.end()) {
        f.vulnerable_lines.push_back(line + k);
        f.fixed += "    cur.execute(QUERY, (" + std::to_string(k) + ",))\n";
      } else {
        f.fixed += l + "\n";
      }
    }
    line += k;
    f.source += "\n";
    f.fixed += "\n";
    ++line;
  }
  return f;
}

// Repositories whose second commit fixes every injection of the first.
// Returns the number of files with at least one injection.
inline std::size_t make_sql_repos(const fs::path& dir, std::uint64_t seed, std::size_t repos,
                                  std::size_t files_per_repo, std::size_t snippets_per_file,
                                  double vulnerable_share = 0.5) {
  std::mt19937_64 rng(seed);
  std::size_t vulnerable_files = 0;
  for (std::size_t r = 0; r < repos; ++r) {
    GitFixture repo(dir / ("repo" + std::to_string(r)));
    std::map<std::string, std::optional<std::string>> before, after;
    for (std::size_t i = 0; i < files_per_repo; ++i) {
      const auto f = sql_file(rng, snippets_per_file, vulnerable_share);
      const std::string name = "app/mod" + std::to_string(i) + ".py";
      before[name] = f.source;
      after[name] = f.fixed;
      vulnerable_files += !f.vulnerable_lines.empty();
    }
    repo.commit(before, "initial import");
    repo.commit(after, "Fix SQL injection in query helpers");
  }
  return vulnerable_files;
}

}  // namespace vulnhound::testing
