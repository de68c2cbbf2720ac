// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#include "support/fixtures.hpp"
#include "support/rnn_fixtures.hpp"
#include "vulnhound/cvec.hpp"
#include "vulnhound/evalkit.hpp"
#include "vulnhound/io.hpp"
#include "vulnhound/pipeline.hpp"
#include "vulnhound/subprocess.hpp"

using namespace vulnhound;
namespace t = vulnhound::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int failures = 0;

void criterion(int n, const char* name, double limit_seconds, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::string timing = fmt("%.2fs", secs);
  if (limit_seconds > 0) {
    timing += fmt(" (limit %.0fs)", limit_seconds);
    if (secs >= limit_seconds) {
      o.pass = false;
      timing += " over time";
    }
  }
  failures += !o.pass;
  std::printf("%s  %d  %s: %s; %s\n", o.pass ? "PASS" : "FAIL", n, name, o.detail.c_str(), timing.c_str());
  std::fflush(stdout);
}

Outcome gradient_oracle() {
  std::mt19937_64 rng(2024);
  const auto g = t::gradient_check(rng, 100);
  return {g.worst < 1e-4, "max relative error " + fmt("%.3g", g.worst) + " over 100 configs, " +
                              std::to_string(g.compared) + " partials"};
}

Outcome metric_consistency() {
  const double f1_t2 = *evalkit::f1_score(0.862, 0.800);
  const double f1_t3 = *evalkit::f1_score(0.980, 0.942);
  const bool ok2 = std::abs(f1_t2 - 0.831) <= 0.0015;
  const bool ok3 = std::abs(f1_t3 - 0.961) <= 0.0015;

  evalkit::Metrics bandit;
  bandit.accuracy = 0.789;
  bandit.recall = 0.769;
  bandit.f1 = 0.870;
  const std::vector<std::pair<std::string, evalkit::Metrics>> rows{{"Bandit", bandit}};
  const auto text = evalkit::comparison_table(rows).text;
  std::istringstream lines(text);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  std::istringstream cells(row);
  std::vector<std::string> c;
  for (std::string s; cells >> s;) c.push_back(s);
  const bool dash = c.size() == 5 && c[2] == "-";
  return {ok2 && ok3 && dash, "F1(86.2, 80.0) = " + fmt("%.2f%%", 100 * f1_t2) + ", F1(98.0, 94.2) = " +
                                  fmt("%.2f%%", 100 * f1_t3) + ", Bandit row \"" + row + "\""};
}

Outcome exhaustive_metrics() {
  std::size_t checked = 0, mismatches = 0;
  using LD = long double;
  auto ulps = [](double a, LD exact) {
    const double r = static_cast<double>(exact);
    return a == r || std::nextafter(a, r) == r;
  };
  for (std::uint64_t tp = 0; tp <= 6; ++tp)
    for (std::uint64_t fp = 0; fp <= 6; ++fp)
      for (std::uint64_t fn = 0; fn <= 6; ++fn)
        for (std::uint64_t tn = 0; tn <= 6; ++tn) {
          const evalkit::Confusion cm{tp, fp, fn, tn};
          if (cm.total() == 0) {
            bool threw = false;
            try {
              (void)evalkit::compute_metrics(cm);
            } catch (const DataError&) {
              threw = true;
            }
            mismatches += !threw;
            continue;
          }
          ++checked;
          const auto m = evalkit::compute_metrics(cm);
          const LD acc = LD(tp + tn) / LD(tp + fp + fn + tn);
          bool ok = m.accuracy && ulps(*m.accuracy, acc);
          if (tp + fp > 0) ok = ok && m.precision && ulps(*m.precision, LD(tp) / LD(tp + fp));
          else ok = ok && !m.precision;
          if (tp + fn > 0) ok = ok && m.recall && ulps(*m.recall, LD(tp) / LD(tp + fn));
          else ok = ok && !m.recall;
          if (tp > 0) ok = ok && m.f1 && ulps(*m.f1, LD(2 * tp) / LD(2 * tp + fp + fn));
          else ok = ok && !m.f1;
          mismatches += !ok;
        }
  return {mismatches == 0 && checked == 2400,
          std::to_string(checked) + " matrices compared, " + std::to_string(mismatches) + " mismatches"};
}

Outcome overfit() {
  std::mt19937_64 rng(1);
  const auto data = t::marker_dataset(rng, 64, 8, 16, 0.5f, 2.0f);
  rnn::TrainConfig c;  // defaults: hidden 100, dropout 0.2, Adam 1e-3, batch 128
  c.epochs = 200;
  const auto report = rnn::train(data, {}, c);
  const auto e = rnn::evaluate(report.params, data, c.threshold);
  const auto m = evalkit::compute_metrics(e.confusion);
  const double f1 = m.f1.value_or(0);
  return {f1 >= 0.95, "training F1 " + fmt("%.4f", f1) + " after " + std::to_string(report.epochs.size()) +
                          " epochs on 64 windows (batch clamped to 64)"};
}

Outcome synthetic_corpus() {
  t::TempDir dir;
  t::make_sql_repos(dir / "repos", 5, 60, 4, 4);
  config::PipelineConfig c;
  c.repos = dir / "repos";
  c.workdir = dir / "work";
  c.window = {64, 64, 1};
  c.sg.dim = 32;
  std::ostringstream log;
  pipeline::run_pipeline(c, log);
  const auto meta = nlohmann::json::parse(io::read_file(dir / "work/windows.meta.json"));
  const auto eval = nlohmann::json::parse(io::read_file(dir / "work/eval.json"));
  const std::size_t windows = meta["windows"].get<std::size_t>();
  const auto& f1j = eval["metrics"]["f1"];
  const double f1 = f1j.is_null() ? 0.0 : f1j.get<double>();
  return {windows >= 500 && f1 >= 0.80, std::to_string(windows) + " windows, 70/15/15 by repository, held-out F1 " +
                                            fmt("%.4f", f1) + " on " + eval["windows"].dump() + " test windows"};
}

Outcome mining_fixture() {
  const std::string vulnerable =
      "import sqlite3\n"
      "def get(db, uid):\n"
      "    cur = db.cursor()\n"
      "    q = \"SELECT * FROM users WHERE id=\" + uid\n"
      "    cur.execute(q)\n"
      "    return cur.fetchone()\n";
  const std::string fixed =
      "import sqlite3\n"
      "def get(db, uid):\n"
      "    cur = db.cursor()\n"
      "    q = \"SELECT * FROM users WHERE id=?\"\n"
      "    cur.execute(q, (uid,))\n"
      "    return cur.fetchone()\n";
  t::TempDir dir;
  t::GitFixture repo(dir / "webapp");
  repo.commit({{"app.py", vulnerable}, {"README.md", std::string("demo\n")}}, "init");
  const std::string fix = repo.commit({{"app.py", fixed}}, "SQL injection fixed");
  repo.commit({{"README.md", std::string("demo app\n")}}, "typo");

  const auto result = miner::mine_repository(repo.path(), miner::KeywordFilter::defaults());
  const std::vector<miner::MinedChange> expected{
      {"webapp", fix, "app.py", vulnerable, {4, 5}, "SQL injection fixed", 1700003600}};
  const bool changes_ok = result.changes == expected;

  const auto windows = dataset::windows_for_change(result.changes.at(0), dataset::WindowSpec{16, 8, 1});
  std::vector<int> labels;
  for (const auto& w : windows) labels.push_back(w.label);
  const bool windows_ok = labels == std::vector<int>{0, 1, 1, 1, 1, 0};
  return {changes_ok && windows_ok, std::to_string(result.changes.size()) + " change(s), changed lines {4, 5}: " +
                                        (changes_ok ? "match" : "differ") + "; 6 windows labelled 0 1 1 1 1 0: " +
                                        (windows_ok ? "match" : "differ")};
}

Outcome determinism() {
  t::TempDir dir;
  t::make_sql_repos(dir / "repos", 3, 5, 2, 3);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 4; ++i) t::write_file(dir / ("scan/s" + std::to_string(i) + ".py"), t::sql_file(rng, 2, 0.5).source);
  t::write_file(dir / "vh.toml", "repos = \"" + (dir / "repos").generic_string() + "\"\nscan = \"" +
                                     (dir / "scan").generic_string() +
                                     "\"\nseed = 7\nwindow_len = 32\nstride = 16\nsg_dim = 16\nsg_min_count = 1\n"
                                     "epochs = 5\nhidden = 16\nbatch_size = 32\n");
  for (const char* w : {"a", "b"}) {
    const auto r = run_process({VULNHOUND_CLI, "--config", (dir / "vh.toml").string(), "--workdir",
                                (dir / w).string(), "pipeline"});
    if (r.exit_code != 0) return {false, "pipeline run failed: " + r.err};
  }
  std::string detail;
  bool same = true;
  for (const char* f : {"windows.jsonl", "model.vlsm", "scan-report.json"}) {
    const auto a = io::read_file(dir / "a" / f), b = io::read_file(dir / "b" / f);
    const bool eq = !a.empty() && a == b;
    same = same && eq;
    detail += std::string(detail.empty() ? "" : ", ") + f + (eq ? " identical" : " differs");
  }
  return {same, "two CLI pipeline runs: " + detail};
}

Outcome skipgram_properties() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 0.7);
  double worst = 0;
  using LD = long double;
  for (int round = 0; round < 50; ++round) {
    const int dim = 1 + static_cast<int>(rng() % 8), k = 1 + static_cast<int>(rng() % 5);
    Eigen::VectorXd vc(dim), uo(dim);
    Eigen::MatrixXd neg(k, dim);
    for (int i = 0; i < dim; ++i) vc[i] = normal(rng), uo[i] = normal(rng);
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < dim; ++i) neg(j, i) = normal(rng);
    const auto g = embed::pair_loss_gradient(vc, uo, neg);
    const LD h = 1e-7L;
    auto fd = [&](int which, int j, int i) {
      Eigen::Matrix<LD, Eigen::Dynamic, 1> c = vc.cast<LD>(), o = uo.cast<LD>();
      Eigen::Matrix<LD, Eigen::Dynamic, Eigen::Dynamic> n = neg.cast<LD>();
      LD& x = which == 0 ? c[i] : which == 1 ? o[i] : n(j, i);
      const LD x0 = x;
      x = x0 + h;
      const LD plus = embed::pair_loss(c, o, n);
      x = x0 - h;
      const LD minus = embed::pair_loss(c, o, n);
      return static_cast<double>((plus - minus) / (2 * h));
    };
    auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}); };
    for (int i = 0; i < dim; ++i) {
      worst = std::max(worst, rel(g.center[i], fd(0, 0, i)));
      worst = std::max(worst, rel(g.context[i], fd(1, 0, i)));
      for (int j = 0; j < k; ++j) worst = std::max(worst, rel(g.negatives(j, i), fd(2, j, i)));
    }
  }

  std::vector<std::vector<std::string>> corpus;
  for (int i = 0; i < 1000; ++i) corpus.push_back({"db", i % 2 ? "query" : "exec"});
  for (int k = 0; k < 10; ++k)
    for (int rep = 0; rep < 2; ++rep) corpus.push_back({"zz" + std::to_string(k), "yy" + std::to_string(k)});
  int holds = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    embed::SgConfig cfg;
    cfg.seed = seed;
    const auto table = embed::train_skipgram(corpus, cfg);
    auto row = [&](const std::string& w) { return table.input.row(static_cast<Eigen::Index>(table.lookup(w))); };
    holds += embed::cosine(row("exec"), row("query")) > embed::cosine(row("exec"), row("zz" + std::to_string(seed % 10)));
  }
  return {worst < 1e-6 && holds >= 19,
          "pair-loss max relative error " + fmt("%.3g", worst) + ", cosine ordering in " + std::to_string(holds) +
              " of 20 seeds"};
}

Outcome cvec_round_trip() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<float> val(-3.0f, 3.0f);
  t::TempDir dir;
  int identical = 0;
  for (int round = 0; round < 100; ++round) {
    const std::uint32_t dim = 1 + rng() % 9;
    std::vector<embed::VectorSequence> seqs(1 + rng() % 3);
    for (auto& s : seqs) {
      s.dim = dim;
      s.path = "pkg/mod_" + std::to_string(rng() % 1000) + ".py";
      std::uint64_t pos = 0;
      const std::size_t n = rng() % 12;
      for (std::size_t i = 0; i < n; ++i) {
        pos += rng() % 5;
        embed::VectorEntry e;
        e.token = "t" + std::to_string(rng() % 50);
        e.span = {pos, pos + rng() % 6};
        e.vector.resize(dim);
        for (std::uint32_t k = 0; k < dim; ++k) e.vector[k] = val(rng);
        s.entries.push_back(std::move(e));
      }
    }
    cvec::store_vectors(seqs, dir / "v.cvec");
    identical += cvec::load_vectors(dir / "v.cvec") == seqs;
  }

  auto file = [](float v, std::uint64_t s2) {
    return t::Bytes{}
        .raw("CVEC")
        .le<std::uint32_t>(1)
        .le<std::uint32_t>(1)
        .le<std::uint32_t>(1)
        .str("p")
        .le<std::uint32_t>(2)
        .str("a")
        .le<std::uint64_t>(5)
        .le<std::uint64_t>(6)
        .f32(1.0f)
        .str("b")
        .le<std::uint64_t>(s2)
        .le<std::uint64_t>(s2 + 1)
        .f32(v)
        .b;
  };
  const std::string good = file(1, 7);
  std::string v2 = good;
  v2[4] = 2;
  const std::vector<std::pair<std::string, cvec::FormatErrorKind>> malformed{
      {"CVEX" + good.substr(4), cvec::FormatErrorKind::BadMagic},
      {v2, cvec::FormatErrorKind::VersionMismatch},
      {good.substr(0, good.size() - 2), cvec::FormatErrorKind::Truncated},
      {file(std::numeric_limits<float>::quiet_NaN(), 7), cvec::FormatErrorKind::NonFiniteVector},
      {file(1, 2), cvec::FormatErrorKind::NonMonotoneSpans},
      {good + "xyz", cvec::FormatErrorKind::TrailingBytes},
  };
  int rejected = 0;
  for (const auto& [bytes, kind] : malformed) {
    try {
      (void)cvec::decode(bytes);
    } catch (const cvec::FormatError& e) {
      rejected += e.kind() == kind;
    }
  }
  return {identical == 100 && rejected == static_cast<int>(malformed.size()),
          std::to_string(identical) + "/100 round trips identical, " + std::to_string(rejected) + "/" +
              std::to_string(malformed.size()) + " malformed files rejected with their own error kind"};
}

}  // namespace

int main() {
  criterion(1, "gradient oracle", 10, gradient_oracle);
  criterion(2, "metric consistency with reported scores", 0, metric_consistency);
  criterion(3, "exhaustive metrics oracle", 1, exhaustive_metrics);
  criterion(4, "overfit oracle", 120, overfit);
  criterion(5, "held-out detection on a synthetic corpus", 600, synthetic_corpus);
  criterion(6, "mining fixture", 5, mining_fixture);
  criterion(7, "end-to-end determinism", 0, determinism);
  criterion(8, "skip-gram properties", 60, skipgram_properties);
  criterion(9, "CVEC round trip", 0, cvec_round_trip);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
