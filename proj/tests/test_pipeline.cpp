#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "support/fixtures.hpp"
#include "vulnhound/cvec.hpp"
#include "vulnhound/io.hpp"
#include "vulnhound/pipeline.hpp"

using namespace vulnhound;
using namespace vulnhound::pipeline;
namespace t = vulnhound::testing;

namespace {

// Small corpus: repositories, a scan directory with its truth file and one
// SAST verdict file.
struct Workspace {
  t::TempDir dir;
  PipelineConfig config;

  Workspace() {
    t::make_sql_repos(dir / "repos", 11, 4, 2, 3);
    std::mt19937_64 rng(12);
    std::string truth = "path,verdict\n", tool = "path,verdict\n";
    for (int i = 0; i < 6; ++i) {
      const auto f = t::sql_file(rng, 2, 0.5);
      const auto p = dir / ("scan/m" + std::to_string(i) + ".py");
      t::write_file(p, f.source);
      const std::string v = f.vulnerable_lines.empty() ? "0" : "1";
      truth += p.generic_string() + "," + v + "\n";
      tool += p.generic_string() + "," + (i % 2 ? "1" : "0") + "\n";
    }
    t::write_file(dir / "truth.csv", truth);
    t::write_file(dir / "other-tool.csv", tool);

    config.repos = dir / "repos";
    config.scan = dir / "scan";
    config.truth = dir / "truth.csv";
    config.sast = {{"generic-csv", dir / "other-tool.csv"}};
    config.workdir = dir / "work";
    config.window = {32, 16, 1};
    config.sg.dim = 8;
    config.sg.epochs = 2;
    config.sg.min_count = 1;
    config.train.epochs = 3;
    config.train.hidden = 6;
    config.train.batch_size = 16;
  }

  std::string stages(const RunResult& r) const {
    std::string out;
    for (const auto& [name, s] : r.stages) out += name + "=" + std::string(status_name(s)) + " ";
    return out;
  }
};

RunResult run(const PipelineConfig& config) {
  std::ostringstream log;
  return run_pipeline(config, log);
}

}  // namespace

TEST_CASE("staged pipeline run") {
  Workspace ws;
  const auto first = run(ws.config);
  CHECK(ws.stages(first) == "mine=ran dataset=ran embedding=ran train=ran eval=ran scan=ran compare=ran ");
  const auto& dir = ws.config.workdir;
  for (const char* f : {"changes.jsonl", "windows.jsonl", "windows.meta.json", "embedding.cvec", "model.vlsm",
                        "train-report.json", "eval.json", "scan-report.json", "scan-report.txt", "comparison.txt",
                        "comparison.csv", "summary.json"})
    CHECK_MESSAGE(fs::exists(dir / f), f);

  const auto summary = nlohmann::json::parse(first.summary_json);
  CHECK(summary["artifacts"].size() == 13);
  for (const auto& a : summary["artifacts"])
    CHECK(a["sha256"] == io::sha256_file(dir / a["path"].get<std::string>()));

  const auto cmp = io::read_file(dir / "comparison.txt");
  CHECK(cmp.find("model") != std::string::npos);
  CHECK(cmp.find("other-tool") != std::string::npos);
  const auto report = nlohmann::json::parse(io::read_file(dir / "scan-report.json"));
  CHECK(report["files"].size() == 6);
  CHECK(report["model_id"] == io::sha256_file(dir / "model.vlsm"));
  CHECK(report["config"]["window_len"] == 32);

  SUBCASE("rerun without changes skips everything") {
    const auto again = run(ws.config);
    CHECK(ws.stages(again) ==
          "mine=skipped dataset=skipped embedding=skipped train=skipped eval=skipped scan=skipped compare=skipped ");
    CHECK(again.summary_json == first.summary_json);
  }
  SUBCASE("deleting the model reruns train and everything after it") {
    fs::remove(dir / "model.vlsm");
    const auto again = run(ws.config);
    CHECK(ws.stages(again) == "mine=skipped dataset=skipped embedding=skipped train=ran eval=ran scan=ran compare=ran ");
    CHECK(again.summary_json == first.summary_json);
  }
  SUBCASE("a tampered output reruns its stage") {
    t::write_file(dir / "eval.txt", "edited\n");
    CHECK(ws.stages(run(ws.config)) ==
          "mine=skipped dataset=skipped embedding=skipped train=skipped eval=ran scan=ran compare=ran ");
  }
  SUBCASE("a training key reruns from train") {
    auto c = ws.config;
    c.train.epochs = 4;
    CHECK(ws.stages(run(c)) == "mine=skipped dataset=skipped embedding=skipped train=ran eval=ran scan=ran compare=ran ");
  }
  SUBCASE("an edited scanned file reruns scan") {
    t::write_file(ws.dir / "scan/m0.py", "x = 1\n");
    CHECK(ws.stages(run(ws.config)) ==
          "mine=skipped dataset=skipped embedding=skipped train=skipped eval=skipped scan=ran compare=ran ");
  }
}

TEST_CASE("two fresh runs are byte-identical") {
  Workspace ws;
  run(ws.config);
  auto other = ws.config;
  other.workdir = ws.dir / "work2";
  run(other);
  for (const char* f : {"changes.jsonl", "windows.jsonl", "embedding.cvec", "model.vlsm", "scan-report.json"})
    CHECK_MESSAGE(io::read_file(ws.config.workdir / f) == io::read_file(other.workdir / f), f);
}

TEST_CASE("configuration and stage errors") {
  Workspace ws;
  auto c = ws.config;
  c.providers = {"skipgram", "external"};
  CHECK_THROWS_AS(run(c), UsageError);

  c = ws.config;
  c.providers = {"external"};
  CHECK_THROWS_AS(run(c), UsageError);  // no vectors

  c = ws.config;
  c.repos = ws.dir / "nowhere";
  try {
    run(c);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).starts_with("stage mine: "));
    CHECK(e.error_class() == ErrorClass::Data);
  }
}

TEST_CASE("external vectors drive dataset, training and scanning") {
  Workspace ws;
  auto c = ws.config;
  c.truth.clear();
  const auto mined = mine(c);
  REQUIRE_FALSE(mined.changes.empty());
  const auto keys = export_preimages(mined.changes, ws.dir / "export");
  CHECK(keys.size() == mined.changes.size());
  CHECK(io::read_file(ws.dir / "export" / keys[0]) == mined.changes[0].pre_image);

  // Stand-in for the exporter: one 768-wide vector per lexical token, a
  // fixed function of the token text.
  auto exported = [](const std::string& key, const std::string& text) {
    embed::VectorSequence s;
    s.path = key;
    s.dim = 768;
    for (const auto& tok : pylex::tokenize(text).tokens) {
      if (tok.synthetic()) continue;
      embed::VectorEntry e{tok.text, tok.span, Eigen::VectorXf(768)};
      std::mt19937 g(static_cast<std::uint32_t>(std::hash<std::string>{}(tok.text)));
      for (auto& x : e.vector) x = static_cast<float>(g() % 2001) / 1000.0f - 1.0f;
      s.entries.push_back(std::move(e));
    }
    return s;
  };
  std::vector<embed::VectorSequence> train_vectors, scan_vectors;
  for (std::size_t i = 0; i < keys.size(); ++i) train_vectors.push_back(exported(keys[i], mined.changes[i].pre_image));
  for (const auto& f : scan::collect_python_files({c.scan})) scan_vectors.push_back(exported(f, io::read_file(f)));
  cvec::store_vectors(train_vectors, ws.dir / "train.cvec");
  cvec::store_vectors(scan_vectors, ws.dir / "scan.cvec");

  c.providers = {"external"};
  c.vectors = ws.dir / "train.cvec";
  c.scan_vectors = ws.dir / "scan.cvec";
  const auto r = run(c);
  CHECK(ws.stages(r) == "mine=ran dataset=ran embedding=n/a train=ran eval=ran scan=ran compare=n/a ");
  const auto model = model_io::load(c.workdir / "model.vlsm");
  CHECK(model.params.dim() == 768);
  CHECK(model.meta.provider == "external");
  const auto report = scan::from_json(io::read_file(c.workdir / "scan-report.json"));
  REQUIRE(report.files.size() == 6);
  for (const auto& f : report.files) CHECK_MESSAGE(f.ok(), f.error);

  SUBCASE("a scanned file without vectors is reported, not fatal") {
    t::write_file(ws.dir / "scan/zz.py", "x = 1\n");
    run(c);
    const auto again = scan::from_json(io::read_file(c.workdir / "scan-report.json"));
    REQUIRE(again.files.size() == 7);
    CHECK_FALSE(again.files.back().ok());
  }
}
