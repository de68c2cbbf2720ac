#include "vulnhound/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <set>
#include <tuple>

#include "json.hpp"
#include "vulnhound/cvec.hpp"
#include "vulnhound/io.hpp"
#include "vulnhound/subprocess.hpp"

namespace vulnhound::pipeline {

namespace {

using Json = nlohmann::ordered_json;

Json snapshot(const PipelineConfig& config, const std::vector<std::string>& keys) {
  return Json::parse(config.snapshot_json(keys));
}

// Keys recorded inside the model: everything that shaped its training data,
// vectors and weights.
std::vector<std::string> model_keys() {
  std::vector<std::string> keys;
  for (const char* stage : {"dataset", "embedding", "train"})
    for (const auto& k : stage_keys(stage))
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  return keys;
}

pylex::LexOptions lex_options(const PipelineConfig& config) { return {config.keep_comments}; }

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

Json metrics_json(const evalkit::Metrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return {{"accuracy", opt(m.accuracy)}, {"precision", opt(m.precision)}, {"recall", opt(m.recall)}, {"f1", opt(m.f1)}};
}

}  // namespace

miner::MineResult mine(const PipelineConfig& config) {
  if (config.repos.empty()) throw UsageError("no repositories given (set repos)");
  const auto filter = config.keywords.empty() ? miner::KeywordFilter::defaults()
                                              : miner::KeywordFilter::parse(io::read_file(config.keywords));
  filter.validate();
  miner::MineOptions options;
  options.max_files_per_commit = config.max_files_per_commit;
  return miner::mine_repositories(miner::resolve_repositories(config.repos), filter, options);
}

BuiltDataset build_dataset(const std::vector<miner::MinedChange>& changes, const PipelineConfig& config,
                           const providers::VectorIndex* external) {
  if (changes.empty()) throw DataError("no mined changes to build a dataset from");
  std::optional<providers::VectorSource> source;
  if (external) source = providers::VectorSource::external(*external);

  std::vector<dataset::LabeledWindow> windows;
  for (const auto& change : changes) {
    const auto stream =
        source ? source->stream_for(providers::change_key(change.repo_id, change.commit_id, change.file_path),
                                    change.pre_image)
               : pylex::tokenize(change.pre_image, lex_options(config));
    auto w = dataset::windows_for_change(change, config.window, stream);
    std::move(w.begin(), w.end(), std::back_inserter(windows));
  }
  const std::size_t raw = windows.size();

  Json meta;
  meta["changes"] = changes.size();
  meta["windows_raw"] = raw;
  if (config.dedup) {
    auto d = dataset::dedup(std::move(windows));
    windows = std::move(d.windows);
    meta["duplicates_removed"] = d.duplicates_removed;
    meta["conflicts"] = d.conflicts;
    meta["conflicting_dropped"] = d.conflicting_dropped;
  }
  const std::size_t before_downsample = windows.size();
  windows = dataset::downsample_negatives(std::move(windows), config.negative_keep, config.seed);
  meta["negatives_dropped"] = before_downsample - windows.size();
  meta["windows"] = windows.size();
  meta["positive_windows"] = std::count_if(windows.begin(), windows.end(), [](const auto& w) { return w.label == 1; });
  meta["positive_ratio"] = dataset::positive_ratio(windows);
  if (windows.empty()) throw DataError("dataset is empty after filtering");
  meta["config"] = snapshot(config, stage_keys("dataset"));
  return {std::move(windows), meta.dump(2) + "\n"};
}

std::vector<std::string> export_preimages(const std::vector<miner::MinedChange>& changes, const fs::path& dir) {
  std::vector<std::string> keys;
  for (const auto& c : changes) {
    keys.push_back(providers::change_key(c.repo_id, c.commit_id, c.file_path));
    if (keys.back().starts_with("../") || fs::path(keys.back()).is_absolute())
      throw DataError("change path escapes the export directory: " + keys.back());
    io::write_file(dir / keys.back(), c.pre_image);
  }
  return keys;
}

dataset::DatasetSplit split_dataset(std::vector<dataset::LabeledWindow> windows, const PipelineConfig& config) {
  return dataset::split(std::move(windows), config.ratios, config.seed);
}

embed::EmbeddingTable train_embedding(const std::vector<miner::MinedChange>& changes,
                                      const dataset::DatasetSplit& split, const PipelineConfig& config) {
  std::set<std::tuple<std::string, std::string, std::string>> used;
  for (const auto& w : split.train) used.emplace(w.origin.repo, w.origin.commit, w.origin.path);
  std::vector<std::vector<std::string>> corpus;
  for (const auto& c : changes)
    if (used.count({c.repo_id, c.commit_id, c.file_path}))
      corpus.push_back(embed::sentence(pylex::tokenize(c.pre_image, lex_options(config))));
  return embed::train_skipgram(corpus, config.sg_config());
}

TrainedModel train_model(const dataset::DatasetSplit& split, const providers::VectorSource& source,
                         const PipelineConfig& config, const std::string& table_sha256) {
  const auto train_set = source.samples(split.train);
  const auto validation = source.samples(split.validation);
  TrainedModel out;
  out.report = rnn::train(train_set, validation, config.train_config());
  out.model.params = out.report.params;
  out.model.threshold = config.train.threshold;
  out.model.meta.window = config.window;
  out.model.meta.provider = std::string(providers::kind_name(source.kind()));
  out.model.meta.table_sha256 = table_sha256;
  out.model.meta.config_json = config.snapshot_json(model_keys());
  return out;
}

std::string train_report_json(const rnn::TrainReport& report) {
  Json j;
  j["stopped_early"] = report.stopped_early;
  Json epochs = Json::array();
  for (const auto& e : report.epochs) {
    Json o;
    o["epoch"] = e.epoch;
    o["loss"] = e.loss;
    o["validation_loss"] = e.validation_loss ? Json(*e.validation_loss) : Json(nullptr);
    o["validation"] = e.validation ? metrics_json(*e.validation) : Json(nullptr);
    epochs.push_back(std::move(o));
  }
  j["epochs"] = std::move(epochs);
  return j.dump(2) + "\n";
}

EvalResult evaluate(const model_io::Model& model, const dataset::DatasetSplit& split,
                    const providers::VectorSource& source) {
  if (split.test.empty()) throw DataError("test partition is empty");
  const auto samples = source.samples(split.test);
  const auto e = rnn::evaluate(model.params, samples, model.threshold);
  return {samples.size(), e.confusion, evalkit::compute_metrics(e.confusion), e.loss};
}

std::string eval_json(const EvalResult& r) {
  Json j;
  j["partition"] = "test";
  j["windows"] = r.windows;
  j["loss"] = r.loss;
  j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}};
  j["metrics"] = metrics_json(r.metrics);
  return j.dump(2) + "\n";
}

std::string eval_text(const EvalResult& r) {
  const std::vector<std::pair<std::string, evalkit::Confusion>> rows{{"model (test windows)", r.confusion}};
  return evalkit::comparison_table(rows).text + "windows " + std::to_string(r.windows) + "  loss " + fixed(r.loss) +
         "  tp " + std::to_string(r.confusion.tp) + " fp " + std::to_string(r.confusion.fp) + " fn " +
         std::to_string(r.confusion.fn) + " tn " + std::to_string(r.confusion.tn) + "\n";
}

evalkit::ComparisonTable compare(const scan::ScanReport& report, const fs::path& truth_path,
                                 const std::vector<config::SastInput>& sast) {
  const auto truth = evalkit::ingest_sast(truth_path, "generic-csv").verdicts;
  const auto scanned = scan::verdicts(report);
  std::vector<std::pair<std::string, evalkit::Confusion>> rows;
  rows.emplace_back("model", evalkit::score_files(evalkit::FileVerdicts(scanned.begin(), scanned.end()), truth));
  for (const auto& s : sast) {
    const auto set = evalkit::ingest_sast(s.path, s.format);
    rows.emplace_back(set.tool, evalkit::score_files(set.verdicts, truth));
  }
  return evalkit::comparison_table(rows);
}

const std::vector<std::string>& stage_keys(std::string_view stage) {
  static const std::map<std::string, std::vector<std::string>, std::less<>> keys = {
      {"mine", {"repos", "keywords", "max_files_per_commit"}},
      {"dataset",
       {"provider", "vectors", "keep_comments", "window_len", "stride", "min_positive_tokens", "dedup", "negative_keep",
        "seed"}},
      {"embedding",
       {"train_ratio", "validation_ratio", "test_ratio", "seed", "keep_comments", "sg_dim", "sg_window", "sg_negatives",
        "sg_epochs", "sg_learning_rate", "sg_min_learning_rate", "sg_min_count"}},
      {"train",
       {"provider", "train_ratio", "validation_ratio", "test_ratio", "seed", "epochs", "batch_size", "hidden", "dropout",
        "learning_rate", "beta1", "beta2", "epsilon", "threshold", "patience"}},
      {"eval", {"train_ratio", "validation_ratio", "test_ratio", "seed"}},
      {"scan", {"scan", "scan_vectors"}},
      {"compare", {"truth", "sast"}},
  };
  const auto it = keys.find(stage);
  if (it == keys.end()) throw std::logic_error("unknown stage " + std::string(stage));
  return it->second;
}

std::string_view status_name(StageStatus s) {
  switch (s) {
    case StageStatus::Ran: return "ran";
    case StageStatus::Skipped: return "skipped";
    default: return "n/a";
  }
}

namespace {

class Runner {
 public:
  Runner(const PipelineConfig& config, std::ostream& log) : config_(config), dir_(config.workdir), log_(log) {}

  // `inputs` name -> sha256; `outputs` relative to the working directory.
  template <typename Fn>
  void stage(const std::string& name, bool applicable, const std::function<Json()>& inputs,
             const std::vector<std::string>& outputs, Fn&& body) {
    if (!applicable) {
      record(name, StageStatus::NotApplicable);
      return;
    }
    try {
      Json stamp_doc;
      stamp_doc["stage"] = name;
      stamp_doc["inputs"] = inputs();
      stamp_doc["config"] = snapshot(config_, stage_keys(name));
      const std::string stamp = io::sha256_hex(stamp_doc.dump());
      const fs::path stamp_path = dir_ / ".stamps" / (name + ".json");

      if (!upstream_ran_ && fresh(stamp_path, stamp, outputs)) {
        record(name, StageStatus::Skipped);
      } else {
        body();
        Json rec;
        rec["stamp"] = stamp;
        Json outs = Json::object();
        for (const auto& o : outputs) outs[o] = io::sha256_file(dir_ / o);
        rec["outputs"] = std::move(outs);
        io::write_file(stamp_path, rec.dump(2) + "\n");
        upstream_ran_ = true;
        record(name, StageStatus::Ran);
      }
      for (const auto& o : outputs) result_.artifacts.push_back({name, o, io::sha256_file(dir_ / o)});
    } catch (const Error& e) {
      throw Error(e.error_class(), "stage " + name + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorClass::Internal, "stage " + name + ": " + e.what());
    }
  }

  fs::path path(const std::string& rel) const { return dir_ / rel; }
  std::string hash(const std::string& rel) const { return io::sha256_file(dir_ / rel); }
  RunResult& result() { return result_; }

 private:
  bool fresh(const fs::path& stamp_path, const std::string& stamp, const std::vector<std::string>& outputs) const {
    std::error_code ec;
    if (!fs::exists(stamp_path, ec)) return false;
    Json rec;
    try {
      rec = Json::parse(io::read_file(stamp_path));
    } catch (const std::exception&) {
      return false;
    }
    if (rec.value("stamp", "") != stamp) return false;
    for (const auto& o : outputs) {
      if (!fs::exists(dir_ / o, ec)) return false;
      if (!rec["outputs"].contains(o) || rec["outputs"][o] != io::sha256_file(dir_ / o)) return false;
    }
    return true;
  }

  void record(const std::string& name, StageStatus s) {
    result_.stages.emplace_back(name, s);
    log_ << "[" << name << "] " << status_name(s) << "\n";
  }

  const PipelineConfig& config_;
  fs::path dir_;
  std::ostream& log_;
  bool upstream_ran_ = false;
  RunResult result_;
};

Json repo_inputs(const PipelineConfig& config) {
  Json j = Json::object();
  for (const auto& repo : miner::resolve_repositories(config.repos)) {
    const auto head = run_process({"git", "-C", repo.string(), "rev-parse", "HEAD"});
    j[repo.generic_string()] = head.exit_code == 0 ? head.out : "";
  }
  if (!config.keywords.empty()) j["keywords"] = io::sha256_file(config.keywords);
  return j;
}

}  // namespace

RunResult run_pipeline(const PipelineConfig& config, std::ostream& log) {
  config.validate();
  const bool external = config.provider() == providers::Kind::External;
  if (external && config.vectors.empty()) throw UsageError("the external provider needs vectors");
  if (external && !config.scan.empty() && config.scan_vectors.empty())
    throw UsageError("scanning with the external provider needs scan_vectors");
  if (!config.truth.empty() && config.scan.empty()) throw UsageError("truth is given but nothing is scanned");
  fs::create_directories(config.workdir);

  Runner run(config, log);
  const std::string changes = "changes.jsonl", changes_meta = "changes.meta.json";
  const std::string windows = "windows.jsonl", windows_meta = "windows.meta.json";
  const std::string table = "embedding.cvec", model = "model.vlsm", train_report = "train-report.json";
  const std::string eval_out = "eval.json", eval_txt = "eval.txt";
  const std::string scan_out = "scan-report.json", scan_txt = "scan-report.txt";
  const std::string cmp_txt = "comparison.txt", cmp_csv = "comparison.csv";

  run.stage("mine", true, [&] { return repo_inputs(config); }, {changes, changes_meta}, [&] {
    const auto mined = mine(config);
    miner::write_changes(run.path(changes), mined.changes);
    Json meta;
    meta["changes"] = mined.changes.size();
    meta["warnings"] = mined.warnings;
    meta["config"] = snapshot(config, stage_keys("mine"));
    io::write_file(run.path(changes_meta), meta.dump(2) + "\n");
  });

  auto vector_index = [&](const fs::path& p) { return providers::VectorIndex(cvec::load_vectors(p)); };
  std::optional<providers::VectorIndex> index;
  auto external_index = [&]() -> const providers::VectorIndex& {
    if (!index) index.emplace(vector_index(config.vectors));
    return *index;
  };
  auto vectors_hash = [&] { return Json(io::sha256_file(config.vectors)); };

  run.stage(
      "dataset", true,
      [&] {
        Json j{{"changes", run.hash(changes)}};
        if (external) j["vectors"] = vectors_hash();
        return j;
      },
      {windows, windows_meta},
      [&] {
        const auto built = build_dataset(miner::read_changes(run.path(changes)), config,
                                         external ? &external_index() : nullptr);
        dataset::write_windows(run.path(windows), built.windows);
        io::write_file(run.path(windows_meta), built.meta_json);
      });

  std::optional<dataset::DatasetSplit> split;
  auto get_split = [&]() -> const dataset::DatasetSplit& {
    if (!split) split = split_dataset(dataset::read_windows(run.path(windows)), config);
    return *split;
  };

  run.stage(
      "embedding", !external, [&] { return Json{{"changes", run.hash(changes)}, {"windows", run.hash(windows)}}; },
      {table}, [&] {
        cvec::store_table(train_embedding(miner::read_changes(run.path(changes)), get_split(), config),
                          run.path(table));
      });

  std::optional<embed::EmbeddingTable> loaded_table;
  auto source = [&]() -> providers::VectorSource {
    if (external) return providers::VectorSource::external(external_index());
    if (!loaded_table) loaded_table = cvec::load_table(run.path(table));
    return providers::VectorSource::skipgram(*loaded_table, lex_options(config));
  };
  auto vectors_input = [&] { return external ? vectors_hash() : Json(run.hash(table)); };

  run.stage(
      "train", true, [&] { return Json{{"windows", run.hash(windows)}, {"vectors", vectors_input()}}; },
      {model, train_report}, [&] {
        const auto trained = train_model(get_split(), source(), config, external ? "" : run.hash(table));
        model_io::save(trained.model, run.path(model));
        io::write_file(run.path(train_report), train_report_json(trained.report));
      });

  run.stage(
      "eval", true,
      [&] {
        return Json{{"model", run.hash(model)}, {"windows", run.hash(windows)}, {"vectors", vectors_input()}};
      },
      {eval_out, eval_txt}, [&] {
        const auto result = evaluate(model_io::load(run.path(model)), get_split(), source());
        io::write_file(run.path(eval_out), eval_json(result));
        io::write_file(run.path(eval_txt), eval_text(result));
      });

  const bool scanning = !config.scan.empty();
  std::vector<std::string> scan_files;
  run.stage(
      "scan", scanning,
      [&] {
        scan_files = scan::collect_python_files({config.scan});
        Json files = Json::object();
        for (const auto& f : scan_files) {
          std::error_code ec;
          files[f] = fs::is_regular_file(f, ec) ? io::sha256_file(f) : "";
        }
        Json j{{"model", run.hash(model)}, {"files", std::move(files)}};
        j["vectors"] = external ? Json(io::sha256_file(config.scan_vectors)) : Json(run.hash(table));
        return j;
      },
      {scan_out, scan_txt}, [&] {
        const auto m = model_io::load(run.path(model));
        std::optional<providers::VectorIndex> scan_index;
        providers::VectorSource src = source();
        if (external) {
          scan_index.emplace(vector_index(config.scan_vectors));
          src = providers::VectorSource::external(*scan_index);
        } else {
          scan::check_compatibility(m, src, run.hash(table));
        }
        const auto report = scan::scan_files(scan_files, m, model_io::model_id(run.path(model)), src, config.jobs);
        io::write_file(run.path(scan_out), scan::to_json(report));
        io::write_file(run.path(scan_txt), scan::to_text(report));
      });

  run.stage(
      "compare", scanning && !config.truth.empty(),
      [&] {
        Json j{{"scan", run.hash(scan_out)}, {"truth", io::sha256_file(config.truth)}};
        Json s = Json::array();
        for (const auto& x : config.sast) s.push_back(io::sha256_file(x.path));
        j["sast"] = std::move(s);
        return j;
      },
      {cmp_txt, cmp_csv}, [&] {
        const auto table_out =
            compare(scan::from_json(io::read_file(run.path(scan_out))), config.truth, config.sast);
        io::write_file(run.path(cmp_txt), table_out.text);
        io::write_file(run.path(cmp_csv), table_out.csv);
      });

  auto& result = run.result();
  Json summary;
  summary["schema"] = "vulnhound-summary/1";
  summary["config"] = Json::parse(config.snapshot_json());
  Json arts = Json::array();
  for (const auto& a : result.artifacts) arts.push_back({{"stage", a.stage}, {"path", a.path}, {"sha256", a.sha256}});
  summary["artifacts"] = std::move(arts);
  result.summary_json = summary.dump(2) + "\n";
  io::write_file(run.path("summary.json"), result.summary_json);
  return result;
}

}  // namespace vulnhound::pipeline
