// vulnhound: mine fix commits, build windows, train, scan, compare.

#include <cstdlib>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "vulnhound/cvec.hpp"
#include "vulnhound/io.hpp"
#include "vulnhound/pipeline.hpp"

namespace fs = std::filesystem;
using namespace vulnhound;
using config::PipelineConfig;

namespace {

std::string flag_name(const std::string& key) {
  std::string out = key;
  for (auto& c : out)
    if (c == '_') c = '-';
  return "--" + out;
}

fs::path or_default(const std::string& given, const PipelineConfig& c, const char* name) {
  return given.empty() ? c.workdir / name : fs::path(given);
}

fs::path sidecar(fs::path windows) { return windows.replace_extension(".meta.json"); }

// `vectors` names a skip-gram table (a CVEC file with a vocabulary section)
// or external sequences, matching the selected provider.
providers::VectorSource vector_source(const PipelineConfig& c, const fs::path& vectors,
                                      std::optional<embed::EmbeddingTable>& table,
                                      std::optional<providers::VectorIndex>& index) {
  const bool external = c.provider() == providers::Kind::External;
  if (external && vectors.empty()) throw UsageError("the external provider needs vectors");
  const fs::path path = vectors.empty() ? c.workdir / "embedding.cvec" : vectors;
  const std::string bytes = io::read_file(path);
  if (cvec::has_vocabulary(bytes) == external)
    throw UsageError(path.string() + (external ? " is a skip-gram table but provider is external"
                                               : " holds external vectors but provider is skipgram"));
  if (external) {
    index.emplace(cvec::decode(bytes));
    return providers::VectorSource::external(*index);
  }
  table.emplace(cvec::decode_table(bytes));
  return providers::VectorSource::skipgram(*table, {c.keep_comments});
}

std::string table_hash(const PipelineConfig& c) {
  if (c.provider() == providers::Kind::External) return {};
  return io::sha256_file(c.vectors.empty() ? c.workdir / "embedding.cvec" : c.vectors);
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") std::cout << text;
  else io::write_file(path, text);
}

int exit_code(ErrorClass c) {
  switch (c) {
    case ErrorClass::Usage: return 1;
    case ErrorClass::Data: return 2;
    default: return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SQL-injection detection for Python: mining, training, scanning, comparison"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  app.add_option("--config", config_file, "flat TOML file; every key matches a flag below");
  std::map<std::string, std::vector<std::string>> flag_values;
  for (const auto& key : config::keys()) {
    auto* opt = app.add_option(flag_name(key.name), flag_values[key.name], key.help)->group("Config keys");
    if (key.list) opt->allow_extra_args(false)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    else opt->expected(1)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }

  std::string in_changes, in_windows, in_model, in_report, out;
  std::vector<std::string> scan_paths;
  auto* mine = app.add_subcommand("mine", "mine fix commits into changes.jsonl");
  mine->add_option("--out", out, "changes file (default <workdir>/changes.jsonl)");

  auto* build = app.add_subcommand("build-dataset", "label and window mined changes");
  build->add_option("--changes", in_changes, "mined changes (default <workdir>/changes.jsonl)");
  build->add_option("--out", out, "windows file (default <workdir>/windows.jsonl); stats go to <out>.meta.json");

  auto* embed_cmd = app.add_subcommand("train-embedding", "train skip-gram vectors on the training partition");
  embed_cmd->add_option("--changes", in_changes, "mined changes");
  embed_cmd->add_option("--dataset", in_windows, "windows file (default <workdir>/windows.jsonl)");
  embed_cmd->add_option("--out", out, "table file (default <workdir>/embedding.cvec)");

  auto* export_cmd = app.add_subcommand("export-vectors", "write pre-images for the external vector exporter");
  export_cmd->add_option("--changes", in_changes, "mined changes");
  export_cmd->add_option("--out", out, "export directory (default <workdir>/export)");

  auto* train = app.add_subcommand("train", "train the LSTM classifier");
  train->add_option("--dataset", in_windows, "windows file (default <workdir>/windows.jsonl)");
  train->add_option("--out", out, "model file (default <workdir>/model.vlsm)");
  std::string report_out;
  train->add_option("--report", report_out, "training report (default <workdir>/train-report.json)");

  auto* scan_cmd = app.add_subcommand("scan", "scan Python files with a trained model");
  scan_cmd->add_option("paths", scan_paths, "files or directories (default: the scan key)");
  scan_cmd->add_option("--model", in_model, "model file (default <workdir>/model.vlsm)");
  scan_cmd->add_option("--out", out, "JSON report path ('-' for stdout); the text rendering goes to stdout");

  auto* eval_cmd = app.add_subcommand("eval", "score the model on the held-out test windows");
  eval_cmd->add_option("--dataset", in_windows, "windows file (default <workdir>/windows.jsonl)");
  eval_cmd->add_option("--model", in_model, "model file (default <workdir>/model.vlsm)");
  eval_cmd->add_option("--out", out, "JSON result path");

  auto* compare_cmd = app.add_subcommand("compare", "compare scan verdicts and SAST tools against ground truth");
  compare_cmd->add_option("--report", in_report, "scan report (default <workdir>/scan-report.json)");
  std::string csv_out;
  compare_cmd->add_option("--csv", csv_out, "also write the table as CSV");

  auto* pipeline_cmd = app.add_subcommand("pipeline", "run every stage, skipping the ones already up to date");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    config::Assignments flags;
    for (const auto& key : config::keys()) {
      const auto* opt = app.get_option(flag_name(key.name));
      if (opt->count() > 0) flags[key.name] = flag_values[key.name];
    }
    const auto file = config_file.empty() ? config::Assignments{} : config::read_toml(config_file);
    const char* env = std::getenv(config::kSeedEnv);
    PipelineConfig c = config::resolve(file, flags, env ? std::optional<std::string>(env) : std::nullopt);
    c.validate();
    const bool external = c.provider() == providers::Kind::External;

    const fs::path changes_path = or_default(in_changes, c, "changes.jsonl");
    const fs::path windows_path = or_default(in_windows, c, "windows.jsonl");
    const fs::path model_path = or_default(in_model, c, "model.vlsm");
    std::optional<embed::EmbeddingTable> table;
    std::optional<providers::VectorIndex> index;

    if (mine->parsed()) {
      const auto result = pipeline::mine(c);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      miner::write_changes(or_default(out, c, "changes.jsonl"), result.changes);
      std::cerr << result.changes.size() << " changes mined\n";
    } else if (build->parsed()) {
      std::optional<providers::VectorIndex> ext;
      if (external) {
        if (c.vectors.empty()) throw UsageError("the external provider needs vectors");
        ext.emplace(cvec::load_vectors(c.vectors));
      }
      const auto built = pipeline::build_dataset(miner::read_changes(changes_path), c, ext ? &*ext : nullptr);
      const fs::path dest = or_default(out, c, "windows.jsonl");
      dataset::write_windows(dest, built.windows);
      io::write_file(sidecar(dest), built.meta_json);
      std::cerr << built.windows.size() << " windows written\n";
    } else if (embed_cmd->parsed()) {
      if (external) throw UsageError("train-embedding applies to the skipgram provider only");
      const auto split = pipeline::split_dataset(dataset::read_windows(windows_path), c);
      cvec::store_table(pipeline::train_embedding(miner::read_changes(changes_path), split, c),
                        or_default(out, c, "embedding.cvec"));
    } else if (export_cmd->parsed()) {
      const fs::path dir = or_default(out, c, "export");
      const auto keys = pipeline::export_preimages(miner::read_changes(changes_path), dir);
      std::string list;
      for (const auto& k : keys) list += k + "\n";
      io::write_file(dir / "files.txt", list);
      std::cout << keys.size() << " pre-images written under " << dir.string() << "\n"
                << "Vector keys must equal the listed paths, so run the exporter from that directory:\n"
                << "  cd " << dir.string() << " && cbx-export --input files.txt --out vectors.cvec\n"
                << "then set provider = \"external\" and vectors = \"" << (dir / "vectors.cvec").string() << "\"\n";
    } else if (train->parsed()) {
      const auto split = pipeline::split_dataset(dataset::read_windows(windows_path), c);
      const auto source = vector_source(c, c.vectors, table, index);
      const auto trained = pipeline::train_model(split, source, c, table_hash(c));
      model_io::save(trained.model, or_default(out, c, "model.vlsm"));
      io::write_file(or_default(report_out, c, "train-report.json"), pipeline::train_report_json(trained.report));
      const auto& last = trained.report.epochs;
      if (!last.empty()) std::cerr << last.size() << " epochs, final training loss " << last.back().loss << "\n";
    } else if (scan_cmd->parsed()) {
      std::vector<fs::path> roots(scan_paths.begin(), scan_paths.end());
      if (roots.empty() && !c.scan.empty()) roots.push_back(c.scan);
      if (roots.empty()) throw UsageError("nothing to scan");
      const auto model = model_io::load(model_path);
      const auto source = vector_source(c, external ? c.scan_vectors : c.vectors, table, index);
      if (!external) scan::check_compatibility(model, source, table_hash(c));
      const auto report = scan::scan_files(scan::collect_python_files(roots), model, model_io::model_id(model_path),
                                           source, c.jobs);
      if (!out.empty()) write_or_print(out, scan::to_json(report));
      if (out != "-") std::cout << scan::to_text(report);
    } else if (eval_cmd->parsed()) {
      const auto split = pipeline::split_dataset(dataset::read_windows(windows_path), c);
      const auto model = model_io::load(model_path);
      const auto source = vector_source(c, c.vectors, table, index);
      const auto result = pipeline::evaluate(model, split, source);
      if (!out.empty()) io::write_file(out, pipeline::eval_json(result));
      std::cout << pipeline::eval_text(result);
    } else if (compare_cmd->parsed()) {
      if (c.truth.empty()) throw UsageError("compare needs a truth file");
      const auto report = scan::from_json(io::read_file(or_default(in_report, c, "scan-report.json")));
      const auto table_out = pipeline::compare(report, c.truth, c.sast);
      if (!csv_out.empty()) io::write_file(csv_out, table_out.csv);
      std::cout << table_out.text;
    } else if (pipeline_cmd->parsed()) {
      const auto result = pipeline::run_pipeline(c, std::cerr);
      std::cout << (c.workdir / "summary.json").string() << "\n";
      (void)result;
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
