#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vulnhound/config.hpp"
#include "vulnhound/dataset.hpp"
#include "vulnhound/embed.hpp"
#include "vulnhound/evalkit.hpp"
#include "vulnhound/miner.hpp"
#include "vulnhound/model_io.hpp"
#include "vulnhound/providers.hpp"
#include "vulnhound/rnn.hpp"
#include "vulnhound/scan.hpp"

// The stages behind the subcommands, and the staged end-to-end run.
namespace vulnhound::pipeline {

namespace fs = std::filesystem;
using config::PipelineConfig;

miner::MineResult mine(const PipelineConfig& config);

struct BuiltDataset {
  std::vector<dataset::LabeledWindow> windows;
  std::string meta_json;  // counts, warnings and the config snapshot
};

// Windows every mined change (through the external vectors when given),
// then dedups and downsamples negatives.
BuiltDataset build_dataset(const std::vector<miner::MinedChange>& changes, const PipelineConfig& config,
                           const providers::VectorIndex* external = nullptr);

// Writes each pre-image to `dir/<change_key>` for the external exporter and
// returns the keys in mining order. The exporter must emit sequences under
// these same keys.
std::vector<std::string> export_preimages(const std::vector<miner::MinedChange>& changes, const fs::path& dir);

// Seeded repository-level split of a built dataset.
dataset::DatasetSplit split_dataset(std::vector<dataset::LabeledWindow> windows, const PipelineConfig& config);

// Skip-gram over the pre-images that contributed training windows.
embed::EmbeddingTable train_embedding(const std::vector<miner::MinedChange>& changes,
                                      const dataset::DatasetSplit& split, const PipelineConfig& config);

struct TrainedModel {
  model_io::Model model;
  rnn::TrainReport report;
};

TrainedModel train_model(const dataset::DatasetSplit& split, const providers::VectorSource& source,
                         const PipelineConfig& config, const std::string& table_sha256);

std::string train_report_json(const rnn::TrainReport& report);

struct EvalResult {
  std::size_t windows = 0;
  evalkit::Confusion confusion;
  evalkit::Metrics metrics;
  double loss = 0;
};

// Window-level scores on the held-out test partition.
EvalResult evaluate(const model_io::Model& model, const dataset::DatasetSplit& split,
                    const providers::VectorSource& source);
std::string eval_json(const EvalResult& result);
std::string eval_text(const EvalResult& result);

// Model row first, then each SAST tool, all against the ground truth.
evalkit::ComparisonTable compare(const scan::ScanReport& report, const fs::path& truth,
                                 const std::vector<config::SastInput>& sast);

// Config keys each stage depends on.
const std::vector<std::string>& stage_keys(std::string_view stage);

enum class StageStatus { Ran, Skipped, NotApplicable };
std::string_view status_name(StageStatus s);

struct Artifact {
  std::string stage;
  std::string path;  // relative to the working directory
  std::string sha256;
};

struct RunResult {
  std::vector<std::pair<std::string, StageStatus>> stages;
  std::vector<Artifact> artifacts;
  std::string summary_json;
};

// mine, dataset, embedding, train, eval, scan, compare. A stage is skipped
// when its recorded stamp (stage, input hashes, config keys) matches, its
// outputs still hash as recorded, and no upstream stage ran. Errors name the
// stage that failed.
RunResult run_pipeline(const PipelineConfig& config, std::ostream& log);

}  // namespace vulnhound::pipeline
