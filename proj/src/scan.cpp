#include "vulnhound/scan.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <thread>

#include "json.hpp"
#include "vulnhound/evalkit.hpp"
#include "vulnhound/io.hpp"
#include "vulnhound/rnn.hpp"

namespace vulnhound::scan {

namespace {

using Json = nlohmann::ordered_json;

constexpr const char* kSchema = "vulnhound-scan/1";

// 1-based line holding byte `offset`.
std::size_t line_of(const std::vector<Span>& lines, std::uint64_t offset) {
  const auto it = std::upper_bound(lines.begin(), lines.end(), offset,
                                   [](std::uint64_t off, const Span& l) { return off < l.start; });
  return static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - lines.begin(), 1));
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::vector<std::string> collect_python_files(const std::vector<fs::path>& paths) {
  std::vector<std::string> out;
  for (const auto& root : paths) {
    std::error_code ec;
    if (fs::is_regular_file(root, ec)) {
      out.push_back(evalkit::normalize_path(root.generic_string()));
      continue;
    }
    if (!fs::is_directory(root, ec)) throw UsageError("scan path does not exist: " + root.string());
    for (auto it = fs::recursive_directory_iterator(root, fs::directory_options::skip_permission_denied, ec);
         !ec && it != fs::recursive_directory_iterator(); it.increment(ec)) {
      if (it->is_directory() && it->path().filename().string().starts_with(".")) {
        it.disable_recursion_pending();
        continue;
      }
      if (it->path().extension() == ".py" && !it->is_directory())
        out.push_back(evalkit::normalize_path(it->path().generic_string()));
    }
    if (ec) throw DataError("cannot walk " + root.string() + ": " + ec.message());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void check_compatibility(const model_io::Model& model, const providers::VectorSource& source,
                         const std::string& table_sha256) {
  const auto kind = providers::kind_name(source.kind());
  if (model.meta.provider != kind)
    throw DataError("model was trained on " + model.meta.provider + " vectors but " + std::string(kind) +
                    " vectors were supplied");
  if (static_cast<std::uint32_t>(model.params.dim()) != source.dim())
    throw DataError("model expects dim " + std::to_string(model.params.dim()) + " but the vectors have dim " +
                    std::to_string(source.dim()));
  if (!table_sha256.empty() && !model.meta.table_sha256.empty() && table_sha256 != model.meta.table_sha256)
    throw DataError("embedding table differs from the one the model was trained with");
}

FileReport scan_file(const std::string& path, const model_io::Model& model, const providers::VectorSource& source) {
  FileReport r;
  r.path = path;
  try {
    const std::string text = io::read_file(path);
    const auto stream = source.stream_for(path, text);
    const std::vector<std::uint8_t> zeros(stream.tokens.size(), 0);
    const auto windows = dataset::make_windows(stream, zeros, model.meta.window, {"", "", path, 0});
    r.window_count = windows.size();
    if (windows.empty()) return r;
    const auto samples = source.samples(windows);
    const auto probs = rnn::predict_probabilities(model.params, samples);
    const auto lines = pylex::line_spans(text);
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const double p = probs[i];
      if (!r.max_probability || p > *r.max_probability) r.max_probability = p;
      if (p < model.threshold) continue;
      const auto& spans = windows[i].token_spans;
      FlaggedWindow f;
      f.span = {spans.front().start, spans.back().end};
      f.first_line = line_of(lines, f.span.start);
      f.last_line = line_of(lines, f.span.end > f.span.start ? f.span.end - 1 : f.span.start);
      f.probability = p;
      r.flagged.push_back(f);
    }
    r.verdict = !r.flagged.empty();
  } catch (const Error& e) {
    r = FileReport{};
    r.path = path;
    r.error = e.what();
  }
  return r;
}

ScanReport scan_files(const std::vector<std::string>& files, const model_io::Model& model, const std::string& model_id,
                      const providers::VectorSource& source, std::size_t jobs) {
  check_compatibility(model, source);
  ScanReport report;
  report.model_id = model_id;
  report.provider = model.meta.provider;
  report.threshold = model.threshold;
  report.window = model.meta.window;
  report.config_json = model.meta.config_json;

  std::vector<std::string> sorted = files;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  report.files.resize(sorted.size());

  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, std::max<std::size_t>(sorted.size(), 1));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < sorted.size();) report.files[i] = scan_file(sorted[i], model, source);
  };
  std::vector<std::jthread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(work);
  work();
  pool.clear();
  return report;
}

std::string to_json(const ScanReport& report) {
  Json j;
  j["schema"] = kSchema;
  j["model_id"] = report.model_id;
  j["provider"] = report.provider;
  j["threshold"] = report.threshold;
  j["window"] = {{"window_len", report.window.window_len},
                 {"stride", report.window.stride},
                 {"min_positive_tokens", report.window.min_positive_tokens}};
  j["config"] = Json::parse(report.config_json);
  std::size_t flagged = 0, errors = 0;
  Json files = Json::array();
  for (const auto& f : report.files) {
    Json o;
    o["path"] = f.path;
    if (!f.ok()) {
      ++errors;
      o["status"] = "error";
      o["error"] = f.error;
      files.push_back(std::move(o));
      continue;
    }
    flagged += f.verdict;
    o["status"] = "ok";
    o["verdict"] = f.verdict;
    o["max_probability"] = f.max_probability ? Json(*f.max_probability) : Json(nullptr);
    o["windows"] = f.window_count;
    Json ws = Json::array();
    for (const auto& w : f.flagged)
      ws.push_back({{"start", w.span.start},
                    {"end", w.span.end},
                    {"first_line", w.first_line},
                    {"last_line", w.last_line},
                    {"probability", w.probability}});
    o["flagged"] = std::move(ws);
    files.push_back(std::move(o));
  }
  j["summary"] = {{"files", report.files.size()}, {"flagged_files", flagged}, {"errors", errors}};
  j["files"] = std::move(files);
  return j.dump(2) + "\n";
}

ScanReport from_json(std::string_view text) {
  try {
    const auto j = Json::parse(text);
    if (j.at("schema") != kSchema) throw DataError("unsupported scan report schema");
    ScanReport r;
    r.model_id = j.at("model_id").get<std::string>();
    r.provider = j.at("provider").get<std::string>();
    r.threshold = j.at("threshold").get<double>();
    r.window.window_len = j.at("window").at("window_len").get<std::size_t>();
    r.window.stride = j.at("window").at("stride").get<std::size_t>();
    r.window.min_positive_tokens = j.at("window").at("min_positive_tokens").get<std::size_t>();
    r.config_json = j.at("config").dump();
    for (const auto& o : j.at("files")) {
      FileReport f;
      f.path = o.at("path").get<std::string>();
      if (o.at("status") == "error") {
        f.error = o.at("error").get<std::string>();
        r.files.push_back(std::move(f));
        continue;
      }
      f.verdict = o.at("verdict").get<bool>();
      if (!o.at("max_probability").is_null()) f.max_probability = o.at("max_probability").get<double>();
      f.window_count = o.at("windows").get<std::size_t>();
      for (const auto& w : o.at("flagged"))
        f.flagged.push_back({{w.at("start").get<std::uint64_t>(), w.at("end").get<std::uint64_t>()},
                             w.at("first_line").get<std::size_t>(),
                             w.at("last_line").get<std::size_t>(),
                             w.at("probability").get<double>()});
      r.files.push_back(std::move(f));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed scan report: ") + e.what());
  }
}

std::string to_text(const ScanReport& report) {
  std::string out = "model " + report.model_id.substr(0, 12) + "  provider " + report.provider + "  threshold " +
                    fixed(report.threshold, 3) + "\n";
  std::size_t flagged = 0, errors = 0;
  for (const auto& f : report.files) {
    if (!f.ok()) {
      ++errors;
      out += "ERROR " + f.path + ": " + f.error + "\n";
      continue;
    }
    flagged += f.verdict;
    out += std::string(f.verdict ? "FLAG  " : "ok    ") + f.path;
    if (f.max_probability) out += "  max " + fixed(*f.max_probability, 4);
    out += "  (" + std::to_string(f.flagged.size()) + " of " + std::to_string(f.window_count) + " windows)\n";
    for (const auto& w : f.flagged)
      out += "      lines " + std::to_string(w.first_line) + "-" + std::to_string(w.last_line) + "  p=" +
             fixed(w.probability, 4) + "  bytes [" + std::to_string(w.span.start) + ", " + std::to_string(w.span.end) +
             ")\n";
  }
  out += std::to_string(report.files.size()) + " files, " + std::to_string(flagged) + " flagged, " +
         std::to_string(errors) + " errors\n";
  return out;
}

std::vector<std::pair<std::string, bool>> verdicts(const ScanReport& report) {
  std::vector<std::pair<std::string, bool>> out;
  out.reserve(report.files.size());
  // A file that could not be scanned was not flagged.
  for (const auto& f : report.files) out.emplace_back(f.path, f.ok() && f.verdict);
  return out;
}

}  // namespace vulnhound::scan
