#include "vulnhound/model_io.hpp"

#include <bit>
#include <cmath>

#include "json.hpp"
#include "vulnhound/io.hpp"

namespace vulnhound::model_io {

namespace {

constexpr std::string_view kMagic = "VLSM";
constexpr std::string_view kMetaMagic = "META";
constexpr rnn::Gate kGateOrder[] = {rnn::kInput, rnn::kForget, rnn::kOutput, rnn::kCandidate};

template <typename T>
void put(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

template <typename M>
void put_rows(std::string& out, const M& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
}

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}
  bool done() const { return pos_ == b_.size(); }
  std::string_view bytes(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n)
      throw ModelFormatError("model file truncated at byte " + std::to_string(pos_) + " while reading " + what);
    const auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T get(const char* what) {
    const auto s = bytes(sizeof(T), what);
    T v = 0;
    for (std::size_t i = sizeof(T); i-- > 0;) v = static_cast<T>((v << 8) | static_cast<unsigned char>(s[i]));
    return v;
  }
  double f64(const char* what) {
    const std::size_t at = pos_;
    const double v = std::bit_cast<double>(get<std::uint64_t>(what));
    if (!std::isfinite(v)) throw ModelFormatError("non-finite " + std::string(what) + " at byte " + std::to_string(at));
    return v;
  }
  template <typename M>
  void rows(M&& m, const char* what) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64(what);
  }

 private:
  std::string_view b_;
  std::size_t pos_ = 0;
};

std::string metadata_json(const Metadata& m) {
  nlohmann::ordered_json j;
  j["window_len"] = m.window.window_len;
  j["stride"] = m.window.stride;
  j["min_positive_tokens"] = m.window.min_positive_tokens;
  j["provider"] = m.provider;
  j["table_sha256"] = m.table_sha256;
  j["config"] = nlohmann::ordered_json::parse(m.config_json);
  return j.dump();
}

Metadata parse_metadata(std::string_view text) {
  try {
    const auto j = nlohmann::ordered_json::parse(text);
    Metadata m;
    m.window.window_len = j.at("window_len").get<std::size_t>();
    m.window.stride = j.at("stride").get<std::size_t>();
    m.window.min_positive_tokens = j.at("min_positive_tokens").get<std::size_t>();
    m.window.validate();
    m.provider = j.at("provider").get<std::string>();
    if (m.provider != "skipgram" && m.provider != "external")
      throw ModelFormatError("unknown provider '" + m.provider + "' in model metadata");
    m.table_sha256 = j.at("table_sha256").get<std::string>();
    m.config_json = j.at("config").dump();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("malformed model metadata: ") + e.what());
  } catch (const UsageError& e) {
    throw ModelFormatError(std::string("invalid window spec in model metadata: ") + e.what());
  }
}

}  // namespace

std::string encode(const Model& model) {
  const auto& p = model.params;
  if (!p.all_finite()) throw DataError("refusing to save non-finite parameters");
  rnn::validate_threshold(model.threshold);
  std::string out(kMagic);
  put(out, kVersion);
  put(out, static_cast<std::uint32_t>(p.dim()));
  put(out, static_cast<std::uint32_t>(p.hidden()));
  put_f64(out, model.threshold);
  for (rnn::Gate g : kGateOrder) {
    put_rows(out, p.W_gate(g));
    put_rows(out, p.U_gate(g));
    put_rows(out, p.b_gate(g));
  }
  put_rows(out, p.w);
  put_f64(out, p.bias);
  const std::string meta = metadata_json(model.meta);
  out.append(kMetaMagic);
  put(out, static_cast<std::uint32_t>(meta.size()));
  out.append(meta);
  return out;
}

Model decode(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || r.bytes(4, "magic") != kMagic) throw ModelFormatError("not a model file (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) throw ModelFormatError("unsupported model version " + std::to_string(version));
  const auto dim = r.get<std::uint32_t>("dim");
  const auto hidden = r.get<std::uint32_t>("hidden");
  if (dim == 0 || hidden == 0) throw ModelFormatError("model dim and hidden must be positive");
  // Reject impossible shapes before allocating.
  const std::uint64_t values = 4ull * hidden * (dim + hidden + 1) + hidden + 1;
  if (values * 8 > bytes.size()) throw ModelFormatError("model file too short for its declared shape");

  Model m;
  m.threshold = r.f64("threshold");
  if (!(m.threshold > 0 && m.threshold < 1)) throw ModelFormatError("threshold outside (0, 1)");
  m.params = rnn::LstmParams<double>::zeros(dim, hidden);
  for (rnn::Gate g : kGateOrder) {
    r.rows(m.params.W_gate(g), "W");
    r.rows(m.params.U_gate(g), "U");
    r.rows(m.params.b_gate(g), "b");
  }
  r.rows(m.params.w, "w");
  m.params.bias = r.f64("bias");
  if (r.bytes(4, "metadata magic") != kMetaMagic) throw ModelFormatError("missing metadata section");
  const auto len = r.get<std::uint32_t>("metadata length");
  m.meta = parse_metadata(r.bytes(len, "metadata"));
  if (!r.done()) throw ModelFormatError("unexpected bytes after metadata");
  return m;
}

void save(const Model& model, const std::filesystem::path& path) { io::write_file(path, encode(model)); }

Model load(const std::filesystem::path& path) { return decode(io::read_file(path)); }

std::string model_id(const std::filesystem::path& path) { return io::sha256_file(path); }

}  // namespace vulnhound::model_io
