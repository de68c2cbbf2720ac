#include "vulnhound/cvec.hpp"

#include <bit>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "vulnhound/io.hpp"

namespace vulnhound::cvec {

namespace {

constexpr std::string_view kMagic = "CVEC";
constexpr std::string_view kVocabMagic = "VOCB";

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  template <typename T>
  void le(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<char>(u & 0xFF));
      u = static_cast<U>(u >> 8);
    }
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void text(std::string_view s) {
    if (s.size() > UINT16_MAX) throw DataError("CVEC string longer than 65535 bytes");
    le(static_cast<std::uint16_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }
  std::size_t remaining() const { return b_.size() - pos_; }

  std::string_view bytes(std::size_t n, const char* what) {
    if (remaining() < n)
      throw FormatError(FormatErrorKind::Truncated, pos_, std::string("truncated while reading ") + what);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T le(const char* what) {
    const auto s = bytes(sizeof(T), what);
    std::make_unsigned_t<T> v = 0;
    for (std::size_t i = sizeof(T); i-- > 0;) v = static_cast<decltype(v)>((v << 8) | static_cast<unsigned char>(s[i]));
    return static_cast<T>(v);
  }
  float f32(const char* what) { return std::bit_cast<float>(le<std::uint32_t>(what)); }
  double f64(const char* what) { return std::bit_cast<double>(le<std::uint64_t>(what)); }
  std::string text(const char* what) {
    const auto len = le<std::uint16_t>(what);
    const std::size_t at = pos_;
    std::string s(bytes(len, what));
    try {
      pylex::validate_utf8(s);
    } catch (const EncodingError& e) {
      throw FormatError(FormatErrorKind::InvalidText, at + e.offset(), std::string(what) + " is not UTF-8");
    }
    return s;
  }

 private:
  std::string_view b_;
  std::size_t pos_ = 0;
};

struct Header {
  std::uint32_t dim;
  std::uint32_t count;
};

Header read_header(Reader& r) {
  if (r.remaining() < 4 || r.bytes(4, "magic") != kMagic) throw FormatError(FormatErrorKind::BadMagic, 0, "bad magic");
  const std::size_t version_at = r.offset();
  const auto version = r.le<std::uint32_t>("version");
  if (version != kVersion)
    throw FormatError(FormatErrorKind::VersionMismatch, version_at,
                      "unsupported version " + std::to_string(version));
  Header h{};
  h.dim = r.le<std::uint32_t>("dim");
  h.count = r.le<std::uint32_t>("sequence count");
  return h;
}

std::vector<embed::VectorSequence> read_sequences(Reader& r, const Header& h) {
  std::vector<embed::VectorSequence> seqs;
  for (std::uint32_t s = 0; s < h.count; ++s) {
    embed::VectorSequence seq;
    seq.dim = h.dim;
    seq.path = r.text("path");
    const auto n = r.le<std::uint32_t>("entry count");
    // Each entry needs at least 18 + 4*dim bytes; reject impossible counts early.
    if (static_cast<std::uint64_t>(n) * (18 + 4ull * h.dim) > r.remaining())
      throw FormatError(FormatErrorKind::Truncated, r.offset(), "entry count exceeds remaining bytes");
    if (h.dim == 0 && n > 0) throw FormatError(FormatErrorKind::DimMismatch, 8, "dim 0 with non-empty entries");
    seq.entries.reserve(n);
    std::uint64_t last_start = 0;
    for (std::uint32_t e = 0; e < n; ++e) {
      embed::VectorEntry entry;
      entry.token = r.text("token");
      const std::size_t span_at = r.offset();
      entry.span.start = r.le<std::uint64_t>("span start");
      entry.span.end = r.le<std::uint64_t>("span end");
      if (entry.span.end < entry.span.start)
        throw FormatError(FormatErrorKind::InvalidSpan, span_at, "span end precedes start");
      if (e > 0 && entry.span.start < last_start)
        throw FormatError(FormatErrorKind::NonMonotoneSpans, span_at, "span starts decrease");
      last_start = entry.span.start;
      entry.vector.resize(h.dim);
      for (std::uint32_t k = 0; k < h.dim; ++k) {
        const std::size_t at = r.offset();
        const float v = r.f32("vector");
        if (!std::isfinite(v)) throw FormatError(FormatErrorKind::NonFiniteVector, at, "non-finite vector component");
        entry.vector[k] = v;
      }
      seq.entries.push_back(std::move(entry));
    }
    seqs.push_back(std::move(seq));
  }
  return seqs;
}

embed::EmbeddingTable read_vocabulary(Reader& r, std::uint32_t dim) {
  embed::EmbeddingTable table;
  const auto words = r.le<std::uint32_t>("word count");
  if (words == 0 || static_cast<std::uint64_t>(words) * (10 + 16ull * dim) > r.remaining())
    throw FormatError(FormatErrorKind::Truncated, r.offset(), "vocabulary size exceeds remaining bytes");
  for (std::uint32_t i = 0; i < words; ++i) {
    table.words.push_back(r.text("word"));
    table.counts.push_back(r.le<std::uint64_t>("word count"));
  }
  for (embed::RowMatrix* m : {&table.input, &table.output}) {
    m->resize(words, dim);
    for (std::uint32_t i = 0; i < words; ++i) {
      for (std::uint32_t k = 0; k < dim; ++k) {
        const std::size_t at = r.offset();
        const double v = r.f64("table vector");
        if (!std::isfinite(v)) throw FormatError(FormatErrorKind::NonFiniteVector, at, "non-finite table entry");
        (*m)(i, k) = v;
      }
    }
  }
  table.rebuild_index();
  return table;
}

void write_header(Writer& w, std::uint32_t dim, std::uint32_t count) {
  w.bytes(kMagic);
  w.le(kVersion);
  w.le(dim);
  w.le(count);
}

}  // namespace

std::string_view kind_name(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::BadMagic: return "bad-magic";
    case FormatErrorKind::VersionMismatch: return "version-mismatch";
    case FormatErrorKind::Truncated: return "truncated";
    case FormatErrorKind::NonFiniteVector: return "non-finite-vector";
    case FormatErrorKind::NonMonotoneSpans: return "non-monotone-spans";
    case FormatErrorKind::InvalidSpan: return "invalid-span";
    case FormatErrorKind::InvalidText: return "invalid-text";
    case FormatErrorKind::DimMismatch: return "dim-mismatch";
    case FormatErrorKind::TrailingBytes: return "trailing-bytes";
  }
  return "?";
}

FormatError::FormatError(FormatErrorKind kind, std::size_t offset, const std::string& detail)
    : DataError("CVEC " + std::string(kind_name(kind)) + " at byte " + std::to_string(offset) + ": " + detail),
      kind_(kind),
      offset_(offset) {}

std::string encode(std::span<const embed::VectorSequence> sequences) {
  const std::uint32_t dim = sequences.empty() ? 0 : sequences.front().dim;
  Writer w;
  write_header(w, dim, static_cast<std::uint32_t>(sequences.size()));
  for (const auto& seq : sequences) {
    if (seq.dim != dim) throw DataError("sequences disagree on dim: " + seq.path);
    w.text(seq.path);
    w.le(static_cast<std::uint32_t>(seq.entries.size()));
    std::uint64_t last_start = 0;
    for (const auto& e : seq.entries) {
      if (e.vector.size() != static_cast<Eigen::Index>(dim))
        throw DataError("entry vector length differs from dim in " + seq.path);
      if (e.span.end < e.span.start || e.span.start < last_start)
        throw DataError("entry spans are not monotone in " + seq.path);
      if (!e.vector.allFinite()) throw DataError("non-finite vector in " + seq.path);
      last_start = e.span.start;
      w.text(e.token);
      w.le(e.span.start);
      w.le(e.span.end);
      for (Eigen::Index k = 0; k < e.vector.size(); ++k) w.f32(e.vector[k]);
    }
  }
  return w.take();
}

std::vector<embed::VectorSequence> decode(std::string_view bytes) {
  Reader r(bytes);
  const Header h = read_header(r);
  auto seqs = read_sequences(r, h);
  if (!r.done()) {
    const std::size_t at = r.offset();
    if (r.remaining() < 4 || r.bytes(4, "section") != kVocabMagic)
      throw FormatError(FormatErrorKind::TrailingBytes, at, "unexpected bytes after last sequence");
    (void)read_vocabulary(r, h.dim);
    if (!r.done()) throw FormatError(FormatErrorKind::TrailingBytes, r.offset(), "unexpected bytes after vocabulary");
  }
  return seqs;
}

std::string encode_table(const embed::EmbeddingTable& table) {
  Writer w;
  const auto dim = static_cast<std::uint32_t>(table.dim());
  write_header(w, dim, 0);
  w.bytes(kVocabMagic);
  w.le(static_cast<std::uint32_t>(table.size()));
  for (std::size_t i = 0; i < table.size(); ++i) {
    w.text(table.words[i]);
    w.le(table.counts[i]);
  }
  for (const embed::RowMatrix* m : {&table.input, &table.output})
    for (Eigen::Index i = 0; i < m->rows(); ++i)
      for (Eigen::Index k = 0; k < m->cols(); ++k) w.f64((*m)(i, k));
  return w.take();
}

embed::EmbeddingTable decode_table(std::string_view bytes) {
  Reader r(bytes);
  const Header h = read_header(r);
  (void)read_sequences(r, h);
  const std::size_t at = r.offset();
  if (r.remaining() < 4 || r.bytes(4, "section") != kVocabMagic)
    throw FormatError(FormatErrorKind::Truncated, at, "missing vocabulary section");
  auto table = read_vocabulary(r, h.dim);
  if (!r.done()) throw FormatError(FormatErrorKind::TrailingBytes, r.offset(), "unexpected bytes after vocabulary");
  return table;
}

bool has_vocabulary(std::string_view bytes) {
  Reader r(bytes);
  const Header h = read_header(r);
  (void)read_sequences(r, h);
  return r.remaining() >= 4 && bytes.substr(r.offset(), 4) == kVocabMagic;
}

std::string encode_jsonl(std::span<const embed::VectorSequence> sequences) {
  std::string out;
  for (const auto& seq : sequences) {
    nlohmann::ordered_json j;
    j["path"] = seq.path;
    j["provider"] = seq.provider;
    j["dim"] = seq.dim;
    auto entries = nlohmann::ordered_json::array();
    for (const auto& e : seq.entries) {
      nlohmann::ordered_json je;
      je["token"] = e.token;
      je["span"] = {e.span.start, e.span.end};
      je["vector"] = std::vector<float>(e.vector.data(), e.vector.data() + e.vector.size());
      entries.push_back(std::move(je));
    }
    j["entries"] = std::move(entries);
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<embed::VectorSequence> decode_jsonl(std::string_view text) {
  std::vector<embed::VectorSequence> seqs;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      embed::VectorSequence seq;
      seq.path = j.at("path").get<std::string>();
      seq.provider = j.value("provider", std::string("external"));
      seq.dim = j.at("dim").get<std::uint32_t>();
      for (const auto& je : j.at("entries")) {
        embed::VectorEntry e;
        e.token = je.at("token").get<std::string>();
        e.span = {je.at("span").at(0).get<std::uint64_t>(), je.at("span").at(1).get<std::uint64_t>()};
        const auto v = je.at("vector").get<std::vector<float>>();
        if (v.size() != seq.dim) throw DataError("vector length differs from dim in " + seq.path);
        e.vector = Eigen::Map<const Eigen::VectorXf>(v.data(), static_cast<Eigen::Index>(v.size()));
        seq.entries.push_back(std::move(e));
      }
      seqs.push_back(std::move(seq));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed vector JSONL: ") + e.what());
    }
  }
  // Re-validate through the binary codec so both formats share one rule set.
  auto checked = decode(encode(seqs));
  for (std::size_t i = 0; i < checked.size(); ++i) checked[i].provider = seqs[i].provider;
  return checked;
}

std::vector<embed::VectorSequence> load_vectors(const std::filesystem::path& path, FileFormat format) {
  const std::string bytes = io::read_file(path);
  return format == FileFormat::Binary ? decode(bytes) : decode_jsonl(bytes);
}

void store_vectors(std::span<const embed::VectorSequence> sequences, const std::filesystem::path& path,
                   FileFormat format) {
  io::write_file(path, format == FileFormat::Binary ? encode(sequences) : encode_jsonl(sequences));
}

embed::EmbeddingTable load_table(const std::filesystem::path& path) { return decode_table(io::read_file(path)); }

void store_table(const embed::EmbeddingTable& table, const std::filesystem::path& path) {
  io::write_file(path, encode_table(table));
}

}  // namespace vulnhound::cvec
