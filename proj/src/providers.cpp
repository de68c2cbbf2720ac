#include "vulnhound/providers.hpp"

#include "vulnhound/evalkit.hpp"

namespace vulnhound::providers {

Kind parse_kind(std::string_view name) {
  if (name == "skipgram") return Kind::Skipgram;
  if (name == "external") return Kind::External;
  throw UsageError("unknown provider '" + std::string(name) + "' (expected skipgram or external)");
}

std::string_view kind_name(Kind kind) { return kind == Kind::Skipgram ? "skipgram" : "external"; }

std::string change_key(std::string_view repo, std::string_view commit, std::string_view path) {
  return evalkit::normalize_path(std::string(repo) + "/" + std::string(commit) + "/" + std::string(path));
}

std::string origin_key(const dataset::Origin& origin) {
  if (origin.repo.empty() && origin.commit.empty()) return evalkit::normalize_path(origin.path);
  return change_key(origin.repo, origin.commit, origin.path);
}

VectorIndex::VectorIndex(std::vector<embed::VectorSequence> sequences) : sequences_(std::move(sequences)) {
  for (std::size_t i = 0; i < sequences_.size(); ++i) {
    const auto& s = sequences_[i];
    if (i == 0) dim_ = s.dim;
    if (s.dim != dim_) throw DataError("vector sequences disagree on dim");
    if (!by_key_.emplace(evalkit::normalize_path(s.path), i).second)
      throw DataError("duplicate vector sequence for " + s.path);
  }
}

const embed::VectorSequence* VectorIndex::find(std::string_view key) const {
  const auto it = by_key_.find(evalkit::normalize_path(key));
  return it == by_key_.end() ? nullptr : &sequences_[it->second];
}

VectorSource VectorSource::skipgram(const embed::EmbeddingTable& table, pylex::LexOptions lex) {
  VectorSource s;
  s.lex_ = lex;
  s.kind_ = Kind::Skipgram;
  s.table_ = &table;
  return s;
}

VectorSource VectorSource::external(const VectorIndex& index) {
  VectorSource s;
  s.kind_ = Kind::External;
  s.index_ = &index;
  return s;
}

std::uint32_t VectorSource::dim() const {
  return kind_ == Kind::Skipgram ? static_cast<std::uint32_t>(table_->dim()) : index_->dim();
}

pylex::TokenStream VectorSource::stream_for(std::string_view key, std::string_view source) const {
  if (kind_ == Kind::Skipgram) return pylex::tokenize(source, lex_);
  const auto* seq = index_->find(key);
  if (!seq) throw DataError("no external vectors for " + std::string(key));
  auto stream = embed::as_token_stream(*seq);
  if (stream.source_len > source.size())
    throw DataError("external vectors for " + std::string(key) + " reach past the end of the file");
  stream.source_len = source.size();
  return stream;
}

rnn::Sample VectorSource::sample(const dataset::LabeledWindow& window) const {
  rnn::Sample s;
  s.label = window.label;
  const auto n = static_cast<Eigen::Index>(window.tokens.size());
  if (n == 0) throw DataError("window has no tokens");
  s.x.resize(dim(), n);
  if (kind_ == Kind::Skipgram) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto row = static_cast<Eigen::Index>(table_->lookup(window.tokens[static_cast<std::size_t>(i)]));
      s.x.col(i) = table_->input.row(row).transpose().cast<float>();
    }
    return s;
  }
  const std::string key = origin_key(window.origin);
  const auto* seq = index_->find(key);
  if (!seq) throw DataError("no external vectors for " + key);
  if (window.origin.start + window.tokens.size() > seq->entries.size())
    throw DataError("window at token " + std::to_string(window.origin.start) + " runs past the vectors of " + key);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& e = seq->entries[window.origin.start + static_cast<std::size_t>(i)];
    if (e.token != window.tokens[static_cast<std::size_t>(i)] || e.span != window.token_spans[static_cast<std::size_t>(i)])
      throw DataError("window tokens of " + key + " do not match its external vectors");
    s.x.col(i) = e.vector;
  }
  return s;
}

std::vector<rnn::Sample> VectorSource::samples(std::span<const dataset::LabeledWindow> windows) const {
  std::vector<rnn::Sample> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(sample(w));
  return out;
}

}  // namespace vulnhound::providers
