#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vulnhound/dataset.hpp"
#include "vulnhound/embed.hpp"
#include "vulnhound/rnn.hpp"

// Turns token windows into classifier input, either by skip-gram table lookup
// or by slicing externally computed per-token vectors.
namespace vulnhound::providers {

enum class Kind { Skipgram, External };

Kind parse_kind(std::string_view name);
std::string_view kind_name(Kind kind);

// Key of a mined pre-image inside an external vector file.
std::string change_key(std::string_view repo, std::string_view commit, std::string_view path);
// change_key for mined windows; the bare normalized path for scanned files.
std::string origin_key(const dataset::Origin& origin);

// External sequences addressed by normalized path.
class VectorIndex {
 public:
  explicit VectorIndex(std::vector<embed::VectorSequence> sequences);

  const embed::VectorSequence* find(std::string_view key) const;
  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return sequences_.size(); }

 private:
  std::vector<embed::VectorSequence> sequences_;
  std::map<std::string, std::size_t, std::less<>> by_key_;
  std::uint32_t dim_ = 0;
};

class VectorSource {
 public:
  static VectorSource skipgram(const embed::EmbeddingTable& table, pylex::LexOptions lex = {});
  static VectorSource external(const VectorIndex& index);

  Kind kind() const { return kind_; }
  std::uint32_t dim() const;

  // Tokenization the windows of `key` are cut from: the lexer for skip-gram,
  // the exporter's subtokens for external vectors.
  pylex::TokenStream stream_for(std::string_view key, std::string_view source) const;

  // External windows must agree token-for-token with their sequence.
  rnn::Sample sample(const dataset::LabeledWindow& window) const;
  std::vector<rnn::Sample> samples(std::span<const dataset::LabeledWindow> windows) const;

 private:
  Kind kind_ = Kind::Skipgram;
  const embed::EmbeddingTable* table_ = nullptr;
  pylex::LexOptions lex_;
  const VectorIndex* index_ = nullptr;
};

}  // namespace vulnhound::providers
