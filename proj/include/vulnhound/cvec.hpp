#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vulnhound/embed.hpp"
#include "vulnhound/error.hpp"

// CVEC exchange container, little-endian:
//   "CVEC" | version u32 = 1 | dim u32 | sequence count u32
//   per sequence: path len u16 + UTF-8 | entry count u32
//   per entry:    token len u16 + UTF-8 | span start u64 | span end u64 | dim x f32
// An embedding table is stored as a container with zero sequences followed by
//   "VOCB" | word count u32 | per word: len u16 + UTF-8 + count u64
//   | input rows (words x dim f64) | output rows (words x dim f64)
namespace vulnhound::cvec {

inline constexpr std::uint32_t kVersion = 1;

enum class FormatErrorKind {
  BadMagic,
  VersionMismatch,
  Truncated,
  NonFiniteVector,
  NonMonotoneSpans,
  InvalidSpan,
  InvalidText,
  DimMismatch,
  TrailingBytes,
};

std::string_view kind_name(FormatErrorKind kind);

class FormatError : public DataError {
 public:
  FormatError(FormatErrorKind kind, std::size_t offset, const std::string& detail);
  FormatErrorKind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  FormatErrorKind kind_;
  std::size_t offset_;
};

// All sequences must share one dim; an empty list is written with dim 0.
std::string encode(std::span<const embed::VectorSequence> sequences);
std::vector<embed::VectorSequence> decode(std::string_view bytes);

std::string encode_table(const embed::EmbeddingTable& table);
embed::EmbeddingTable decode_table(std::string_view bytes);
bool has_vocabulary(std::string_view bytes);

// Debug mirror: one JSON object per sequence.
std::string encode_jsonl(std::span<const embed::VectorSequence> sequences);
std::vector<embed::VectorSequence> decode_jsonl(std::string_view text);

enum class FileFormat { Binary, Jsonl };

std::vector<embed::VectorSequence> load_vectors(const std::filesystem::path& path, FileFormat format = FileFormat::Binary);
void store_vectors(std::span<const embed::VectorSequence> sequences, const std::filesystem::path& path,
                   FileFormat format = FileFormat::Binary);

embed::EmbeddingTable load_table(const std::filesystem::path& path);
void store_table(const embed::EmbeddingTable& table, const std::filesystem::path& path);

}  // namespace vulnhound::cvec
