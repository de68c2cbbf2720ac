#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace vulnhound {

// Half-open byte range [start, end) into a source buffer.
struct Span {
  std::uint64_t start = 0;
  std::uint64_t end = 0;

  std::uint64_t size() const { return end - start; }
  bool operator==(const Span&) const = default;
};

// True when the two ranges share a byte. A zero-width range is treated as the
// point `start`, which lies in [a, b) iff a <= start < b.
bool spans_intersect(const Span& a, const Span& b);

namespace pylex {

enum class TokenKind : std::uint8_t {
  Identifier,
  Keyword,
  NumberLiteral,
  StringLiteral,
  Operator,
  Punctuation,
  Newline,
  Indent,
  Dedent,
  Comment,  // only produced with LexOptions::keep_comments
};

std::string_view kind_name(TokenKind kind);

struct Token {
  std::string text;
  TokenKind kind = TokenKind::Operator;
  Span span;

  // Indent and Dedent are zero-width markers with empty text.
  bool synthetic() const { return kind == TokenKind::Indent || kind == TokenKind::Dedent; }
  bool operator==(const Token&) const = default;
};

struct TokenStream {
  std::vector<Token> tokens;
  std::size_t source_len = 0;
};

struct LexOptions {
  bool keep_comments = false;
};

// Throws EncodingError naming the first offending byte.
void validate_utf8(std::string_view source);

// Total over valid UTF-8: unknown bytes become one-byte Operator tokens.
TokenStream tokenize(std::string_view source, const LexOptions& options = {});

// One span per line, newline bytes included; index i holds line i + 1.
std::vector<Span> line_spans(std::string_view source);

// Vocabulary key for a token: verbatim text, except markers which get
// bracketed names so that Indent and Dedent stay distinguishable.
std::string token_key(const Token& token);

bool is_keyword(std::string_view word);

}  // namespace pylex
}  // namespace vulnhound
