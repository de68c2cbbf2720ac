#include "vulnhound/pylex.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "vulnhound/error.hpp"

namespace vulnhound {

bool spans_intersect(const Span& a, const Span& b) {
  if (a.start == a.end) return b.start <= a.start && a.start < b.end;
  if (b.start == b.end) return a.start <= b.start && b.start < a.end;
  return a.start < b.end && b.start < a.end;
}

namespace pylex {

namespace {

constexpr std::array<std::string_view, 35> kKeywords = {
    "False", "None",   "True",    "and",      "as",       "assert", "async",
    "await", "break",  "class",   "continue", "def",      "del",    "elif",
    "else",  "except", "finally", "for",      "from",     "global", "if",
    "import", "in",    "is",      "lambda",   "nonlocal", "not",    "or",
    "pass",  "raise",  "return",  "try",      "while",    "with",   "yield"};

constexpr std::array<std::string_view, 5> kThreeCharOps = {"**=", "//=", ">>=", "<<=", "..."};
constexpr std::array<std::string_view, 19> kTwoCharOps = {
    "->", ":=", "**", "//", "<<", ">>", "<=", ">=", "==", "!=",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@="};

bool is_ident_start(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c >= 0x80;
}
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_ident_char(unsigned char c) { return is_ident_start(c) || is_digit(c); }

bool is_string_prefix(std::string_view ident) {
  if (ident.size() > 2) return false;
  std::string lower;
  for (char c : ident) lower.push_back(static_cast<char>(c | 0x20));
  static constexpr std::array<std::string_view, 12> prefixes = {
      "r", "u", "f", "b", "br", "rb", "fr", "rf", "t", "tr", "rt", "ur"};
  return std::find(prefixes.begin(), prefixes.end(), lower) != prefixes.end();
}

bool is_punctuation(std::string_view lexeme) {
  if (lexeme == "..." || lexeme == "->") return true;
  if (lexeme.size() != 1) return false;
  return std::string_view("()[]{},:;.").find(lexeme[0]) != std::string_view::npos;
}

class Lexer {
 public:
  Lexer(std::string_view src, const LexOptions& options) : src_(src), options_(options) {}

  TokenStream run() {
    TokenStream out;
    out.source_len = src_.size();
    while (pos_ < src_.size()) {
      if (at_line_start_ && depth_ == 0) {
        handle_line_start();
        continue;
      }
      step();
    }
    for (std::size_t i = 1; i < indents_.size(); ++i) emit_marker(TokenKind::Dedent, src_.size());
    out.tokens = std::move(tokens_);
    return out;
  }

 private:
  unsigned char at(std::size_t i) const { return i < src_.size() ? static_cast<unsigned char>(src_[i]) : 0; }

  void emit(TokenKind kind, std::size_t start, std::size_t end) {
    tokens_.push_back(Token{std::string(src_.substr(start, end - start)), kind, Span{start, end}});
    line_has_tokens_ = true;
  }

  void emit_marker(TokenKind kind, std::size_t at) {
    tokens_.push_back(Token{std::string(), kind, Span{at, at}});
  }

  std::size_t newline_width(std::size_t i) const {
    if (at(i) == '\n') return 1;
    if (at(i) == '\r' && at(i + 1) == '\n') return 2;
    return 0;
  }

  // Measures indentation of a new logical line and synthesizes Indent/Dedent.
  // Blank and comment-only lines leave the indentation stack alone.
  void handle_line_start() {
    std::size_t p = pos_;
    std::size_t column = 0;
    for (;; ++p) {
      const unsigned char c = at(p);
      if (p >= src_.size()) break;
      if (c == ' ') {
        ++column;
      } else if (c == '\t') {
        column = (column / 8 + 1) * 8;
      } else if (c == '\f') {
        column = 0;
      } else if (c == '\r' && at(p + 1) != '\n') {
        continue;
      } else {
        break;
      }
    }
    pos_ = p;
    if (p >= src_.size()) return;
    if (const std::size_t w = newline_width(p); w > 0) {
      pos_ = p + w;
      return;
    }
    if (at(p) == '#') {
      lex_comment();
      return;
    }
    at_line_start_ = false;
    line_has_tokens_ = false;
    if (column > indents_.back()) {
      indents_.push_back(column);
      emit_marker(TokenKind::Indent, p);
      return;
    }
    while (column < indents_.back()) {
      indents_.pop_back();
      emit_marker(TokenKind::Dedent, p);
    }
    // Inconsistent dedent: adopt the new column without a marker.
    if (column > indents_.back()) indents_.push_back(column);
  }

  void lex_comment() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && at(pos_) != '\n' && !(at(pos_) == '\r' && at(pos_ + 1) == '\n')) ++pos_;
    if (options_.keep_comments) {
      tokens_.push_back(Token{std::string(src_.substr(start, pos_ - start)), TokenKind::Comment,
                              Span{start, pos_}});
    }
  }

  void step() {
    const unsigned char c = at(pos_);
    if (c == ' ' || c == '\t' || c == '\f') {
      ++pos_;
      return;
    }
    if (const std::size_t w = newline_width(pos_); w > 0) {
      if (depth_ == 0) {
        if (line_has_tokens_) emit(TokenKind::Newline, pos_, pos_ + w);
        at_line_start_ = true;
      }
      pos_ += w;
      return;
    }
    if (c == '\r') {
      ++pos_;
      return;
    }
    if (c == '#') {
      lex_comment();
      return;
    }
    if (c == '\\') {
      if (const std::size_t w = newline_width(pos_ + 1); w > 0) {
        pos_ += 1 + w;
        return;
      }
      emit(TokenKind::Operator, pos_, pos_ + 1);
      ++pos_;
      return;
    }
    if (is_ident_start(c)) {
      lex_word();
      return;
    }
    if (is_digit(c) || (c == '.' && is_digit(at(pos_ + 1)))) {
      lex_number();
      return;
    }
    if (c == '"' || c == '\'') {
      lex_string(pos_, pos_);
      return;
    }
    lex_operator();
  }

  void lex_word() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && is_ident_char(at(pos_))) ++pos_;
    const std::string_view word = src_.substr(start, pos_ - start);
    if ((at(pos_) == '"' || at(pos_) == '\'') && is_string_prefix(word)) {
      lex_string(start, pos_);
      return;
    }
    emit(is_keyword(word) ? TokenKind::Keyword : TokenKind::Identifier, start, pos_);
  }

  void lex_number() {
    const std::size_t start = pos_;
    const unsigned char next = at(pos_ + 1);
    if (at(pos_) == '0' && std::string_view("xXoObB").find(static_cast<char>(next)) != std::string_view::npos) {
      pos_ += 2;
      while (pos_ < src_.size() && (std::isalnum(at(pos_)) || at(pos_) == '_')) ++pos_;
      emit(TokenKind::NumberLiteral, start, pos_);
      return;
    }
    auto digits = [&] {
      while (pos_ < src_.size() && (is_digit(at(pos_)) || at(pos_) == '_')) ++pos_;
    };
    digits();
    if (at(pos_) == '.') {
      ++pos_;
      digits();
    }
    if (at(pos_) == 'e' || at(pos_) == 'E') {
      std::size_t p = pos_ + 1;
      if (at(p) == '+' || at(p) == '-') ++p;
      if (is_digit(at(p))) {
        pos_ = p;
        digits();
      }
    }
    if (at(pos_) == 'j' || at(pos_) == 'J') ++pos_;
    emit(TokenKind::NumberLiteral, start, pos_);
  }

  // `start` is where the prefix begins, `quote_pos` the opening quote.
  void lex_string(std::size_t start, std::size_t quote_pos) {
    const unsigned char quote = at(quote_pos);
    const bool triple = at(quote_pos + 1) == quote && at(quote_pos + 2) == quote;
    std::size_t i = quote_pos + (triple ? 3 : 1);
    const std::size_t n = src_.size();
    while (true) {
      if (i >= n) {
        i = n;
        break;
      }
      const unsigned char ch = at(i);
      if (ch == '\\') {
        i += 1 + std::max<std::size_t>(1, newline_width(i + 1));
        continue;
      }
      if (triple) {
        if (ch == quote && at(i + 1) == quote && at(i + 2) == quote) {
          i += 3;
          break;
        }
        ++i;
        continue;
      }
      if (ch == quote) {
        ++i;
        break;
      }
      if (newline_width(i) > 0) break;  // unterminated single-line literal
      ++i;
    }
    pos_ = std::min(i, n);
    emit(TokenKind::StringLiteral, start, pos_);
  }

  void lex_operator() {
    const std::string_view rest = src_.substr(pos_);
    std::size_t len = 1;
    if (std::any_of(kThreeCharOps.begin(), kThreeCharOps.end(), [&](auto op) { return rest.starts_with(op); })) {
      len = 3;
    } else if (std::any_of(kTwoCharOps.begin(), kTwoCharOps.end(), [&](auto op) { return rest.starts_with(op); })) {
      len = 2;
    }
    const std::string_view lexeme = rest.substr(0, len);
    if (len == 1) {
      const char c = lexeme[0];
      if (c == '(' || c == '[' || c == '{') ++depth_;
      if ((c == ')' || c == ']' || c == '}') && depth_ > 0) --depth_;
    }
    emit(is_punctuation(lexeme) ? TokenKind::Punctuation : TokenKind::Operator, pos_, pos_ + len);
    pos_ += len;
  }

  std::string_view src_;
  LexOptions options_;
  std::size_t pos_ = 0;
  std::size_t depth_ = 0;
  bool at_line_start_ = true;
  bool line_has_tokens_ = false;
  std::vector<std::size_t> indents_{0};
  std::vector<Token> tokens_;
};

}  // namespace

std::string_view kind_name(TokenKind kind) {
  switch (kind) {
    case TokenKind::Identifier: return "Identifier";
    case TokenKind::Keyword: return "Keyword";
    case TokenKind::NumberLiteral: return "NumberLiteral";
    case TokenKind::StringLiteral: return "StringLiteral";
    case TokenKind::Operator: return "Operator";
    case TokenKind::Punctuation: return "Punctuation";
    case TokenKind::Newline: return "Newline";
    case TokenKind::Indent: return "Indent";
    case TokenKind::Dedent: return "Dedent";
    case TokenKind::Comment: return "Comment";
  }
  return "?";
}

bool is_keyword(std::string_view word) {
  return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

void validate_utf8(std::string_view source) {
  const auto* s = reinterpret_cast<const unsigned char*>(source.data());
  const std::size_t n = source.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char c = s[i];
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c >= 0xC2 && c <= 0xDF) {
      len = 2;
      cp = c & 0x1F;
    } else if (c >= 0xE0 && c <= 0xEF) {
      len = 3;
      cp = c & 0x0F;
    } else if (c >= 0xF0 && c <= 0xF4) {
      len = 4;
      cp = c & 0x07;
    } else {
      throw EncodingError(i);
    }
    if (i + len > n) throw EncodingError(i);
    for (std::size_t k = 1; k < len; ++k) {
      if ((s[i + k] & 0xC0) != 0x80) throw EncodingError(i);
      cp = (cp << 6) | (s[i + k] & 0x3F);
    }
    const bool overlong = (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000);
    if (overlong || (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) throw EncodingError(i);
    i += len;
  }
}

TokenStream tokenize(std::string_view source, const LexOptions& options) {
  validate_utf8(source);
  return Lexer(source, options).run();
}

std::vector<Span> line_spans(std::string_view source) {
  validate_utf8(source);
  std::vector<Span> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i] == '\n') {
      lines.push_back({start, i + 1});
      start = i + 1;
    }
  }
  if (start < source.size()) lines.push_back({start, source.size()});
  return lines;
}

std::string token_key(const Token& token) {
  switch (token.kind) {
    case TokenKind::Indent: return "<INDENT>";
    case TokenKind::Dedent: return "<DEDENT>";
    case TokenKind::Newline: return "<NEWLINE>";
    default: return token.text;
  }
}

}  // namespace pylex
}  // namespace vulnhound
