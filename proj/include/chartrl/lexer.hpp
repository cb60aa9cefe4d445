#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "chartrl/errors.hpp"

namespace chartrl::lex {

enum class TokenKind { name, number, string, op, newline, end };

struct Token {
  TokenKind kind = TokenKind::end;
  std::string text;  // decoded contents for strings, spelling otherwise
  double number = 0.0;
  bool imaginary = false;
  int line = 1;
  int indent = 0;  // column of the first token on this logical line
};

namespace detail {

inline bool is_name_start(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c >= 0x80;
}

inline bool is_name_char(unsigned char c) { return is_name_start(c) || (c >= '0' && c <= '9'); }

inline bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

constexpr std::string_view kThreeCharOps[] = {"**=", "//=", ">>=", "<<=", "..."};
constexpr std::string_view kTwoCharOps[] = {"**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=",
                                            "/=", "%=", "&=", "|=", "^=", "->", ":=", "<<", ">>", "@="};

}  // namespace detail

/// Tokenizes a plotting script. Newlines inside brackets are joined, as are
/// backslash continuations; comments are dropped.
///
/// Throws ParseError on unbalanced brackets or unterminated strings.
inline std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  std::vector<char> brackets;
  std::size_t i = 0;
  int line = 1;
  int line_indent = 0;
  bool at_line_start = true;
  int column = 0;

  auto push = [&](Token t) {
    t.line = line;
    if (at_line_start) {
      line_indent = column;
      at_line_start = false;
    }
    t.indent = line_indent;
    out.push_back(std::move(t));
  };

  auto emit_newline = [&] {
    if (!out.empty() && out.back().kind != TokenKind::newline) {
      Token t;
      t.kind = TokenKind::newline;
      t.line = line;
      t.indent = line_indent;
      out.push_back(std::move(t));
    }
  };

  while (i < src.size()) {
    const unsigned char c = static_cast<unsigned char>(src[i]);

    if (c == '\n') {
      if (brackets.empty()) {
        emit_newline();
        at_line_start = true;
      }
      ++line;
      ++i;
      column = 0;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r' || c == '\f') {
      ++i;
      column += (c == '\t') ? 4 : 1;
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    if (c == '\\' && i + 1 < src.size() && (src[i + 1] == '\n' || src[i + 1] == '\r')) {
      i += 1;
      if (src[i] == '\r') ++i;
      if (i < src.size() && src[i] == '\n') ++i;
      ++line;
      continue;
    }

    // String literal, possibly prefixed.
    std::size_t prefix_len = 0;
    bool raw = false;
    while (prefix_len < 2 && i + prefix_len < src.size()) {
      const char p = static_cast<char>(src[i + prefix_len] | 0x20);
      if (p == 'r' || p == 'b' || p == 'f' || p == 'u') {
        ++prefix_len;
      } else {
        break;
      }
    }
    if (i + prefix_len < src.size() && (src[i + prefix_len] == '"' || src[i + prefix_len] == '\'') &&
        (prefix_len == 0 || !detail::is_name_char(static_cast<unsigned char>(i > 0 ? src[i - 1] : ' ')))) {
      for (std::size_t k = 0; k < prefix_len; ++k) {
        if ((src[i + k] | 0x20) == 'r') raw = true;
      }
      const int start_line = line;
      std::size_t j = i + prefix_len;
      const char quote = src[j];
      const bool triple = j + 2 < src.size() && src[j + 1] == quote && src[j + 2] == quote;
      j += triple ? 3 : 1;
      std::string value;
      bool closed = false;
      while (j < src.size()) {
        const char d = src[j];
        if (triple) {
          if (d == quote && j + 2 < src.size() && src[j + 1] == quote && src[j + 2] == quote) {
            j += 3;
            closed = true;
            break;
          }
        } else if (d == quote) {
          ++j;
          closed = true;
          break;
        } else if (d == '\n') {
          break;
        }
        if (d == '\n') ++line;
        if (d == '\\' && j + 1 < src.size()) {
          const char e = src[j + 1];
          if (raw) {
            value.push_back(d);
            value.push_back(e);
            if (e == '\n') ++line;
            j += 2;
            continue;
          }
          j += 2;
          switch (e) {
            case 'n': value.push_back('\n'); break;
            case 't': value.push_back('\t'); break;
            case 'r': value.push_back('\r'); break;
            case '\\': value.push_back('\\'); break;
            case '\'': value.push_back('\''); break;
            case '"': value.push_back('"'); break;
            case '0': value.push_back('\0'); break;
            case '\n': ++line; break;
            case 'x':
            case 'u':
            case 'U': {
              const std::size_t digits = e == 'x' ? 2 : (e == 'u' ? 4 : 8);
              std::uint32_t cp = 0;
              std::size_t k = 0;
              for (; k < digits && j + k < src.size(); ++k) {
                const int h = detail::hex_value(src[j + k]);
                if (h < 0) break;
                cp = cp * 16 + static_cast<std::uint32_t>(h);
              }
              if (k == digits) {
                detail::append_utf8(value, cp);
                j += digits;
              } else {
                value.push_back('\\');
                value.push_back(e);
              }
              break;
            }
            default:
              value.push_back('\\');
              value.push_back(e);
          }
          continue;
        }
        value.push_back(d);
        ++j;
      }
      if (!closed) throw ParseError("unterminated string literal", start_line);
      Token t;
      t.kind = TokenKind::string;
      t.text = std::move(value);
      push(std::move(t));
      column += static_cast<int>(j - i);
      i = j;
      continue;
    }

    if (detail::is_name_start(c)) {
      std::size_t j = i;
      while (j < src.size() && detail::is_name_char(static_cast<unsigned char>(src[j]))) ++j;
      Token t;
      t.kind = TokenKind::name;
      t.text = std::string(src.substr(i, j - i));
      push(std::move(t));
      column += static_cast<int>(j - i);
      i = j;
      continue;
    }

    if (detail::is_digit(c) || (c == '.' && i + 1 < src.size() && detail::is_digit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i;
      std::string digits;
      Token t;
      t.kind = TokenKind::number;
      if (c == '0' && j + 1 < src.size() && (src[j + 1] == 'x' || src[j + 1] == 'X')) {
        j += 2;
        while (j < src.size() && (detail::hex_value(src[j]) >= 0 || src[j] == '_')) {
          if (src[j] != '_') digits.push_back(src[j]);
          ++j;
        }
        t.number = static_cast<double>(std::stoull(digits.empty() ? "0" : digits, nullptr, 16));
      } else {
        while (j < src.size()) {
          const char d = src[j];
          if (detail::is_digit(static_cast<unsigned char>(d)) || d == '.') {
            digits.push_back(d);
          } else if (d == '_') {
            // digit separator
          } else if ((d == 'e' || d == 'E') && j + 1 < src.size() &&
                     (detail::is_digit(static_cast<unsigned char>(src[j + 1])) ||
                      ((src[j + 1] == '+' || src[j + 1] == '-') && j + 2 < src.size() &&
                       detail::is_digit(static_cast<unsigned char>(src[j + 2]))))) {
            digits.push_back(d);
            digits.push_back(src[j + 1]);
            ++j;
          } else {
            break;
          }
          ++j;
        }
        t.number = std::strtod(digits.c_str(), nullptr);
      }
      if (j < src.size() && (src[j] == 'j' || src[j] == 'J')) {
        t.imaginary = true;
        ++j;
      }
      t.text = std::string(src.substr(i, j - i));
      push(std::move(t));
      column += static_cast<int>(j - i);
      i = j;
      continue;
    }

    if (c == '(' || c == '[' || c == '{') {
      brackets.push_back(static_cast<char>(c));
    } else if (c == ')' || c == ']' || c == '}') {
      const char open = c == ')' ? '(' : (c == ']' ? '[' : '{');
      if (brackets.empty() || brackets.back() != open) {
        throw ParseError(std::string("unbalanced bracket '") + static_cast<char>(c) + "'", line);
      }
      brackets.pop_back();
    }

    std::size_t len = 1;
    for (auto op : detail::kThreeCharOps) {
      if (src.substr(i, 3) == op) len = 3;
    }
    if (len == 1) {
      for (auto op : detail::kTwoCharOps) {
        if (src.substr(i, 2) == op) len = 2;
      }
    }
    Token t;
    t.kind = TokenKind::op;
    t.text = std::string(src.substr(i, len));
    push(std::move(t));
    column += static_cast<int>(len);
    i += len;
  }

  if (!brackets.empty()) {
    throw ParseError(std::string("unclosed bracket '") + brackets.back() + "'", line);
  }
  emit_newline();
  Token end;
  end.kind = TokenKind::end;
  end.line = line;
  out.push_back(std::move(end));
  return out;
}

}  // namespace chartrl::lex
