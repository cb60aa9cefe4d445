#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace chartrl {

/// Decodes UTF-8 into code points. Invalid bytes decode to themselves so the
/// function is total over arbitrary byte strings.
inline std::u32string utf8_decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    int extra = 0;
    char32_t cp = c;
    if (c >= 0xF0 && c < 0xF8) {
      extra = 3;
      cp = c & 0x07;
    } else if (c >= 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if (c >= 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    }
    if (c >= 0xF8 || (c >= 0x80 && c < 0xC0)) {
      extra = 0;
      cp = c;
    }
    bool valid = true;
    for (int k = 1; k <= extra; ++k) {
      if (i + static_cast<std::size_t>(k) >= s.size() ||
          (static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]) & 0xC0) != 0x80) {
        valid = false;
        break;
      }
      cp = (cp << 6) | (static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]) & 0x3F);
    }
    if (!valid) {
      out.push_back(c);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(extra) + 1;
  }
  return out;
}

/// Unit-cost Levenshtein distance between two sequences, O(|a|·|b|) time and
/// O(min(|a|,|b|)) memory.
template <class Seq>
std::size_t levenshtein_distance(const Seq& a, const Seq& b) {
  if (a.size() < b.size()) return levenshtein_distance(b, a);
  const std::size_t n = b.size();
  std::vector<std::size_t> row(n + 1);
  for (std::size_t j = 0; j <= n; ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t up = row[j];
      const std::size_t subst = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, subst});
      diag = up;
    }
  }
  return row[n];
}

namespace detail {

inline std::string_view trim_view(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// 1 - lev(ref, cand) / max(|ref|, |cand|) over code points, after trimming
/// both ends. Case-sensitive. Two empty strings score 1.
inline double text_similarity(std::string_view ref, std::string_view cand) {
  const std::u32string r = utf8_decode(detail::trim_view(ref));
  const std::u32string c = utf8_decode(detail::trim_view(cand));
  const std::size_t longest = std::max(r.size(), c.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein_distance(r, c)) / static_cast<double>(longest);
}

}  // namespace chartrl
