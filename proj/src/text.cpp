#include "shopsim/text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace shopsim::text {
namespace {

bool is_cjk(char32_t c) {
  return (c >= 0x3040 && c <= 0x30FF) ||    // kana
         (c >= 0x3400 && c <= 0x4DBF) ||    // ext A
         (c >= 0x4E00 && c <= 0x9FFF) ||    // unified
         (c >= 0xAC00 && c <= 0xD7AF) ||    // hangul
         (c >= 0xF900 && c <= 0xFAFF) ||    // compatibility
         (c >= 0x20000 && c <= 0x2FFFF);
}

char32_t fold_width(char32_t c) {
  if (c >= 0xFF01 && c <= 0xFF5E) return c - 0xFEE0;
  if (c == 0x3000) return U' ';
  return c;
}

char32_t lower(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  if (c >= 0x100 && c <= 0x17F && (c % 2 == 0) && c != 0x130 && c != 0x138) return c + 1;
  if (c >= 0x391 && c <= 0x3A9) return c + 32;   // Greek
  if (c >= 0x410 && c <= 0x42F) return c + 32;   // Cyrillic
  return c;
}

bool is_ascii_word(char32_t c) {
  return (c >= U'0' && c <= U'9') || (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z');
}

bool is_separator(char32_t c) {
  if (c < 0x80) return !is_ascii_word(c);
  if (c < 0xC0) return true;                       // Latin-1 symbols
  if (c == 0xD7 || c == 0xF7) return true;         // multiplication / division
  if (c >= 0x2000 && c <= 0x2BFF) return true;     // punctuation, symbols, arrows
  if (c >= 0x3000 && c <= 0x303F) return true;     // CJK punctuation
  if (c >= 0xFE30 && c <= 0xFE4F) return true;
  if (c >= 0xFF00 && c <= 0xFFEF) return true;     // remaining halfwidth forms
  if (c == 0xFFFD) return true;
  return false;
}

void append_utf8(std::string& out, char32_t c) {
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
}

std::u32string normalized_cps(std::string_view s) {
  std::u32string out;
  bool pending_space = false;
  for (char32_t c : decode_utf8(s)) {
    c = fold_width(c);
    if (is_separator(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(lower(c));
  }
  return out;
}

}  // namespace

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int extra = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      extra = 1;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      extra = 2;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      extra = 3;
      cp = b0 & 0x07;
    } else {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    bool ok = true;
    for (int k = 1; k <= extra; ++k) {
      if (i + k >= s.size()) {
        ok = false;
        break;
      }
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(extra) + 1;
  }
  return out;
}

std::string encode_utf8(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t c : s) append_utf8(out, c);
  return out;
}

std::vector<std::string> tokenize(std::string_view input) {
  std::vector<std::string> tokens;
  std::string word;
  std::u32string cjk;

  auto flush_word = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  auto flush_cjk = [&] {
    if (cjk.empty()) return;
    for (char32_t c : cjk) {
      std::string t;
      append_utf8(t, c);
      tokens.push_back(std::move(t));
    }
    for (std::size_t i = 0; i + 1 < cjk.size(); ++i) {
      std::string t;
      append_utf8(t, cjk[i]);
      append_utf8(t, cjk[i + 1]);
      tokens.push_back(std::move(t));
    }
    cjk.clear();
  };

  for (char32_t c : decode_utf8(input)) {
    c = fold_width(c);
    if (is_cjk(c)) {
      flush_word();
      cjk.push_back(c);
    } else if (is_separator(c)) {
      flush_word();
      flush_cjk();
    } else {
      flush_cjk();
      append_utf8(word, lower(c));
    }
  }
  flush_word();
  flush_cjk();
  return tokens;
}

std::string normalize(std::string_view text) { return encode_utf8(normalized_cps(text)); }

std::string fold_label(std::string_view text) {
  std::u32string out;
  bool pending_space = false;
  for (char32_t c : decode_utf8(text)) {
    if (c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == 0x3000) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(lower(c));
  }
  return encode_utf8(out);
}

namespace {
std::size_t levenshtein(const std::u32string& a, const std::u32string& b) {
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}
}  // namespace

std::size_t edit_distance(std::string_view a, std::string_view b) {
  return levenshtein(decode_utf8(a), decode_utf8(b));
}

double edit_similarity(std::string_view a, std::string_view b) {
  const auto na = normalized_cps(a);
  const auto nb = normalized_cps(b);
  const std::size_t longest = std::max(na.size(), nb.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(na, nb)) / static_cast<double>(longest);
}

bool contains_phrase(std::string_view haystack, std::string_view needle) {
  const auto h = normalized_cps(haystack);
  const auto n = normalized_cps(needle);
  if (n.empty() || n.size() > h.size()) return false;
  for (std::size_t pos = h.find(n); pos != std::u32string::npos; pos = h.find(n, pos + 1)) {
    const bool left_ok = pos == 0 || !(is_ascii_word(h[pos - 1]) && is_ascii_word(n.front()));
    const std::size_t end = pos + n.size();
    const bool right_ok = end == h.size() || !(is_ascii_word(h[end]) && is_ascii_word(n.back()));
    if (left_ok && right_ok) return true;
  }
  return false;
}

bool fuzzy_equal(std::string_view a, std::string_view b) {
  return edit_similarity(a, b) >= kFuzzyThreshold;
}

bool fuzzy_match(std::string_view required, std::string_view candidate) {
  return fuzzy_equal(required, candidate) || contains_phrase(candidate, required);
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_price(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

}  // namespace shopsim::text
