#pragma once

#include <string>
#include <string_view>
#include <vector>

/// Script-neutral text primitives shared by search and reward matching.
namespace shopsim::text {

/// Edit-similarity threshold at or above which two strings count as a
/// fuzzy match.
inline constexpr double kFuzzyThreshold = 0.85;

/// Splits text into search/match tokens.
///
/// Latin letters are lowercased and contiguous letter/digit runs form one
/// token. Runs of CJK characters (Han, kana, Hangul) emit every unigram
/// followed by every bigram of the run. Punctuation and whitespace separate
/// tokens and are dropped. Fullwidth ASCII is folded to ASCII first.
std::vector<std::string> tokenize(std::string_view text);

/// Lowercases, replaces every run of punctuation/whitespace with one space
/// and trims. Used before edit-distance and containment checks.
std::string normalize(std::string_view text);

/// Lowercase + whitespace collapse only; punctuation is kept. Used for
/// matching button labels.
std::string fold_label(std::string_view text);

/// Levenshtein distance over Unicode code points.
std::size_t edit_distance(std::string_view a, std::string_view b);

/// 1 - distance / max(len) over the normalized forms. Two empty strings
/// have similarity 1.
double edit_similarity(std::string_view a, std::string_view b);

/// True if normalized `needle` occurs in normalized `haystack` without
/// splitting a Latin/digit word on either side.
bool contains_phrase(std::string_view haystack, std::string_view needle);

/// edit_similarity >= kFuzzyThreshold.
bool fuzzy_equal(std::string_view a, std::string_view b);

/// Attribute-style match: fuzzy_equal, or `required` contained as a phrase
/// in `candidate`.
bool fuzzy_match(std::string_view required, std::string_view candidate);

/// Decodes UTF-8; invalid bytes become U+FFFD.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

/// Shortest round-trip decimal rendering ("528", "528.5").
std::string format_number(double v);
/// Fixed one-decimal rendering ("528.0").
std::string format_price(double v);

}  // namespace shopsim::text
