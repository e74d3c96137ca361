#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "shopsim/catalog.hpp"

namespace shopsim {

inline constexpr std::size_t kPageSize = 20;

enum class Field : std::size_t { Title = 0, Attributes, Options, Category, Shop };
inline constexpr std::size_t kFieldCount = 5;

/// Ranking constants. A document's score for query q is
///
///   sum over distinct query tokens t with df(t) > 0 of
///     idf(t) * w(t,d) * (k1 + 1) / (k1 + w(t,d))
///
///   idf(t)   = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))
///   w(t,d)   = sum over fields f of weight_f * tf_f(t,d) / (1 - b + b * len_f(d) / avglen_f)
///
/// where len_f is the token count of field f and avglen_f its corpus mean
/// (a field with avglen_f == 0 uses a normaliser of 1).
struct RankingParams {
  double k1 = 1.2;
  double b = 0.75;
  std::array<double, kFieldCount> field_weights = {3.0, 2.0, 1.0, 1.0, 0.5};
};

/// Token lists per field for one product, in field order.
std::array<std::vector<std::string>, kFieldCount> field_tokens(const Product& product);

struct ScoredDocument {
  std::size_t doc = 0;
  double score = 0.0;
};

struct ResultEntry {
  std::string product_id;
  std::string title;
  std::string price_display;
  bool operator==(const ResultEntry&) const = default;
};

struct ResultPage {
  std::string query;
  std::size_t page_number = 1;
  std::size_t total_results = 0;
  std::size_t page_size = kPageSize;
  std::vector<ResultEntry> entries;

  std::size_t total_pages() const;
  bool has_next() const { return page_number < total_pages(); }
  bool has_prev() const { return page_number > 1; }
  bool operator==(const ResultPage&) const = default;
};

/// Last valid 1-based page for a result count (at least 1).
std::size_t page_count(std::size_t total_results, std::size_t page_size = kPageSize);

/// Immutable inverted index over a catalog. The catalog must outlive it.
class SearchIndex {
 public:
  /// Throws ValidationError on an empty catalog.
  explicit SearchIndex(const Catalog& catalog, RankingParams params = {});

  std::size_t document_count() const { return doc_lengths_.size(); }
  std::size_t vocabulary_size() const { return postings_.size(); }
  const RankingParams& params() const { return params_; }
  const Catalog& catalog() const { return *catalog_; }

  /// Every document with a positive score, ordered by score descending then
  /// product_id ascending.
  std::vector<ScoredDocument> rank(std::string_view query) const;

  /// One page of `rank(query)`. Throws ValidationError for a query with no
  /// tokens and OutOfRangeError for page 0 or past the last page.
  ResultPage search(std::string_view query, std::size_t page, std::size_t page_size = kPageSize) const;

 private:
  struct Posting {
    std::uint32_t doc;
    std::array<std::uint16_t, kFieldCount> tf;
  };

  const Catalog* catalog_;
  RankingParams params_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::vector<std::array<std::uint32_t, kFieldCount>> doc_lengths_;
  std::array<double, kFieldCount> avg_lengths_{};
};

}  // namespace shopsim
