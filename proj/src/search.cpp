#include "shopsim/search.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "shopsim/error.hpp"
#include "shopsim/text.hpp"

namespace shopsim {

std::array<std::vector<std::string>, kFieldCount> field_tokens(const Product& p) {
  std::array<std::vector<std::string>, kFieldCount> out;
  auto append = [](std::vector<std::string>& dst, std::string_view s) {
    auto toks = text::tokenize(s);
    dst.insert(dst.end(), std::make_move_iterator(toks.begin()), std::make_move_iterator(toks.end()));
  };
  append(out[static_cast<std::size_t>(Field::Title)], p.title);
  for (const auto& a : p.attributes) append(out[static_cast<std::size_t>(Field::Attributes)], a);
  for (const auto& g : p.option_groups) {
    for (const auto& v : g.values) append(out[static_cast<std::size_t>(Field::Options)], v);
  }
  append(out[static_cast<std::size_t>(Field::Category)], p.category.domain);
  append(out[static_cast<std::size_t>(Field::Category)], p.category.first_category);
  append(out[static_cast<std::size_t>(Field::Category)], p.category.fine_category);
  append(out[static_cast<std::size_t>(Field::Shop)], p.shop_name);
  return out;
}

std::size_t page_count(std::size_t total_results, std::size_t page_size) {
  if (total_results == 0) return 1;
  return (total_results + page_size - 1) / page_size;
}

std::size_t ResultPage::total_pages() const { return page_count(total_results, page_size); }

SearchIndex::SearchIndex(const Catalog& catalog, RankingParams params) : catalog_(&catalog), params_(params) {
  if (catalog.empty()) throw ValidationError("cannot index an empty catalog");
  const auto products = catalog.products();
  doc_lengths_.resize(products.size());
  std::array<double, kFieldCount> totals{};
  for (std::size_t d = 0; d < products.size(); ++d) {
    auto fields = field_tokens(products[d]);
    std::map<std::string, std::array<std::uint16_t, kFieldCount>> counts;
    for (std::size_t f = 0; f < kFieldCount; ++f) {
      doc_lengths_[d][f] = static_cast<std::uint32_t>(fields[f].size());
      totals[f] += static_cast<double>(fields[f].size());
      for (const auto& t : fields[f]) {
        auto& c = counts[t];
        if (c[f] < UINT16_MAX) ++c[f];
      }
    }
    for (auto& [token, tf] : counts) postings_[token].push_back({static_cast<std::uint32_t>(d), tf});
  }
  for (std::size_t f = 0; f < kFieldCount; ++f) avg_lengths_[f] = totals[f] / static_cast<double>(products.size());
}

std::vector<ScoredDocument> SearchIndex::rank(std::string_view query) const {
  auto tokens = text::tokenize(query);
  std::set<std::string> distinct(tokens.begin(), tokens.end());
  const double n_docs = static_cast<double>(document_count());

  std::vector<double> scores(document_count(), 0.0);
  std::vector<char> touched(document_count(), 0);
  for (const auto& t : distinct) {
    auto it = postings_.find(t);
    if (it == postings_.end()) continue;
    const double df = static_cast<double>(it->second.size());
    const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
    for (const auto& posting : it->second) {
      double w = 0.0;
      for (std::size_t f = 0; f < kFieldCount; ++f) {
        if (posting.tf[f] == 0) continue;
        const double norm = avg_lengths_[f] > 0
                                ? 1.0 - params_.b + params_.b * doc_lengths_[posting.doc][f] / avg_lengths_[f]
                                : 1.0;
        w += params_.field_weights[f] * posting.tf[f] / norm;
      }
      scores[posting.doc] += idf * w * (params_.k1 + 1.0) / (params_.k1 + w);
      touched[posting.doc] = 1;
    }
  }

  std::vector<ScoredDocument> ranked;
  for (std::size_t d = 0; d < scores.size(); ++d) {
    if (touched[d] && scores[d] > 0) ranked.push_back({d, scores[d]});
  }
  const auto products = catalog_->products();
  std::sort(ranked.begin(), ranked.end(), [&](const ScoredDocument& a, const ScoredDocument& b) {
    if (a.score != b.score) return a.score > b.score;
    return products[a.doc].product_id < products[b.doc].product_id;
  });
  return ranked;
}

ResultPage SearchIndex::search(std::string_view query, std::size_t page, std::size_t page_size) const {
  if (text::tokenize(query).empty()) throw ValidationError("search query is empty", 0, "query");
  if (page_size == 0) throw ValidationError("page size must be positive", 0, "page_size");
  const auto ranked = rank(query);
  ResultPage out;
  out.query = std::string(query);
  out.page_number = page;
  out.page_size = page_size;
  out.total_results = ranked.size();
  if (page == 0 || page > out.total_pages()) {
    throw OutOfRangeError("page " + std::to_string(page) + " out of range (last page is " +
                          std::to_string(out.total_pages()) + ")");
  }
  const auto products = catalog_->products();
  const std::size_t begin = (page - 1) * page_size;
  const std::size_t end = std::min(ranked.size(), begin + page_size);
  for (std::size_t i = begin; i < end; ++i) {
    const auto& p = products[ranked[i].doc];
    out.entries.push_back({p.product_id, p.title, p.price.display()});
  }
  return out;
}

}  // namespace shopsim
