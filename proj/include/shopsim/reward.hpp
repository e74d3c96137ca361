#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "shopsim/catalog.hpp"

namespace shopsim {

/// The gold constraints of a task.
struct TargetSpec {
  std::string product_id;
  CategoryPath category;
  std::string title;
  /// Query that, issued first, grants the full category coefficient.
  std::string canonical_query;
  std::vector<std::string> attributes;
  OptionSelection options;
  std::optional<double> price_cap;

  bool operator==(const TargetSpec&) const = default;
};

struct PurchaseOutcome {
  Product product;
  OptionSelection selected;
  double effective_price = 0.0;
  /// Empty when the episode never searched.
  std::string first_search_query;

  bool operator==(const PurchaseOutcome&) const = default;
};

struct MatchResult {
  std::vector<std::string> matched;
  std::size_t required = 0;
  double ratio = 1.0;
};

struct RewardBreakdown {
  int r_finish = 0;
  double r_cat = 0.0;
  double r_att = 0.0;
  double r_opt = 0.0;
  int r_price = 0;
  double r_loose = 0.0;
  double r_strict = 0.0;
  int r_succ = 0;

  bool operator==(const RewardBreakdown&) const = default;
};

/// |tokens(target) ∩ tokens(purchased)| / |tokens(target)| over distinct
/// tokens; 0 when the target title has no tokens.
double title_overlap_ratio(const std::string& target_title, const std::string& purchased_title);

/// 1.0 if the first query equals the canonical one, the paths share at least
/// two levels, or the title overlap exceeds 0.2. Otherwise 0.5, lowered to 0.1
/// when overlap < 0.1 and to 0.0 when overlap is exactly 0.
double category_coefficient(const TargetSpec& target, const PurchaseOutcome& outcome);

/// A required attribute matches if it fuzzy-matches any product attribute,
/// or else occurs as a phrase in the title or description.
MatchResult match_attributes(const std::vector<std::string>& required, const Product& product);

/// A required (group, value) matches iff the same group was selected with a
/// fuzzy-equal value.
MatchResult match_options(const OptionSelection& required, const OptionSelection& selected);

/// 1 iff price <= cap; 1 when there is no cap.
int price_indicator(const std::optional<double>& cap, double price);

/// Full reward stack. No purchase yields the all-zero breakdown.
RewardBreakdown score(const TargetSpec& target, const std::optional<PurchaseOutcome>& outcome);

nlohmann::ordered_json to_json(const RewardBreakdown& r);
RewardBreakdown reward_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json to_json(const TargetSpec& t);
TargetSpec target_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json to_json(const PurchaseOutcome& o);
PurchaseOutcome outcome_from_json(const nlohmann::ordered_json& j);

}  // namespace shopsim
