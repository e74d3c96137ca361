#include "shopsim/reward.hpp"

#include <set>

#include "shopsim/error.hpp"
#include "shopsim/text.hpp"

namespace shopsim {

using json = nlohmann::ordered_json;

double title_overlap_ratio(const std::string& target_title, const std::string& purchased_title) {
  const auto target_tokens = text::tokenize(target_title);
  const auto bought_tokens = text::tokenize(purchased_title);
  const std::set<std::string> target(target_tokens.begin(), target_tokens.end());
  const std::set<std::string> bought(bought_tokens.begin(), bought_tokens.end());
  if (target.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& t : target) common += bought.count(t);
  return static_cast<double>(common) / static_cast<double>(target.size());
}

double category_coefficient(const TargetSpec& target, const PurchaseOutcome& outcome) {
  const double overlap = title_overlap_ratio(target.title, outcome.product.title);
  const bool same_query = !outcome.first_search_query.empty() && outcome.first_search_query == target.canonical_query;
  if (same_query || shared_path_nodes(target.category, outcome.product.category) >= 2 || overlap > 0.2) {
    return 1.0;
  }
  if (overlap == 0.0) return 0.0;
  if (overlap < 0.1) return 0.1;
  return 0.5;
}

MatchResult match_attributes(const std::vector<std::string>& required, const Product& product) {
  MatchResult out;
  out.required = required.size();
  for (const auto& want : required) {
    bool hit = false;
    for (const auto& have : product.attributes) {
      if (text::fuzzy_match(want, have)) {
        hit = true;
        break;
      }
    }
    if (!hit) hit = text::contains_phrase(product.title, want) || text::contains_phrase(product.description, want);
    if (hit) out.matched.push_back(want);
  }
  out.ratio = required.empty() ? 1.0 : static_cast<double>(out.matched.size()) / static_cast<double>(required.size());
  return out;
}

MatchResult match_options(const OptionSelection& required, const OptionSelection& selected) {
  MatchResult out;
  out.required = required.size();
  for (const auto& [group, want] : required) {
    auto it = selected.find(group);
    if (it != selected.end() && text::fuzzy_equal(want, it->second)) out.matched.push_back(group);
  }
  out.ratio = required.empty() ? 1.0 : static_cast<double>(out.matched.size()) / static_cast<double>(required.size());
  return out;
}

int price_indicator(const std::optional<double>& cap, double price) {
  if (!cap) return 1;
  return price <= *cap ? 1 : 0;
}

RewardBreakdown score(const TargetSpec& target, const std::optional<PurchaseOutcome>& outcome) {
  RewardBreakdown r;
  if (!outcome) return r;
  r.r_finish = 1;
  r.r_cat = category_coefficient(target, *outcome);
  const auto att = match_attributes(target.attributes, outcome->product);
  const auto opt = match_options(target.options, outcome->selected);
  r.r_att = att.ratio;
  r.r_opt = opt.ratio;
  r.r_price = price_indicator(target.price_cap, outcome->effective_price);

  const double numerator =
      static_cast<double>(att.matched.size()) + static_cast<double>(opt.matched.size()) + static_cast<double>(r.r_price);
  const double denominator = static_cast<double>(att.required) + static_cast<double>(opt.required) + 1.0;
  r.r_loose = r.r_cat * numerator / denominator;
  r.r_strict = r.r_cat * r.r_att * r.r_opt * static_cast<double>(r.r_price);

  bool exact_options = true;
  for (const auto& [group, want] : target.options) {
    auto it = outcome->selected.find(group);
    if (it == outcome->selected.end() || text::fold_label(it->second) != text::fold_label(want)) {
      exact_options = false;
      break;
    }
  }
  r.r_succ = (outcome->product.product_id == target.product_id && r.r_cat == 1.0 && r.r_att == 1.0 &&
              exact_options && r.r_price == 1)
                 ? 1
                 : 0;
  return r;
}

json to_json(const RewardBreakdown& r) {
  return json{{"r_finish", r.r_finish}, {"r_cat", r.r_cat},     {"r_att", r.r_att},     {"r_opt", r.r_opt},
              {"r_price", r.r_price},   {"r_loose", r.r_loose}, {"r_strict", r.r_strict}, {"r_succ", r.r_succ}};
}

RewardBreakdown reward_from_json(const json& j) {
  RewardBreakdown r;
  r.r_finish = j.at("r_finish").get<int>();
  r.r_cat = j.at("r_cat").get<double>();
  r.r_att = j.at("r_att").get<double>();
  r.r_opt = j.at("r_opt").get<double>();
  r.r_price = j.at("r_price").get<int>();
  r.r_loose = j.at("r_loose").get<double>();
  r.r_strict = j.at("r_strict").get<double>();
  r.r_succ = j.at("r_succ").get<int>();
  return r;
}

json to_json(const TargetSpec& t) {
  json options = json::object();
  for (const auto& [g, v] : t.options) options[g] = v;
  json j{{"product_id", t.product_id},
         {"category", json::array({t.category.domain, t.category.first_category, t.category.fine_category})},
         {"title", t.title},
         {"canonical_query", t.canonical_query},
         {"attributes", t.attributes},
         {"options", std::move(options)}};
  j["price_cap"] = t.price_cap ? json(*t.price_cap) : json(nullptr);
  return j;
}

TargetSpec target_from_json(const json& j) {
  TargetSpec t;
  t.product_id = j.at("product_id").get<std::string>();
  const auto& cat = j.at("category");
  if (!cat.is_array() || cat.size() != 3) throw ValidationError("category must have 3 levels", 0, "category");
  t.category = {cat[0].get<std::string>(), cat[1].get<std::string>(), cat[2].get<std::string>()};
  t.title = j.at("title").get<std::string>();
  t.canonical_query = j.value("canonical_query", "");
  t.attributes = j.at("attributes").get<std::vector<std::string>>();
  for (const auto& [g, v] : j.at("options").items()) t.options[g] = v.get<std::string>();
  if (auto it = j.find("price_cap"); it != j.end() && !it->is_null()) t.price_cap = it->get<double>();
  return t;
}

json to_json(const PurchaseOutcome& o) {
  json selected = json::object();
  for (const auto& [g, v] : o.selected) selected[g] = v;
  return json{{"product", product_to_json(o.product)},
              {"selected_options", std::move(selected)},
              {"effective_price", o.effective_price},
              {"first_search_query", o.first_search_query}};
}

PurchaseOutcome outcome_from_json(const json& j) {
  PurchaseOutcome o;
  o.product = product_from_json(j.at("product"));
  for (const auto& [g, v] : j.at("selected_options").items()) o.selected[g] = v.get<std::string>();
  o.effective_price = j.at("effective_price").get<double>();
  o.first_search_query = j.value("first_search_query", "");
  return o;
}

}  // namespace shopsim
