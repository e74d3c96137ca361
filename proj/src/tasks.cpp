#include "shopsim/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "shopsim/error.hpp"
#include "shopsim/rng.hpp"
#include "shopsim/text.hpp"

namespace shopsim {

using json = nlohmann::ordered_json;

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::SingleTurn: return "single_turn";
    case Scenario::MultiTurn: return "multi_turn";
    case Scenario::SingleTurnPersonalized: return "single_turn_pers";
    case Scenario::MultiTurnPersonalized: return "multi_turn_pers";
  }
  return "single_turn";
}

Scenario parse_scenario(std::string_view name) {
  for (auto s : kAllScenarios) {
    if (to_string(s) == name) return s;
  }
  throw ValidationError("unknown scenario '" + std::string(name) + "'", 0, "scenario");
}

std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "test") return Split::Test;
  throw ValidationError("unknown split '" + std::string(name) + "'", 0, "split");
}

ScenarioConfig ScenarioConfig::defaults(Scenario s) {
  ScenarioConfig c;
  c.scenario = s;
  c.step_limit = is_multi_turn(s) ? 40 : 30;
  c.inject_profile = is_personalized(s);
  return c;
}

bool Task::supports(Scenario s) const {
  return std::find(scenario_tags.begin(), scenario_tags.end(), s) != scenario_tags.end();
}

std::vector<std::string> constrained_slots(const TargetSpec& target) {
  std::vector<std::string> out{"category"};
  for (const auto& a : target.attributes) out.push_back("attribute:" + a);
  // Color first, then the remaining groups alphabetically
  if (target.options.count("Color")) out.push_back("option:Color");
  for (const auto& [g, _] : target.options) {
    if (g != "Color") out.push_back("option:" + g);
  }
  if (target.price_cap) out.push_back("price");
  return out;
}

std::string_view to_string(PreferenceLevel l) {
  switch (l) {
    case PreferenceLevel::High: return "High";
    case PreferenceLevel::Medium: return "Medium";
    case PreferenceLevel::Low: return "Low";
    case PreferenceLevel::None: return "None";
  }
  return "None";
}

PreferenceLevel parse_level(std::string_view s) {
  if (s == "High") return PreferenceLevel::High;
  if (s == "Medium") return PreferenceLevel::Medium;
  if (s == "Low") return PreferenceLevel::Low;
  if (s == "None") return PreferenceLevel::None;
  throw ValidationError("unknown preference level '" + std::string(s) + "'", 0, "Preference Level");
}

void UserProfile::validate() const {
  if (user_id.empty()) throw ValidationError("empty user id", 0, "User ID");
  if (price_min < 0 || price_min > price_max) {
    throw ValidationError("price range min must not exceed max", 0, "Price Range");
  }
}

json to_json(const UserProfile& p) {
  json j;
  j["Transaction Characteristics"] = {
      {"Coupon Usage Rate", p.transactions.coupon_usage_rate},
      {"Repeat Purchase Rate", p.transactions.repeat_purchase_rate},
      {"Average Order Value", p.transactions.average_order_value},
      {"Preferred Payment Method", p.transactions.payment_method},
      {"Is Promotion-Sensitive", p.transactions.promotion_sensitive},
      {"Spending in Last 30 Days", p.transactions.spending_last_30_days},
      {"Orders in Last 90 Days", p.transactions.orders_last_90_days}};
  j["Demographics"] = {{"Membership Level", p.demographics.membership_level},
                       {"Age Range", p.demographics.age_range},
                       {"Gender", p.demographics.gender},
                       {"Spending Level", p.demographics.spending_level}};
  json brands = json::array();
  for (const auto& [level, name] : p.brand_preferences) {
    brands.push_back({{"Preference Level", std::string(to_string(level))}, {"Brand Name", name}});
  }
  json sizes = json::object();
  for (const auto& [k, v] : p.size_preferences) sizes[k] = v;
  json cats = json::object();
  for (const auto& [k, v] : p.category_preferences) cats[k] = std::string(to_string(v));
  j["Interests and Preferences"] = {
      {"Brand Preferences", brands},
      {"Product Attribute Preferences",
       {{"Price Range", {{"Max", p.price_max}, {"Min", p.price_min}}},
        {"Features", p.features},
        {"Size Preferences", sizes},
        {"Materials", p.materials},
        {"Colors", p.colors},
        {"Styles", p.styles}}},
      {"Category Preferences", cats}};
  j["Location Information"] = {{"District", p.location.district},
                               {"City", p.location.city},
                               {"Time Zone", p.location.time_zone},
                               {"Province", p.location.province}};
  j["User ID"] = p.user_id;
  j["User Tags"] = p.tags;
  j["Behavioral Features"] = {{"Commonly Used Device", p.behavior.device},
                              {"Average Daily Browsing Duration", p.behavior.daily_browsing_seconds},
                              {"Search Keywords in Last 14 Days", p.behavior.search_keywords},
                              {"Active Hours", p.behavior.active_hours},
                              {"Visits in Last 7 Days", p.behavior.visits_last_7_days}};
  return j;
}

namespace {

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError("missing field", 0, key);
  return j.at(key);
}

template <typename T>
T get_as(const json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(e.what(), 0, key);
  }
}

}  // namespace

UserProfile profile_from_json(const json& j) {
  UserProfile p;
  p.user_id = get_as<std::string>(j, "User ID");
  const auto& tx = field(j, "Transaction Characteristics");
  p.transactions.coupon_usage_rate = get_as<double>(tx, "Coupon Usage Rate");
  p.transactions.repeat_purchase_rate = get_as<double>(tx, "Repeat Purchase Rate");
  p.transactions.average_order_value = get_as<double>(tx, "Average Order Value");
  p.transactions.payment_method = get_as<std::string>(tx, "Preferred Payment Method");
  p.transactions.promotion_sensitive = get_as<bool>(tx, "Is Promotion-Sensitive");
  p.transactions.spending_last_30_days = get_as<double>(tx, "Spending in Last 30 Days");
  p.transactions.orders_last_90_days = get_as<int>(tx, "Orders in Last 90 Days");
  const auto& demo = field(j, "Demographics");
  p.demographics.membership_level = get_as<std::string>(demo, "Membership Level");
  p.demographics.age_range = get_as<std::string>(demo, "Age Range");
  p.demographics.gender = get_as<std::string>(demo, "Gender");
  p.demographics.spending_level = get_as<std::string>(demo, "Spending Level");
  const auto& prefs = field(j, "Interests and Preferences");
  for (const auto& b : field(prefs, "Brand Preferences")) {
    p.brand_preferences.emplace_back(parse_level(get_as<std::string>(b, "Preference Level")),
                                     get_as<std::string>(b, "Brand Name"));
  }
  const auto& attr = field(prefs, "Product Attribute Preferences");
  const auto& range = field(attr, "Price Range");
  p.price_max = get_as<double>(range, "Max");
  p.price_min = get_as<double>(range, "Min");
  p.features = get_as<std::vector<std::string>>(attr, "Features");
  for (const auto& [k, v] : field(attr, "Size Preferences").items()) p.size_preferences.emplace_back(k, v.get<std::string>());
  p.materials = get_as<std::vector<std::string>>(attr, "Materials");
  p.colors = get_as<std::vector<std::string>>(attr, "Colors");
  p.styles = get_as<std::vector<std::string>>(attr, "Styles");
  for (const auto& [k, v] : field(prefs, "Category Preferences").items()) {
    p.category_preferences.emplace_back(k, parse_level(v.get<std::string>()));
  }
  const auto& loc = field(j, "Location Information");
  p.location.district = get_as<std::string>(loc, "District");
  p.location.city = get_as<std::string>(loc, "City");
  p.location.time_zone = get_as<std::string>(loc, "Time Zone");
  p.location.province = get_as<std::string>(loc, "Province");
  p.tags = get_as<std::vector<std::string>>(j, "User Tags");
  const auto& beh = field(j, "Behavioral Features");
  p.behavior.device = get_as<std::string>(beh, "Commonly Used Device");
  p.behavior.daily_browsing_seconds = get_as<int>(beh, "Average Daily Browsing Duration");
  p.behavior.search_keywords = get_as<std::vector<std::string>>(beh, "Search Keywords in Last 14 Days");
  p.behavior.active_hours = get_as<std::vector<int>>(beh, "Active Hours");
  p.behavior.visits_last_7_days = get_as<int>(beh, "Visits in Last 7 Days");
  p.validate();
  return p;
}

json to_json(const Task& t) {
  json j;
  j["task_id"] = t.task_id;
  j["instruction"] = t.instruction;
  j["target_product"] = t.target.title;
  j["target_product_id"] = t.target.product_id;
  j["target_options"] = json::object();
  for (const auto& [g, v] : t.target.options) j["target_options"][g] = v;
  j["target_attributes"] = t.target.attributes;
  j["target_price_cap"] = t.target.price_cap ? json(*t.target.price_cap) : json(nullptr);
  j["target_category"] = {t.target.category.domain, t.target.category.first_category,
                          t.target.category.fine_category};
  j["canonical_query"] = t.target.canonical_query;
  j["scenario_tags"] = json::array();
  for (auto s : t.scenario_tags) j["scenario_tags"].push_back(std::string(to_string(s)));
  j["split"] = std::string(to_string(t.split));
  j["reveal_plan"] = json::array();
  for (const auto& r : t.reveal_plan) {
    j["reveal_plan"].push_back({{"slot", r.slot}, {"text", r.text}, {"via_profile", r.via_profile}});
  }
  j["profile_ref"] = t.profile_ref ? json(*t.profile_ref) : json(nullptr);
  return j;
}

Task task_from_json(const json& j) {
  Task t;
  t.task_id = get_as<std::string>(j, "task_id");
  t.instruction = get_as<std::string>(j, "instruction");
  t.target.title = get_as<std::string>(j, "target_product");
  t.target.product_id = get_as<std::string>(j, "target_product_id");
  t.target.options = get_as<OptionSelection>(j, "target_options");
  t.target.attributes = get_as<std::vector<std::string>>(j, "target_attributes");
  if (const auto& cap = field(j, "target_price_cap"); !cap.is_null()) t.target.price_cap = get_as<double>(j, "target_price_cap");
  const auto cat = get_as<std::vector<std::string>>(j, "target_category");
  if (cat.size() != 3) throw ValidationError("expected [domain, first, fine]", 0, "target_category");
  t.target.category = {cat[0], cat[1], cat[2]};
  t.target.canonical_query = get_as<std::string>(j, "canonical_query");
  for (const auto& s : get_as<std::vector<std::string>>(j, "scenario_tags")) t.scenario_tags.push_back(parse_scenario(s));
  t.split = parse_split(get_as<std::string>(j, "split"));
  for (const auto& r : field(j, "reveal_plan")) {
    t.reveal_plan.push_back({get_as<std::string>(r, "slot"), get_as<std::string>(r, "text"), get_as<bool>(r, "via_profile")});
  }
  if (const auto& ref = field(j, "profile_ref"); !ref.is_null()) t.profile_ref = get_as<std::string>(j, "profile_ref");
  return t;
}

const Task* TaskSet::find(std::string_view task_id) const {
  for (const auto& t : tasks) {
    if (t.task_id == task_id) return &t;
  }
  return nullptr;
}

const Task& TaskSet::get(std::string_view task_id) const {
  if (const auto* t = find(task_id)) return *t;
  throw NotFoundError("task", std::string(task_id));
}

const UserProfile* TaskSet::profile_for(const Task& task) const {
  if (!task.profile_ref) return nullptr;
  auto it = profiles.find(*task.profile_ref);
  return it == profiles.end() ? nullptr : &it->second;
}

namespace {

template <typename F>
void read_lines(std::istream& in, F&& on_record) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      on_record(json::parse(line));
    } catch (const json::exception& e) {
      throw ValidationError(std::string("malformed JSON: ") + e.what(), n);
    } catch (const ValidationError& e) {
      throw ValidationError(e.message(), n, e.field());
    }
  }
}

}  // namespace

void write_tasks(const std::vector<Task>& tasks, std::ostream& out) {
  for (const auto& t : tasks) out << to_json(t).dump() << '\n';
}

std::vector<Task> read_tasks(std::istream& in) {
  std::vector<Task> out;
  std::set<std::string> ids;
  read_lines(in, [&](const json& j) {
    auto t = task_from_json(j);
    if (!ids.insert(t.task_id).second) throw ValidationError("duplicate task id " + t.task_id, 0, "task_id");
    out.push_back(std::move(t));
  });
  return out;
}

void write_profiles(const std::map<std::string, UserProfile>& profiles, std::ostream& out) {
  for (const auto& [_, p] : profiles) out << to_json(p).dump() << '\n';
}

std::map<std::string, UserProfile> read_profiles(std::istream& in) {
  std::map<std::string, UserProfile> out;
  read_lines(in, [&](const json& j) {
    auto p = profile_from_json(j);
    auto id = p.user_id;
    if (!out.emplace(id, std::move(p)).second) throw ValidationError("duplicate user id " + id, 0, "User ID");
  });
  return out;
}

std::filesystem::path profiles_path_for(const std::filesystem::path& tasks_path) {
  auto p = tasks_path;
  p.replace_extension(".profiles.jsonl");
  return p;
}

void save_task_set(const TaskSet& set, const std::filesystem::path& tasks_path,
                   const std::filesystem::path& profiles_path) {
  std::ofstream t(tasks_path);
  if (!t) throw Error("cannot write " + tasks_path.string());
  write_tasks(set.tasks, t);
  std::ofstream p(profiles_path);
  if (!p) throw Error("cannot write " + profiles_path.string());
  write_profiles(set.profiles, p);
}

TaskSet load_task_set(const std::filesystem::path& tasks_path, const std::filesystem::path& profiles_path) {
  TaskSet set;
  std::ifstream t(tasks_path);
  if (!t) throw NotFoundError("task file", tasks_path.string());
  set.tasks = read_tasks(t);
  if (std::filesystem::exists(profiles_path)) {
    std::ifstream p(profiles_path);
    set.profiles = read_profiles(p);
  }
  return set;
}

// ---------------------------------------------------------------------------
// satisfaction

namespace {

bool options_offered(const Product& product, const OptionSelection& required, OptionSelection& resolved) {
  resolved.clear();
  for (const auto& [group, want] : required) {
    const auto* g = product.find_group(group);
    if (!g) return false;
    bool hit = false;
    for (const auto& v : g->values) {
      if (text::fuzzy_equal(want, v)) {
        resolved[group] = v;
        hit = true;
        break;
      }
    }
    if (!hit) return false;
  }
  return true;
}

bool options_and_price_ok(const Product& product, const TargetSpec& target) {
  OptionSelection resolved;
  if (!options_offered(product, target.options, resolved)) return false;
  return !target.price_cap || product.min_price_with(resolved) <= *target.price_cap;
}

}  // namespace

bool satisfies(const Product& product, const TargetSpec& target) {
  if (product.category != target.category) return false;
  if (match_attributes(target.attributes, product).ratio < 1.0) return false;
  return options_and_price_ok(product, target);
}

std::vector<std::string> satisfying_products(const Catalog& catalog, const TargetSpec& target) {
  std::vector<std::string> out;
  for (const auto& p : catalog.products()) {
    if (satisfies(p, target)) out.push_back(p.product_id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// instruction and reveal text

namespace {

std::string lower(std::string_view s) { return text::fold_label(s); }

std::string join_words(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += (i + 1 == items.size()) ? " and " : ", ";
    out += items[i];
  }
  return out;
}

std::string attribute_sentence(Rng& rng, const std::vector<std::string>& attrs) {
  std::vector<std::string> low;
  for (const auto& a : attrs) low.push_back(lower(a));
  static const std::vector<std::string> forms = {"It has to be {}.", "Must-have features: {}.",
                                                  "I care most about it being {}.", "Ideally it is {}."};
  auto s = rng.pick(forms);
  return s.replace(s.find("{}"), 2, join_words(low));
}

std::string option_sentence(Rng& rng, const std::string& group, const std::string& value) {
  if (group == "Color") {
    static const std::vector<std::string> forms = {"I prefer the {} colorway.", "Color-wise I want {}.",
                                                    "The color should be {}."};
    auto s = rng.pick(forms);
    return s.replace(s.find("{}"), 2, value);
  }
  static const std::vector<std::string> forms = {"The required {g} is {v}.", "I need {g} {v}.",
                                                  "Please pick {g} {v}."};
  auto s = rng.pick(forms);
  s.replace(s.find("{g}"), 3, lower(group));
  s.replace(s.find("{v}"), 3, value);
  return s;
}

std::string price_sentence(Rng& rng, double cap) {
  static const std::vector<std::string> forms = {"The budget is within {} yuan.", "Please keep it under {} yuan.",
                                                  "I can spend at most {} yuan."};
  auto s = rng.pick(forms);
  return s.replace(s.find("{}"), 2, text::format_number(cap));
}

std::string opener_sentence(Rng& rng, const std::string& noun) {
  static const std::vector<std::string> forms = {"Could you find me some {}?", "I am shopping for {}.",
                                                  "Please help me pick out {}.", "I want to buy some {}."};
  auto s = rng.pick(forms);
  return s.replace(s.find("{}"), 2, noun);
}

std::string reveal_text(const std::string& slot, const TargetSpec& t) {
  if (slot == "category") return "I want to buy some " + lower(t.category.fine_category) + ".";
  if (slot == "price") return "Budget within " + text::format_number(*t.price_cap) + " yuan.";
  if (slot.rfind("attribute:", 0) == 0) return "It should be " + lower(slot.substr(10)) + ".";
  const auto group = slot.substr(7);
  const auto& value = t.options.at(group);
  if (group == "Color") return "I'd like the " + value + " color.";
  return "My " + lower(group) + " is " + value + ".";
}

std::vector<RevealEntry> build_reveal_plan(const TargetSpec& t, const std::set<std::string>& via_profile) {
  std::vector<RevealEntry> plan;
  for (const auto& slot : constrained_slots(t)) plan.push_back({slot, reveal_text(slot, t), via_profile.count(slot) > 0});
  return plan;
}

/// Instruction from the slots that are not carried by a profile.
std::string build_instruction(const TargetSpec& t, const std::vector<RevealEntry>& plan, std::uint64_t seed) {
  Rng rng(derive_seed(seed, hash64("instruction")));
  std::vector<std::string> attrs;
  std::vector<std::string> parts{opener_sentence(rng, lower(t.category.fine_category))};
  for (const auto& r : plan) {
    if (!r.via_profile && r.slot.rfind("attribute:", 0) == 0) attrs.push_back(r.slot.substr(10));
  }
  if (!attrs.empty()) parts.push_back(attribute_sentence(rng, attrs));
  for (const auto& r : plan) {
    if (r.via_profile) continue;
    if (r.slot.rfind("option:", 0) == 0) {
      const auto g = r.slot.substr(7);
      parts.push_back(option_sentence(rng, g, t.options.at(g)));
    } else if (r.slot == "price") {
      parts.push_back(price_sentence(rng, *t.price_cap));
    }
  }
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : " ") + p;
  return out;
}

double round_up_to(double v, double step) { return std::ceil(v / step) * step; }

/// Tries to pin `product` down; nullopt when no tightening level isolates it.
std::optional<TargetSpec> isolate(const Catalog& catalog, const Product& product, Rng& rng) {
  const auto& siblings = catalog.tree().products_in(product.category);
  std::vector<OptionSelection> combos;
  const auto* color = product.find_group("Color");
  for (const auto& g : product.option_groups) {
    if (g.name == "Color") continue;
    for (const auto& cv : color ? color->values : std::vector<std::string>{""}) {
      for (const auto& v : g.values) {
        OptionSelection sel{{g.name, v}};
        if (color) sel["Color"] = cv;
        combos.push_back(std::move(sel));
      }
    }
    break;
  }
  if (combos.empty() && color) {
    for (const auto& cv : color->values) combos.push_back({{"Color", cv}});
  }
  rng.shuffle(combos);

  auto half = rng.sample(product.attributes, (product.attributes.size() + 1) / 2);
  // keep catalog order for readability
  std::vector<std::string> half_ordered;
  for (const auto& a : product.attributes) {
    if (std::find(half.begin(), half.end(), a) != half.end()) half_ordered.push_back(a);
  }

  TargetSpec base;
  base.product_id = product.product_id;
  base.category = product.category;
  base.title = product.title;
  base.canonical_query = product.title;

  for (int level = 1; level <= 3; ++level) {
    base.attributes = level == 1 ? half_ordered : product.attributes;
    std::vector<const Product*> pool;
    for (const auto& id : siblings) {
      const auto& p = catalog.get(id);
      if (p.product_id != product.product_id && match_attributes(base.attributes, p).ratio == 1.0) pool.push_back(&p);
    }
    for (const auto& combo : combos) {
      auto target = base;
      target.options = combo;
      const double exact = product.effective_price(combo);
      target.price_cap = level == 3 ? exact : round_up_to(exact, 50.0);
      if (!options_and_price_ok(product, target)) continue;
      const bool rival = std::any_of(pool.begin(), pool.end(),
                                     [&](const Product* p) { return options_and_price_ok(*p, target); });
      if (!rival) return target;
    }
  }
  return std::nullopt;
}

// distractor pools for profiles
const std::vector<std::string> kMemberships = {"Regular Member", "Silver Member", "Gold Member", "Platinum Member"};
const std::vector<std::string> kAgeRanges = {"18-24", "25-34", "35-44", "45-54", "55+"};
const std::vector<std::string> kGenders = {"Female", "Male"};
const std::vector<std::string> kSpending = {"Low", "Medium", "High"};
const std::vector<std::string> kMaterials = {"Breathable Mesh", "Synthetic Leather", "Organic Cotton", "Recycled Polyester",
                                             "Stainless Steel", "Bamboo Fiber", "Merino Wool", "Silicone"};
const std::vector<std::string> kStyles = {"Minimalist Sport", "Techwear", "Classic", "Streetwear", "Vintage", "Outdoor Utility"};
const std::vector<std::string> kDevices = {"iOS smartphone", "Android smartphone", "Tablet", "Desktop browser"};
const std::vector<std::string> kPayments = {"Alipay", "WeChat Pay", "Credit Card", "Bank Transfer"};
struct Place {
  const char* district;
  const char* city;
  const char* province;
};
const std::vector<Place> kPlaces = {{"Nanshan District", "Shenzhen", "Guangdong"},
                                    {"Xihu District", "Hangzhou", "Zhejiang"},
                                    {"Haidian District", "Beijing", "Beijing"},
                                    {"Pudong New Area", "Shanghai", "Shanghai"},
                                    {"Wuhou District", "Chengdu", "Sichuan"},
                                    {"Tianhe District", "Guangzhou", "Guangdong"}};
const std::vector<std::string> kTagPool = {"Mid-to-high-frequency spending", "Brand and function oriented",
                                           "Low promotion sensitivity",     "Weekend shopper",
                                           "Quality over price",            "Frequent reviewer"};

double round_to(double v, double step) { return std::round(v / step) * step; }

}  // namespace

// ---------------------------------------------------------------------------
// personalization

std::pair<Task, UserProfile> personalize(const Task& task, std::uint64_t seed) {
  if (task.personalized()) throw ValidationError("task " + task.task_id + " is already personalized", 0, "profile_ref");
  Rng rng(derive_seed(seed, hash64(task.task_id)));
  const auto& t = task.target;

  std::set<std::string> moved;
  if (t.price_cap) moved.insert("price");
  std::string size_group;
  for (const auto& [g, _] : t.options) {
    if (g != "Color") {
      size_group = g;
      moved.insert("option:" + g);
      break;
    }
  }
  std::vector<std::string> moved_attrs;
  if (t.attributes.size() >= 2) {
    const auto n = std::min<std::size_t>(2, t.attributes.size() - 1);
    moved_attrs = rng.sample(t.attributes, n);
    for (const auto& a : moved_attrs) moved.insert("attribute:" + a);
  }
  if (moved.size() < 2) {
    throw ValidationError("task " + task.task_id + " has fewer than two movable constraints", 0, "target");
  }

  const auto pools = VocabularyPools::builtin();
  UserProfile p;
  p.user_id = "U" + std::to_string(10000000 + rng.below(90000000));
  p.demographics = {rng.pick(kMemberships), rng.pick(kAgeRanges), rng.pick(kGenders), rng.pick(kSpending)};

  std::vector<std::string> brands;
  for (const auto& b : pools.brands) {
    if (!text::contains_phrase(t.title, b)) brands.push_back(b);
  }
  const std::vector<PreferenceLevel> levels = {PreferenceLevel::High, PreferenceLevel::Medium, PreferenceLevel::Low};
  for (const auto& b : rng.sample(brands, static_cast<std::size_t>(rng.between(2, 4)))) {
    p.brand_preferences.emplace_back(rng.pick(levels), b);
  }

  if (t.price_cap) {
    p.price_max = *t.price_cap;
    p.price_min = std::max(0.0, round_to(*t.price_cap * 0.4, 10.0));
  } else {
    p.price_min = 0;
    p.price_max = 1000;
  }
  p.features = moved_attrs;
  std::vector<std::string> spare;
  for (const auto& a : pools.attributes) {
    const bool related = std::any_of(t.attributes.begin(), t.attributes.end(),
                                     [&](const std::string& x) { return text::fuzzy_match(x, a) || text::fuzzy_match(a, x); });
    if (!related) spare.push_back(a);
  }
  p.features.push_back(rng.pick(spare));
  if (!size_group.empty()) p.size_preferences.emplace_back(size_group, t.options.at(size_group));
  p.materials = rng.sample(kMaterials, 2);
  std::vector<std::string> colors;
  const auto target_color = t.options.count("Color") ? t.options.at("Color") : std::string();
  for (const auto& c : pools.colors) {
    if (c != target_color) colors.push_back(c);
  }
  p.colors = rng.sample(colors, 2);
  p.styles = rng.sample(kStyles, 2);
  std::vector<std::string> domains = rng.sample(pools.domains, 4);
  for (const auto& d : domains) {
    if (d != t.category.domain) p.category_preferences.emplace_back(d, rng.pick(levels));
  }
  p.category_preferences.emplace_back(t.category.domain, PreferenceLevel::High);

  p.behavior.device = rng.pick(kDevices);
  p.behavior.daily_browsing_seconds = static_cast<int>(rng.between(300, 7200));
  std::string kw = lower(t.category.fine_category);
  for (const auto& a : moved_attrs) kw = lower(a) + " " + kw;
  p.behavior.search_keywords = {kw, lower(rng.pick(spare)) + " " + lower(t.category.first_category)};
  std::set<int> hours;
  while (hours.size() < 3) hours.insert(static_cast<int>(rng.between(6, 23)));
  p.behavior.active_hours.assign(hours.begin(), hours.end());
  p.behavior.visits_last_7_days = static_cast<int>(rng.between(1, 30));

  p.tags = rng.sample(kTagPool, 3);
  p.tags.push_back(p.demographics.membership_level);
  const auto& place = rng.pick(kPlaces);
  p.location = {place.district, place.city, place.province, "Asia/Shanghai"};
  p.transactions.coupon_usage_rate = static_cast<double>(rng.between(0, 100)) / 100.0;
  p.transactions.repeat_purchase_rate = static_cast<double>(rng.between(0, 100)) / 100.0;
  p.transactions.average_order_value = static_cast<double>(rng.between(3000, 60000)) / 100.0;
  p.transactions.payment_method = rng.pick(kPayments);
  p.transactions.promotion_sensitive = rng.chance(0.5);
  p.transactions.spending_last_30_days = static_cast<double>(rng.between(0, 500000)) / 100.0;
  p.transactions.orders_last_90_days = static_cast<int>(rng.between(0, 40));
  p.validate();

  Task out = task;
  out.reveal_plan = build_reveal_plan(t, moved);
  out.instruction = build_instruction(t, out.reveal_plan, derive_seed(seed, hash64(task.task_id)));
  out.profile_ref = p.user_id;
  out.scenario_tags = {Scenario::SingleTurnPersonalized, Scenario::MultiTurnPersonalized};
  return {std::move(out), std::move(p)};
}

TargetSpec reconstruct_target(const Task& task, const UserProfile* profile) {
  TargetSpec t = task.target;
  for (const auto& r : task.reveal_plan) {
    if (!r.via_profile) continue;
    if (!profile) throw ValidationError("slot " + r.slot + " is profile-carried but no profile given", 0, "profile_ref");
    if (r.slot == "price") {
      t.price_cap = profile->price_max;
    } else if (r.slot.rfind("option:", 0) == 0) {
      const auto g = r.slot.substr(7);
      auto it = std::find_if(profile->size_preferences.begin(), profile->size_preferences.end(),
                             [&](const auto& kv) { return kv.first == g; });
      if (it == profile->size_preferences.end()) throw ValidationError("profile lacks size preference " + g, 0, "Size Preferences");
      t.options[g] = it->second;
    } else if (r.slot.rfind("attribute:", 0) == 0) {
      const auto a = r.slot.substr(10);
      if (std::find(profile->features.begin(), profile->features.end(), a) == profile->features.end()) {
        throw ValidationError("profile lacks feature " + a, 0, "Features");
      }
    } else {
      throw ValidationError("slot " + r.slot + " cannot be profile-carried", 0, "reveal_plan");
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// generation

TaskSet generate_tasks(const Catalog& catalog, std::uint64_t seed, std::size_t count, const TaskMix& mix) {
  if (count == 0) throw ValidationError("task count must be at least 1", 0, "count");
  if (count > catalog.size()) {
    throw ValidationError("catalog has " + std::to_string(catalog.size()) + " products, cannot target " +
                              std::to_string(count) + " distinct ones",
                          0, "count");
  }
  Rng rng(derive_seed(seed, hash64("tasks")));
  std::vector<std::size_t> order(catalog.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  TaskSet set;
  for (std::size_t i : order) {
    if (set.tasks.size() == count) break;
    const auto& product = catalog.products()[i];
    auto target = isolate(catalog, product, rng);
    if (!target) continue;
    Task task;
    char id[16];
    std::snprintf(id, sizeof id, "t%05zu", set.tasks.size() + 1);
    task.task_id = id;
    task.target = std::move(*target);
    task.reveal_plan = build_reveal_plan(task.target, {});
    task.instruction = build_instruction(task.target, task.reveal_plan, derive_seed(seed, hash64(task.task_id)));
    task.scenario_tags = {Scenario::SingleTurn, Scenario::MultiTurn};
    if (mix.personalized_fraction > 0 && rng.chance(mix.personalized_fraction)) {
      auto [pt, profile] = personalize(task, seed);
      set.profiles.emplace(profile.user_id, std::move(profile));
      task = std::move(pt);
    }
    set.tasks.push_back(std::move(task));
  }
  if (set.tasks.size() < count) {
    throw ValidationError("only " + std::to_string(set.tasks.size()) + " of " + std::to_string(count) +
                              " tasks could be made unambiguous",
                          0, "count");
  }
  return set;
}

std::pair<std::vector<Task>, std::vector<Task>> split_tasks(const std::vector<Task>& tasks, double ratio,
                                                            std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split ratio must be strictly between 0 and 1", 0, "ratio");
  std::map<std::string, std::vector<std::size_t>> by_domain;
  for (std::size_t i = 0; i < tasks.size(); ++i) by_domain[tasks[i].domain()].push_back(i);

  // largest remainder so the global train count is round(n * ratio)
  const auto total_train = static_cast<std::size_t>(std::llround(static_cast<double>(tasks.size()) * ratio));
  std::map<std::string, std::size_t> quota;
  std::vector<std::pair<double, std::string>> remainders;
  std::size_t assigned = 0;
  for (const auto& [d, idx] : by_domain) {
    const double exact = static_cast<double>(idx.size()) * ratio;
    quota[d] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[d];
    remainders.emplace_back(exact - std::floor(exact), d);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total_train && k < remainders.size(); ++k, ++assigned) ++quota[remainders[k].second];

  std::vector<bool> train(tasks.size(), false);
  for (const auto& [d, idx] : by_domain) {
    Rng rng(derive_seed(seed, hash64(d)));
    auto shuffled = idx;
    rng.shuffle(shuffled);
    for (std::size_t k = 0; k < quota[d]; ++k) train[shuffled[k]] = true;
  }
  std::pair<std::vector<Task>, std::vector<Task>> out;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    Task t = tasks[i];
    t.split = train[i] ? Split::Train : Split::Test;
    (train[i] ? out.first : out.second).push_back(std::move(t));
  }
  return out;
}

std::vector<std::string> validate_tasks(const TaskSet& set, const Catalog& catalog) {
  std::vector<std::string> problems;
  std::set<std::string> ids;
  std::set<std::string> targets;
  for (const auto& t : set.tasks) {
    auto bad = [&](const std::string& msg) { problems.push_back(t.task_id + ": " + msg); };
    if (!ids.insert(t.task_id).second) bad("duplicate task id");
    if (!targets.insert(t.target.product_id).second) bad("target shared with another task");
    const auto* product = catalog.find(t.target.product_id);
    if (!product) {
      bad("target product " + t.target.product_id + " not in catalog");
      continue;
    }
    for (const auto& [g, v] : t.target.options) {
      const auto* grp = product->find_group(g);
      if (!grp || std::find(grp->values.begin(), grp->values.end(), v) == grp->values.end()) {
        bad("target option " + g + "=" + v + " not offered");
      }
    }
    const auto sat = satisfying_products(catalog, t.target);
    if (sat.size() != 1 || sat.front() != t.target.product_id) {
      bad(std::to_string(sat.size()) + " products satisfy the target");
    }
    std::vector<std::string> plan_slots;
    for (const auto& r : t.reveal_plan) plan_slots.push_back(r.slot);
    auto want = constrained_slots(t.target);
    std::sort(plan_slots.begin(), plan_slots.end());
    std::sort(want.begin(), want.end());
    if (plan_slots != want) bad("reveal plan does not cover every constrained slot exactly once");
    const bool any_profile_slot =
        std::any_of(t.reveal_plan.begin(), t.reveal_plan.end(), [](const RevealEntry& r) { return r.via_profile; });
    if (t.personalized()) {
      const auto* profile = set.profile_for(t);
      if (!profile) {
        bad("profile " + *t.profile_ref + " missing");
        continue;
      }
      try {
        if (reconstruct_target(t, profile) != t.target) bad("instruction and profile do not imply the target");
      } catch (const ValidationError& e) {
        bad(e.what());
      }
      if (t.supports(Scenario::SingleTurn) || t.supports(Scenario::MultiTurn)) bad("personalized task tagged plain");
    } else {
      if (any_profile_slot) bad("plain task has profile-carried slots");
      if (t.supports(Scenario::SingleTurnPersonalized) || t.supports(Scenario::MultiTurnPersonalized)) {
        bad("plain task tagged personalized");
      }
    }
  }
  return problems;
}

}  // namespace shopsim
