#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "shopsim/catalog.hpp"
#include "shopsim/reward.hpp"

namespace shopsim {

enum class Scenario { SingleTurn, MultiTurn, SingleTurnPersonalized, MultiTurnPersonalized };

inline constexpr Scenario kAllScenarios[] = {Scenario::SingleTurn, Scenario::SingleTurnPersonalized,
                                             Scenario::MultiTurn, Scenario::MultiTurnPersonalized};

constexpr bool is_multi_turn(Scenario s) {
  return s == Scenario::MultiTurn || s == Scenario::MultiTurnPersonalized;
}
constexpr bool is_personalized(Scenario s) {
  return s == Scenario::SingleTurnPersonalized || s == Scenario::MultiTurnPersonalized;
}
/// "single_turn", "multi_turn", "single_turn_pers", "multi_turn_pers".
std::string_view to_string(Scenario s);
/// Throws ValidationError on unknown names.
Scenario parse_scenario(std::string_view name);

enum class Split { Train, Test };
std::string_view to_string(Split s);
Split parse_split(std::string_view name);

/// Per-scenario runtime settings.
struct ScenarioConfig {
  Scenario scenario = Scenario::SingleTurn;
  int step_limit = 30;
  /// "scripted" or "llm".
  std::string shopper_backend = "scripted";
  bool inject_profile = false;

  static ScenarioConfig defaults(Scenario s);
};

/// Slot ids: "category", "attribute:<name>", "option:<group>", "price".
struct RevealEntry {
  std::string slot;
  std::string text;
  /// Carried by the user profile instead of the dialogue.
  bool via_profile = false;
  bool operator==(const RevealEntry&) const = default;
};

struct Task {
  std::string task_id;
  std::string instruction;
  TargetSpec target;
  std::vector<Scenario> scenario_tags;
  std::optional<std::string> profile_ref;
  Split split = Split::Test;
  std::vector<RevealEntry> reveal_plan;

  bool supports(Scenario s) const;
  bool personalized() const { return profile_ref.has_value(); }
  const std::string& domain() const { return target.category.domain; }
  bool operator==(const Task&) const = default;
};

/// Every slot the target constrains, in reveal order.
std::vector<std::string> constrained_slots(const TargetSpec& target);

enum class PreferenceLevel { High, Medium, Low, None };
std::string_view to_string(PreferenceLevel l);
PreferenceLevel parse_level(std::string_view s);

struct UserProfile {
  std::string user_id;
  struct {
    std::string membership_level;
    std::string age_range;
    std::string gender;
    std::string spending_level;
  } demographics;
  std::vector<std::pair<PreferenceLevel, std::string>> brand_preferences;
  double price_min = 0;
  double price_max = 0;
  std::vector<std::string> features;
  /// option group name -> preferred value.
  std::vector<std::pair<std::string, std::string>> size_preferences;
  std::vector<std::string> materials;
  std::vector<std::string> colors;
  std::vector<std::string> styles;
  std::vector<std::pair<std::string, PreferenceLevel>> category_preferences;
  struct {
    std::string device;
    int daily_browsing_seconds = 0;
    std::vector<std::string> search_keywords;
    std::vector<int> active_hours;
    int visits_last_7_days = 0;
  } behavior;
  std::vector<std::string> tags;
  struct {
    std::string district;
    std::string city;
    std::string province;
    std::string time_zone;
  } location;
  struct {
    double coupon_usage_rate = 0;
    double repeat_purchase_rate = 0;
    double average_order_value = 0;
    std::string payment_method;
    bool promotion_sensitive = false;
    double spending_last_30_days = 0;
    int orders_last_90_days = 0;
  } transactions;

  /// Throws ValidationError (price range order).
  void validate() const;
};

nlohmann::ordered_json to_json(const UserProfile& p);
UserProfile profile_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json to_json(const Task& t);
Task task_from_json(const nlohmann::ordered_json& j);

struct TaskSet {
  std::vector<Task> tasks;
  std::map<std::string, UserProfile> profiles;

  const Task& get(std::string_view task_id) const;
  const Task* find(std::string_view task_id) const;
  const UserProfile* profile_for(const Task& task) const;
};

/// Task file: one task per line. Profile file: one profile per line.
void write_tasks(const std::vector<Task>& tasks, std::ostream& out);
std::vector<Task> read_tasks(std::istream& in);
void write_profiles(const std::map<std::string, UserProfile>& profiles, std::ostream& out);
std::map<std::string, UserProfile> read_profiles(std::istream& in);
void save_task_set(const TaskSet& set, const std::filesystem::path& tasks_path,
                   const std::filesystem::path& profiles_path);
TaskSet load_task_set(const std::filesystem::path& tasks_path, const std::filesystem::path& profiles_path);
/// "<stem>.profiles.jsonl" next to the task file.
std::filesystem::path profiles_path_for(const std::filesystem::path& tasks_path);

/// True if `product` fulfils every constraint in `target` (same fine
/// category, all attributes, every required option offered, and cheapest
/// matching price within the cap).
bool satisfies(const Product& product, const TargetSpec& target);
/// Ids of all catalog products satisfying `target`.
std::vector<std::string> satisfying_products(const Catalog& catalog, const TargetSpec& target);

struct TaskMix {
  /// Share of tasks that get a profile.
  double personalized_fraction = 0.0;
};

/// Distinct target per task; each target is the unique product satisfying its
/// spec. Throws ValidationError when count is 0, exceeds the catalog, or
/// uniqueness cannot be reached.
TaskSet generate_tasks(const Catalog& catalog, std::uint64_t seed, std::size_t count, const TaskMix& mix = {});

/// Moves the price cap, the non-colour option and up to two attributes out
/// of the instruction into a generated profile. Throws ValidationError when
/// fewer than two constraints can move.
std::pair<Task, UserProfile> personalize(const Task& task, std::uint64_t seed);

/// Rebuilds the full TargetSpec constraints from the instruction-side slots
/// plus the profile. Used to check that personalization lost nothing.
TargetSpec reconstruct_target(const Task& task, const UserProfile* profile);

/// Stratified by domain; marks `split` on every task. Throws ValidationError
/// unless 0 < ratio < 1.
std::pair<std::vector<Task>, std::vector<Task>> split_tasks(const std::vector<Task>& tasks, double ratio,
                                                            std::uint64_t seed);

/// Returns human-readable problems (empty = valid).
std::vector<std::string> validate_tasks(const TaskSet& set, const Catalog& catalog);

}  // namespace shopsim
