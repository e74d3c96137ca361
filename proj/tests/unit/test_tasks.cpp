#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "shopsim/error.hpp"
#include "shopsim/tasks.hpp"
#include "shopsim/text.hpp"

using namespace shopsim;

namespace {

const Catalog& fine120() {
  static const Catalog c = generate_catalog(1, GenerationSpec::preset("fine120"));
  return c;
}

const Catalog& desk() {
  static const Catalog c = generate_catalog(2, GenerationSpec::preset("desk"));
  return c;
}

std::string dump(const TaskSet& s) {
  std::ostringstream out;
  write_tasks(s.tasks, out);
  write_profiles(s.profiles, out);
  return out.str();
}

/// Independent scan: a product satisfies a target if it sits in the same fine
/// category, covers every attribute, offers every required option value and
/// can be bought within the cap with those options.
std::size_t count_satisfying(const Catalog& c, const TargetSpec& t) {
  std::size_t n = 0;
  for (const auto& p : c.products()) {
    if (p.category != t.category) continue;
    bool ok = true;
    for (const auto& a : t.attributes) {
      bool hit = text::contains_phrase(p.title, a) || text::contains_phrase(p.description, a);
      for (const auto& have : p.attributes) hit = hit || text::fuzzy_match(a, have);
      ok = ok && hit;
    }
    for (const auto& [g, v] : t.options) {
      const auto* grp = p.find_group(g);
      bool offered = false;
      if (grp) {
        for (const auto& x : grp->values) offered = offered || text::fuzzy_equal(x, v);
      }
      ok = ok && offered;
    }
    if (ok && t.price_cap) ok = p.min_price_with(t.options) <= *t.price_cap;
    n += ok;
  }
  return n;
}

}  // namespace

TEST_SUITE("tasks") {

TEST_CASE("generated tasks have exactly one satisfying product") {
  const auto set = generate_tasks(fine120(), 7, 10);
  REQUIRE(set.tasks.size() == 10);
  std::set<std::string> targets;
  for (const auto& t : set.tasks) {
    CHECK(count_satisfying(fine120(), t.target) == 1);
    CHECK(satisfying_products(fine120(), t.target) == std::vector<std::string>{t.target.product_id});
    CHECK(targets.insert(t.target.product_id).second);
    CHECK(t.target.price_cap.has_value());
  }
  CHECK(validate_tasks(set, fine120()).empty());
}

TEST_CASE("generation errors and determinism") {
  CHECK_THROWS_AS(generate_tasks(fine120(), 1, 0), ValidationError);
  CHECK_THROWS_AS(generate_tasks(fine120(), 1, fine120().size() + 1), ValidationError);
  CHECK(dump(generate_tasks(fine120(), 3, 12, {0.5})) == dump(generate_tasks(fine120(), 3, 12, {0.5})));
  CHECK(dump(generate_tasks(fine120(), 3, 12)) != dump(generate_tasks(fine120(), 4, 12)));
}

TEST_CASE("reveal plan covers every constrained slot in order") {
  const auto set = generate_tasks(fine120(), 9, 20, {0.5});
  for (const auto& t : set.tasks) {
    std::vector<std::string> slots;
    for (const auto& r : t.reveal_plan) slots.push_back(r.slot);
    CHECK(slots == constrained_slots(t.target));
    CHECK(slots.front() == "category");
  }
}

TEST_CASE("personalize moves price and size into the profile") {
  const auto set = generate_tasks(fine120(), 5, 30);
  const Task* task = nullptr;
  for (const auto& t : set.tasks) {
    if (t.target.attributes.size() >= 2 && t.target.options.size() == 2) {
      task = &t;
      break;
    }
  }
  REQUIRE(task != nullptr);
  const auto cap = text::format_number(*task->target.price_cap);
  std::string group, size;
  for (const auto& [g, v] : task->target.options) {
    if (g != "Color") group = g, size = v;
  }
  REQUIRE(text::contains_phrase(task->instruction, cap));
  REQUIRE(text::contains_phrase(task->instruction, size));

  const auto [pt, profile] = personalize(*task, 11);
  CHECK_FALSE(text::contains_phrase(pt.instruction, cap));
  CHECK_FALSE(text::contains_phrase(pt.instruction, size));
  CHECK(profile.price_max == *task->target.price_cap);
  CHECK(profile.price_min <= profile.price_max);
  CHECK(std::find(profile.size_preferences.begin(), profile.size_preferences.end(),
                  std::pair<std::string, std::string>{group, size}) != profile.size_preferences.end());
  REQUIRE(profile.brand_preferences.size() >= 2);
  for (const auto& [level, brand] : profile.brand_preferences) CHECK_FALSE(text::contains_phrase(task->target.title, brand));
  CHECK(pt.profile_ref == profile.user_id);
  CHECK(pt.target == task->target);
  CHECK(reconstruct_target(pt, &profile) == task->target);

  // same seed, same output
  const auto again = personalize(*task, 11);
  CHECK(again.first == pt);
  CHECK(to_json(again.second) == to_json(profile));
  CHECK_THROWS_AS(personalize(pt, 11), ValidationError);
}

TEST_CASE("profiles and tasks round-trip through files") {
  const auto set = generate_tasks(fine120(), 6, 15, {0.4});
  const auto dir = std::filesystem::temp_directory_path() / "shopsim_tasks_rt";
  std::filesystem::create_directories(dir);
  save_task_set(set, dir / "t.jsonl", profiles_path_for(dir / "t.jsonl"));
  CHECK(profiles_path_for(dir / "t.jsonl") == dir / "t.profiles.jsonl");
  const auto back = load_task_set(dir / "t.jsonl", dir / "t.profiles.jsonl");
  CHECK(dump(back) == dump(set));
  for (const auto& t : back.tasks) {
    if (t.personalized()) {
      REQUIRE(back.profile_for(t) != nullptr);
      CHECK(t.supports(Scenario::MultiTurnPersonalized));
      CHECK_FALSE(t.supports(Scenario::SingleTurn));
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("split is a stratified, deterministic partition") {
  const auto set = generate_tasks(desk(), 3, 100);
  const auto [train, test] = split_tasks(set.tasks, 0.9, 4);
  CHECK(train.size() == 90);
  CHECK(test.size() == 10);
  std::set<std::string> ids;
  for (const auto& t : train) {
    CHECK(t.split == Split::Train);
    ids.insert(t.task_id);
  }
  for (const auto& t : test) {
    CHECK(t.split == Split::Test);
    CHECK(ids.insert(t.task_id).second);
  }
  CHECK(ids.size() == 100);

  std::map<std::string, std::pair<int, int>> per;  // domain -> (train, total)
  for (const auto& t : train) ++per[t.domain()].first;
  for (const auto& t : set.tasks) ++per[t.domain()].second;
  for (const auto& [d, c] : per) CHECK(std::abs(c.first - 0.9 * c.second) <= 1.0);

  const auto again = split_tasks(set.tasks, 0.9, 4);
  CHECK(again.first == train);
}

TEST_CASE("validation reports broken references") {
  auto set = generate_tasks(fine120(), 8, 5, {1.0});
  CHECK(validate_tasks(set, fine120()).empty());
  set.profiles.clear();
  CHECK_FALSE(validate_tasks(set, fine120()).empty());
}

TEST_CASE("scenario names") {
  for (auto s : kAllScenarios) CHECK(parse_scenario(to_string(s)) == s);
  CHECK_THROWS_AS(parse_scenario("bogus"), ValidationError);
  CHECK(ScenarioConfig::defaults(Scenario::SingleTurn).step_limit == 30);
  CHECK(ScenarioConfig::defaults(Scenario::MultiTurnPersonalized).step_limit == 40);
  CHECK(ScenarioConfig::defaults(Scenario::SingleTurnPersonalized).inject_profile);
}

}
