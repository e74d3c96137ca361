#include <doctest.h>

#include <filesystem>
#include <memory>

#include "shopsim/env.hpp"
#include "shopsim/error.hpp"
#include "shopsim/text.hpp"

using namespace shopsim;

namespace {

const std::filesystem::path kFixtures = SHOPSIM_FIXTURES;
const std::string kYonex = "724988974873";
const std::string kWhiteBlue = "SHB510WCR White/Blue (Wide last)";

Task yonex_task(const Catalog& c) {
  const auto& p = c.get(kYonex);
  Task t;
  t.task_id = "yonex";
  t.instruction = "I need badminton shoes with cushioning, White/Blue, size 40, under 600 yuan.";
  t.target = {p.product_id, p.category, p.title, "yonex badminton shoes", {"Cushioning"},
              {{"Color Options", kWhiteBlue}, {"Size", "40"}}, 600.0};
  t.scenario_tags = {Scenario::SingleTurn, Scenario::MultiTurn};
  for (const auto& s : constrained_slots(t.target)) t.reveal_plan.push_back({s, "(" + s + ")", false});
  return t;
}

struct Generated {
  Catalog catalog = generate_catalog(1, GenerationSpec::preset("fine120"));
  SearchIndex index{catalog};
  TaskSet tasks = generate_tasks(catalog, 7, 6, {0.5});
};

const Generated& gen() {
  static const Generated g;
  return g;
}

const Task& task_where(bool personalized) {
  for (const auto& t : gen().tasks.tasks) {
    if (t.personalized() == personalized) return t;
  }
  FAIL("no matching task");
  throw;
}

Environment make_env(const Task& t, Scenario s) {
  const auto* profile = gen().tasks.profile_for(t);
  std::unique_ptr<Shopper> shopper;
  if (is_multi_turn(s)) shopper = std::make_unique<ScriptedShopper>(t, 1);
  return Environment(gen().catalog, gen().index, t, ScenarioConfig::defaults(s), profile, std::move(shopper));
}

Action click(std::string v) { return {ActionKind::Click, std::move(v), {}}; }
Action search(std::string q) { return {ActionKind::Search, std::move(q), {}}; }

}  // namespace

TEST_SUITE("env") {

TEST_CASE("action parsing") {
  auto a = parse_action("Thought: the shoes look right.\nAction: click[Buy Now]");
  CHECK(a.kind == ActionKind::Click);
  CHECK(a.content == "Buy Now");
  CHECK(a.raw == "Thought: the shoes look right.\nAction: click[Buy Now]");

  a = parse_action("Action_type: ask_shopper\nAction_content: What is your budget?");
  CHECK(a.kind == ActionKind::AskShopper);
  CHECK(a.content == "What is your budget?");

  a = parse_action("Action_type: interact_with_env / Action_content: search[red running shoes]");
  CHECK(a.kind == ActionKind::Search);
  CHECK(a.content == "red running shoes");

  CHECK(parse_action("  search[ desk lamp ] ").content == "desk lamp");

  try {
    parse_action("do something");
    FAIL("expected a protocol error");
  } catch (const ProtocolError& e) {
    CHECK(e.raw() == "do something");
  }
  CHECK_THROWS_AS(parse_action("search[]"), ProtocolError);
  CHECK_THROWS_AS(parse_action("Action_type: dance\nAction_content: now"), ProtocolError);
  CHECK_THROWS_AS(parse_action("Action_type: ask_shopper"), ProtocolError);

  for (const auto& x : {Action{ActionKind::Search, "a b", ""}, Action{ActionKind::Click, "< prev", ""},
                        Action{ActionKind::AskShopper, "Which size?", ""}}) {
    auto back = parse_action(format_action(x));
    back.raw.clear();
    CHECK(back == x);
  }
}

TEST_CASE("range-priced item resolves once the priced group is chosen") {
  const auto catalog = load_catalog(kFixtures / "yonex_range.jsonl");
  const SearchIndex index(catalog);
  const auto task = yonex_task(catalog);
  Environment env(catalog, index, task, ScenarioConfig::defaults(Scenario::SingleTurn), nullptr, nullptr);

  auto obs = env.reset();
  CHECK(obs.text == "WebShop [SEP] Instruction: [SEP] " + task.instruction + " [SEP] Search");
  CHECK(obs.search_available);
  CHECK(obs.clickable.empty());
  CHECK_THROWS_AS(env.reset(), StateError);

  auto r = env.step(search("yonex badminton shoes"));
  CHECK(r.observation.clickable == std::vector<std::string>{"back to search", kYonex});
  CHECK(r.observation.text.find("Page 1 (Total results: 1)") != std::string::npos);

  r = env.step(click(kYonex));
  CHECK(r.observation.text.find("Price: 528.0 to 660.0") != std::string::npos);
  CHECK(r.observation.clickable.size() == 6 + 5 + 10);
  CHECK(r.observation.clickable[5] == "buy now");

  r = env.step(click("Size"));  // group names are not buttons
  CHECK(r.observation.error.has_value());
  r = env.step(click("40"));
  CHECK(r.observation.text.find("Price: 528.0 to 660.0") != std::string::npos);
  r = env.step(click("shb510wcr white/blue (wide last)"));
  CHECK(r.observation.text.find("Price: 528 [SEP]") != std::string::npos);
  CHECK(std::get<ItemPage>(env.page()).selected.at("Color Options") == kWhiteBlue);
  r = env.step(click("SHB510WCR Black/Red (Wide last)"));
  CHECK(r.observation.text.find("Price: 660 [SEP]") != std::string::npos);
  r = env.step(click(kWhiteBlue));

  r = env.step(click("Description"));
  CHECK(r.observation.text.find("Description: Wide-last court shoe") != std::string::npos);

  r = env.step(click("buy now"));
  CHECK(r.terminal);
  CHECK(env.termination() == Termination::Purchase);
  CHECK(r.observation.text.rfind("Thank you for your purchase! [SEP] " + kYonex, 0) == 0);
  CHECK(r.observation.text.find("Price: 528") != std::string::npos);
  CHECK(env.step_count() == 9);
  const auto rw = env.reward();
  CHECK(rw.r_succ == 1);
  CHECK(rw.r_loose == doctest::Approx(1.0));
  CHECK_THROWS_AS(env.step(click("buy now")), StateError);
  CHECK(env.step_count() == 9);
}

TEST_CASE("prev restores the results page it came from") {
  const auto& t = task_where(false);
  auto env = make_env(t, Scenario::SingleTurn);
  env.reset();
  auto r = env.step(search(t.target.category.fine_category));
  REQUIRE(std::find(r.observation.clickable.begin(), r.observation.clickable.end(), "next >") != r.observation.clickable.end());
  r = env.step(click("next >"));
  const auto page2 = r.observation;
  CHECK(page2.text.find("Page 2 ") != std::string::npos);
  r = env.step(click(page2.clickable.back()));
  CHECK(std::holds_alternative<ItemPage>(env.page()));
  r = env.step(click("< prev"));
  CHECK(r.observation == page2);
  r = env.step(click("back to search"));
  CHECK(r.observation.search_available);
  r = env.step(search("x"));
  CHECK(r.observation.text.find("(Total results: 0)") != std::string::npos);
  r = env.step(search("again"));
  CHECK(r.observation.error.has_value());
  CHECK(env.first_search_query() == t.target.category.fine_category);
}

TEST_CASE("single-turn ask_shopper is fatal and not counted") {
  auto env = make_env(task_where(false), Scenario::SingleTurn);
  env.reset();
  env.step(search("anything"));
  const auto page = env.page();
  CHECK_THROWS_AS(env.step({ActionKind::AskShopper, "What is your budget?", "raw"}), ProtocolError);
  CHECK(env.step_count() == 1);
  CHECK(env.page() == page);
  CHECK_FALSE(env.terminal());
}

TEST_CASE("step limits end the episode with a zero reward") {
  for (auto [scenario, limit] : {std::pair{Scenario::SingleTurn, 30}, std::pair{Scenario::MultiTurn, 40}}) {
    auto env = make_env(task_where(false), scenario);
    env.reset();
    StepResult r;
    for (int i = 0; i < limit; ++i) {
      REQUIRE_FALSE(env.terminal());
      r = i % 2 ? env.step(click("no such button")) : env.reject_unparseable("???", "no action");
      CHECK(r.observation.error.has_value());
    }
    CHECK(r.terminal);
    CHECK(env.step_count() == limit);
    CHECK(env.termination() == Termination::StepLimit);
    CHECK(r.observation.text.rfind("Step limit reached", 0) == 0);
    CHECK(env.reward() == RewardBreakdown{});
    CHECK_THROWS_AS(env.step(search("late")), StateError);
  }
}

TEST_CASE("multi-turn header is the shopper opener") {
  const auto& t = task_where(false);
  auto env = make_env(t, Scenario::MultiTurn);
  const auto obs = env.reset();
  REQUIRE(obs.shopper_utterance.has_value());
  CHECK(env.header() == *obs.shopper_utterance);
  CHECK(obs.text == "WebShop [SEP] Instruction: [SEP] " + *obs.shopper_utterance + " [SEP] Search");
  CHECK(obs.text.find(t.instruction) == std::string::npos);
  auto r = env.step({ActionKind::AskShopper, "What is your budget?", ""});
  CHECK(r.observation.shopper_utterance.has_value());
  CHECK(env.step_count() == 1);
  CHECK(env.dialogue().size() == 3);
  CHECK(obs.format_for_agent().rfind("[Shopper] ", 0) == 0);
  CHECK(obs.format_for_agent().find("Is search available: True\nClickable buttons: []") != std::string::npos);
}

TEST_CASE("scenario preconditions") {
  const auto& plain = task_where(false);
  const auto& pers = task_where(true);
  CHECK_THROWS_AS(Environment(gen().catalog, gen().index, pers, ScenarioConfig::defaults(Scenario::SingleTurnPersonalized),
                              nullptr, nullptr),
                  StateError);
  CHECK_THROWS_AS(make_env(plain, Scenario::SingleTurnPersonalized), StateError);
  CHECK_THROWS_AS(Environment(gen().catalog, gen().index, plain, ScenarioConfig::defaults(Scenario::MultiTurn), nullptr,
                              nullptr),
                  StateError);
  auto env = make_env(pers, Scenario::SingleTurnPersonalized);
  const auto obs = env.reset();
  CHECK(obs.text.find(" [SEP] Profile: [SEP] {") != std::string::npos);
  auto multi = make_env(pers, Scenario::MultiTurnPersonalized);
  CHECK(multi.reset().text.find(" [SEP] Profile: [SEP] {") != std::string::npos);
  CHECK_THROWS_AS(Environment(gen().catalog, gen().index, plain, ScenarioConfig::defaults(Scenario::SingleTurn), nullptr,
                              nullptr)
                      .step(search("x")),
                  StateError);
}

TEST_CASE("observation json round trip") {
  Observation o{"a [SEP] b", false, {"back to search", "x"}, "hi", std::nullopt};
  CHECK(observation_from_json(to_json(o)) == o);
  CHECK_THROWS_AS(observation_from_json(nlohmann::ordered_json::object()), ValidationError);
}

}
