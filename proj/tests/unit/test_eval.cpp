#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "shopsim/error.hpp"
#include "shopsim/eval.hpp"

using namespace shopsim;
using nlohmann::ordered_json;

namespace {

const World& world() {
  static const World w = [] {
    auto c = generate_catalog(3, GenerationSpec::preset("bench"));
    auto t = generate_tasks(c, 11, 60, {0.5});
    return World(std::move(c), std::move(t));
  }();
  return w;
}

std::vector<const Task*> first_tasks(std::size_t n, std::optional<Scenario> scenario = std::nullopt) {
  std::vector<const Task*> out;
  for (const auto& t : world().tasks().tasks) {
    if (out.size() == n) break;
    if (!scenario || t.supports(*scenario)) out.push_back(&t);
  }
  return out;
}

EvalOptions eval_opts(std::vector<Scenario> s = {}) {
  EvalOptions o;
  o.scenarios = std::move(s);
  o.seed = 9;
  o.parallelism = 2;
  o.clock = fixed_clock();
  return o;
}

EpisodeTrace scripted(const Task& t, Scenario s, const std::vector<std::string>& actions) {
  EpisodeOptions o;
  o.scenario = s;
  o.seed = 1;
  o.clock = fixed_clock();
  Episode ep(world(), t, o);
  ep.reset();
  for (const auto& a : actions) {
    if (ep.terminal()) break;
    ep.step_text(a);
  }
  if (!ep.terminal()) ep.abandon("script ended");
  return ep.trace();
}

std::size_t count_code(const std::vector<ErrorAnnotation>& v, ErrorCode c) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](const ErrorAnnotation& a) { return a.code == c; }));
}

double nearest_rank(std::vector<int> v, double q) {
  std::sort(v.begin(), v.end());
  const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::max<std::size_t>(k, 1) - 1];
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("oracle solves every task in every scenario") {
  const auto res = run_evaluation(world(), make_policy_factory("oracle"), first_tasks(50), eval_opts());
  REQUIRE(res.metrics.scenarios.size() == 4);
  for (const auto& r : res.records) {
    CHECK(r.reward.r_succ == 1);
    CHECK(r.steps <= 12);
    CHECK(r.termination == "purchase");
  }
  for (const auto& m : res.metrics.scenarios) CHECK(m.r_succ == 1.0);
  CHECK(res.records.size() == 100);
}

TEST_CASE("random clicking rarely succeeds") {
  const auto tasks = first_tasks(50, Scenario::SingleTurn);
  const auto res = run_evaluation(world(), make_policy_factory("random"), tasks, eval_opts({Scenario::SingleTurn}));
  REQUIRE(res.metrics.scenarios.size() == 1);
  CHECK(res.metrics.scenarios[0].r_succ < 0.05);
  CHECK(res.metrics.scenarios[0].episodes == tasks.size());
}

TEST_CASE("argument errors") {
  CHECK_THROWS_AS(run_evaluation(world(), make_policy_factory("oracle"), {}, eval_opts()), ValidationError);
  RolloutOptions ro;
  ro.group_size = 1;
  CHECK_THROWS_AS(collect_rollouts(world(), make_policy_factory("oracle"), first_tasks(2), ro), ValidationError);
  CHECK_THROWS_AS(make_policy_factory("greedy"), ValidationError);
  CHECK_THROWS_AS(make_policy_factory("noisy:2"), ValidationError);
  CHECK_THROWS_AS(make_policy_factory("llm"), StateError);
  CHECK(make_policy_factory("noisy:0.3")()->id().find("0.3") != std::string::npos);
  CHECK(parse_reward_selector("strict") == RewardSelector::Strict);
  CHECK_THROWS_AS(parse_reward_selector("succ"), ValidationError);
}

TEST_CASE("metrics recomputed from trace files match the live run") {
  const auto dir = std::filesystem::temp_directory_path() / "shopsim_eval_traces";
  std::filesystem::remove_all(dir);
  auto o = eval_opts();
  o.trace_dir = dir;
  const auto res = run_evaluation(world(), make_policy_factory("noisy:0.3"), first_tasks(16), o);

  std::vector<EpisodeRecord> back;
  for (const auto& [name, trace] : load_traces(dir)) back.push_back(record_from_trace(trace));
  CHECK(back.size() == res.records.size());
  const auto again = MetricsTable::from_records(back);
  CHECK(again == res.metrics);
  CHECK(again.to_csv() == res.metrics.to_csv());
  std::filesystem::remove_all(dir);

  // overall rewards are the unweighted mean of the scenario rows
  double loose = 0, strict = 0, steps = 0;
  for (const auto& m : res.metrics.scenarios) {
    loose += m.r_loose;
    strict += m.r_strict;
    steps += m.mean_steps;
  }
  const double n = static_cast<double>(res.metrics.scenarios.size());
  CHECK(res.metrics.overall.r_loose == doctest::Approx(loose / n));
  CHECK(res.metrics.overall.r_strict == doctest::Approx(strict / n));
  CHECK(res.metrics.overall.mean_steps == doctest::Approx(steps / n));
  CHECK(res.metrics.overall.episodes == res.records.size());

  // per-scenario means and percentiles from the raw records
  for (const auto& m : res.metrics.scenarios) {
    double sum = 0;
    std::vector<int> st;
    for (const auto& r : res.records) {
      if (to_string(r.scenario) != m.name) continue;
      sum += r.reward.r_loose;
      st.push_back(r.steps);
    }
    REQUIRE_FALSE(st.empty());
    CHECK(m.r_loose == doctest::Approx(sum / static_cast<double>(st.size())));
    CHECK(m.p50_steps == nearest_rank(st, 0.5));
    CHECK(m.p90_steps == nearest_rank(st, 0.9));
    std::size_t hist = 0;
    for (const auto& [k, c] : m.step_histogram) hist += c;
    CHECK(hist == st.size());
  }
  const auto csv = res.metrics.to_csv();
  CHECK(csv.rfind("scenario,episodes,r_loose,r_strict,r_succ,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(res.metrics.histogram_csv().rfind("scenario,steps,count\n", 0) == 0);
}

TEST_CASE("rollout groups") {
  RolloutOptions ro;
  ro.group_size = 4;
  ro.seed = 5;
  ro.parallelism = 2;
  ro.clock = fixed_clock();
  const auto groups = collect_rollouts(world(), make_policy_factory("noisy:0.3"), first_tasks(6, Scenario::SingleTurn), ro);
  REQUIRE(groups.size() == 6);
  bool any_spread = false;
  for (const auto& g : groups) {
    REQUIRE(g.rewards.size() == 4);
    CHECK(g.traces.size() == 4);
    CHECK(std::set<std::uint64_t>(g.seeds.begin(), g.seeds.end()).size() == 4);
    double mean = 0;
    for (double r : g.rewards) mean += r / 4.0;
    double var = 0;
    for (double r : g.rewards) var += (r - mean) * (r - mean) / 4.0;
    CHECK(g.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(g.std == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(g.rewards[i] == g.loose[i]);
      CHECK(g.strict[i] <= g.loose[i] + 1e-12);
      CHECK(g.advantages[i] == doctest::Approx(g.std > 0 ? (g.rewards[i] - mean) / g.std : 0.0));
      CHECK(g.traces[i].recorded_reward().r_loose == g.loose[i]);
    }
    any_spread = any_spread || g.std > 0;
  }
  CHECK(any_spread);
  std::ostringstream out;
  write_rollouts(groups, out);
  const auto s = out.str();
  CHECK(std::count(s.begin(), s.end(), '\n') == 24);
  const auto first = ordered_json::parse(s.substr(0, s.find('\n')));
  for (const char* k : {"task_id", "rollout", "seed", "reward", "advantage", "r_loose", "r_strict", "group_mean", "group_std"}) {
    CHECK(first.contains(k));
  }

  ro.selector = RewardSelector::Strict;
  const auto strict = collect_rollouts(world(), make_policy_factory("noisy:0.3"), first_tasks(6, Scenario::SingleTurn), ro);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    CHECK(strict[i].rewards == groups[i].strict);
    CHECK(strict[i].seeds == groups[i].seeds);
  }
}

TEST_CASE("oracle rollouts are degenerate") {
  RolloutOptions ro;
  ro.group_size = 3;
  ro.clock = fixed_clock();
  const auto groups = collect_rollouts(world(), make_policy_factory("oracle"), first_tasks(2, Scenario::SingleTurn), ro);
  for (const auto& g : groups) {
    CHECK(g.degenerate);
    CHECK(g.std == 0.0);
    CHECK(g.advantages == std::vector<double>(3, 0.0));
  }
}

TEST_CASE("SFT export filters on success or strict reward") {
  std::vector<EpisodeTrace> traces;
  auto o = eval_opts({Scenario::SingleTurn});
  const auto tasks = first_tasks(10, Scenario::SingleTurn);
  const std::vector<const Task*> good(tasks.begin(), tasks.begin() + 4), bad(tasks.begin() + 4, tasks.end());
  for (const auto& r : run_evaluation(world(), make_policy_factory("oracle"), good, o).records) traces.push_back(r.trace);
  for (const auto& r : run_evaluation(world(), make_policy_factory("random"), bad, o).records) traces.push_back(r.trace);
  REQUIRE(traces.size() == 10);

  std::size_t succ = 0, succ_actions = 0;
  for (const auto& t : traces) {
    if (t.recorded_reward().r_succ != 1) continue;
    ++succ;
    for (const auto& e : t.events) succ_actions += e["event"] == "action";
  }
  std::ostringstream out;
  const auto stats = export_sft(world(), traces, {}, out);
  CHECK(stats.traces_in == 10);
  CHECK(stats.traces_kept == succ);
  CHECK(succ >= 4);
  CHECK(stats.examples == succ_actions);

  std::istringstream in(out.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    const auto j = ordered_json::parse(line);
    const int step = j["step"];
    CHECK(j["messages"][0]["role"] == "system");
    CHECK(j["messages"].size() == static_cast<std::size_t>(2 * step));
    CHECK(j["messages"].back()["role"] == "user");
  }
  CHECK(lines == stats.examples);

  std::ostringstream loose_out;
  const auto loose = export_sft(world(), traces, {0.0}, loose_out);
  CHECK(loose.traces_kept == 10);
  CHECK(loose_out.str().find(out.str().substr(0, out.str().find('\n'))) != std::string::npos);
  std::ostringstream none_out;
  CHECK(export_sft(world(), traces, {1.01}, none_out).traces_kept == 0);
}

TEST_CASE("SFT examples from multi-turn traces include shopper questions") {
  const auto res = run_evaluation(world(), make_policy_factory("oracle"), first_tasks(3, Scenario::MultiTurn),
                                  eval_opts({Scenario::MultiTurn}));
  std::vector<EpisodeTrace> traces;
  for (const auto& r : res.records) traces.push_back(r.trace);
  std::ostringstream out;
  export_sft(world(), traces, {}, out);
  CHECK(out.str().find("Action_type: ask_shopper") != std::string::npos);
  CHECK(out.str().find("[Shopper] ") != std::string::npos);
}

TEST_CASE("rule annotations") {
  const auto& t = *first_tasks(1, Scenario::SingleTurn)[0];
  const auto repeated = scripted(t, Scenario::SingleTurn,
                                 {"search[red running shoes]", "click[back to search]", "search[red running shoes]",
                                  "click[back to search]", "search[blue desk lamp]"});
  auto a = annotate_rules(repeated, "r");
  CHECK(count_code(a, ErrorCode::SearchRepeatedSimilarQuery) == 1);
  CHECK(a.size() == 1);
  CHECK(a[0].step == 3);

  const auto missing = scripted(t, Scenario::SingleTurn, {"search[shoes]", "click[Add to cart]"});
  a = annotate_rules(missing, "m");
  CHECK(count_code(a, ErrorCode::ClickNonexistentButton) == 1);

  const auto res = run_evaluation(world(), make_policy_factory("oracle"), first_tasks(10), eval_opts());
  std::vector<std::pair<std::string, EpisodeTrace>> clean;
  for (const auto& r : res.records) clean.emplace_back(r.task_id, r.trace);
  const auto rep = annotate_errors(clean, nullptr);
  CHECK(rep.annotations.empty());
  CHECK(rep.coverage == "rules");

  const auto& mt = *first_tasks(1, Scenario::MultiTurn)[0];
  const auto early_buy = scripted(mt, Scenario::MultiTurn,
                                  {"search[" + mt.target.canonical_query + "]", "click[" + mt.target.product_id + "]",
                                   std::string("Action_type: ask_shopper\nAction_content: ") + OraclePolicy::kConfirm,
                                   "click[buy now]"});
  a = annotate_rules(early_buy, "b");
  CHECK(count_code(a, ErrorCode::BuyPurchaseAfterRejection) == 1);
}

TEST_CASE("classifier failures keep the rule subset") {
  class Broken : public ErrorClassifier {
   public:
    std::vector<ErrorAnnotation> classify(const EpisodeTrace&, const std::string&) override {
      throw BackendError(BackendError::Kind::Unreachable, "down");
    }
    std::string id() const override { return "broken"; }
  } broken;
  const auto& t = *first_tasks(1, Scenario::SingleTurn)[0];
  const auto tr = scripted(t, Scenario::SingleTurn, {"search[shoes]", "click[nope]"});
  const auto rep = annotate_errors({{"x", tr}}, &broken);
  CHECK(rep.coverage == "rules+broken");
  CHECK(rep.annotations.size() == 1);
  CHECK(rep.classifier_failures.size() == 1);

  class Canned : public ChatBackend {
   public:
    std::string complete(const std::vector<ChatMessage>&) override {
      return "Here you go: [{\"code\": \"search/Others\", \"step\": 1, \"rationale\": \"vague query\"}]";
    }
    std::string id() const override { return "canned"; }
  };
  LlmErrorClassifier llm(std::make_shared<Canned>());
  const auto got = llm.classify(tr, "x");
  REQUIRE(got.size() == 1);
  CHECK(got[0].code == ErrorCode::SearchOthers);
  CHECK(got[0].annotator == "llm:canned");
  CHECK(to_json(got[0])["family"] == "search");
}

TEST_CASE("error code names") {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < kErrorCodeCount; ++i) {
    const auto c = static_cast<ErrorCode>(i);
    const auto full = std::string(error_family(c)) + "/" + std::string(error_label(c));
    CHECK(parse_error_code(full) == c);
    CHECK(seen.insert(full).second);
  }
  CHECK(parse_error_code("repeated similar query") == ErrorCode::SearchRepeatedSimilarQuery);
  CHECK(parse_error_code("Click/Others") == ErrorCode::ClickOthers);
  CHECK_THROWS_AS(parse_error_code("Others"), ValidationError);
  CHECK_THROWS_AS(parse_error_code("search/Nonexistent button"), ValidationError);
  std::set<std::string> families;
  for (std::size_t i = 0; i < kErrorCodeCount; ++i) families.insert(std::string(error_family(static_cast<ErrorCode>(i))));
  CHECK(families == std::set<std::string>{"search", "click", "buy", "ask", "personalization", "shopper"});
}

}
