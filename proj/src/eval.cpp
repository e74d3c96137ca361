#include "shopsim/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "shopsim/error.hpp"
#include "shopsim/prompts.hpp"
#include "shopsim/text.hpp"

namespace shopsim {

using json = nlohmann::ordered_json;

namespace {

bool has_button(const Observation& obs, std::string_view label) {
  return std::find(obs.clickable.begin(), obs.clickable.end(), label) != obs.clickable.end();
}

std::string click(const std::string& label) { return format_action({ActionKind::Click, label, ""}); }
std::string search(const std::string& q) { return format_action({ActionKind::Search, q, ""}); }
std::string ask(const std::string& q) { return format_action({ActionKind::AskShopper, q, ""}); }

/// Text between "Instruction: [SEP] " and the next separator.
std::string header_of(const std::string& page) {
  const std::string key = "Instruction: [SEP] ";
  const auto b = page.find(key);
  if (b == std::string::npos) return {};
  const auto start = b + key.size();
  const auto e = page.find(" [SEP]", start);
  return page.substr(start, e == std::string::npos ? std::string::npos : e - start);
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first
/// exception is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&](std::size_t slot) {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(slot, i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = n;
        return;
      }
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker, t);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

// ---- policies ----

void OraclePolicy::begin(const Task& task, Scenario scenario, std::uint64_t, const UserProfile*) {
  task_ = &task;
  scenario_ = scenario;
  asked_ = false;
  confirmed_ = false;
  fallback_ = false;
  selected_.clear();
}

std::string OraclePolicy::act(const Observation& obs, const std::vector<DialogueTurn>&) {
  if (!task_) throw StateError("oracle policy used before begin()");
  const auto& target = task_->target;
  if (is_multi_turn(scenario_) && !asked_) {
    asked_ = true;
    return ask(kAskAll);
  }
  if (obs.search_available) {
    selected_.clear();
    return search(fallback_ ? target.title : target.canonical_query);
  }
  if (has_button(obs, "buy now")) {
    if (obs.text.find(target.title) == std::string::npos) {
      selected_.clear();
      return click("< prev");
    }
    for (const auto& [group, value] : target.options) {
      if (std::find(selected_.begin(), selected_.end(), group) != selected_.end()) continue;
      selected_.push_back(group);
      return click(value);
    }
    if (is_multi_turn(scenario_) && !confirmed_) {
      confirmed_ = true;
      return ask(kConfirm);
    }
    return click("buy now");
  }
  selected_.clear();
  if (has_button(obs, target.product_id)) return click(target.product_id);
  if (has_button(obs, "next >")) return click("next >");
  // the canonical query missed; retry once with the full title
  fallback_ = true;
  return click("back to search");
}

void RandomPolicy::begin(const Task& task, Scenario, std::uint64_t seed, const UserProfile*) {
  rng_ = Rng(derive_seed(seed, hash64("random:" + task.task_id)));
}

std::string RandomPolicy::act(const Observation& obs, const std::vector<DialogueTurn>&) {
  if (obs.search_available || obs.clickable.empty()) {
    auto q = header_of(obs.text);
    if (text::tokenize(q).empty()) q = "product";
    return search(q);
  }
  return click(rng_.pick(obs.clickable));
}

void NoisyOraclePolicy::begin(const Task& task, Scenario scenario, std::uint64_t seed, const UserProfile* profile) {
  oracle_.begin(task, scenario, seed, profile);
  rng_ = Rng(derive_seed(seed, hash64("noise:" + task.task_id)));
}

std::string NoisyOraclePolicy::act(const Observation& obs, const std::vector<DialogueTurn>& dialogue) {
  if (!obs.clickable.empty() && rng_.chance(epsilon_)) {
    oracle_.invalidate();
    return click(rng_.pick(obs.clickable));
  }
  return oracle_.act(obs, dialogue);
}

std::string NoisyOraclePolicy::id() const { return "noisy:" + text::format_number(epsilon_); }

void LlmPolicy::begin(const Task&, Scenario scenario, std::uint64_t, const UserProfile* profile) {
  messages_.clear();
  messages_.push_back({"system", agent_system_prompt(scenario, is_personalized(scenario) ? profile : nullptr)});
}

std::string LlmPolicy::act(const Observation& obs, const std::vector<DialogueTurn>&) {
  messages_.push_back({"user", obs.format_for_agent()});
  auto out = backend_->complete(messages_);
  messages_.push_back({"assistant", out});
  return out;
}

PolicyFactory make_policy_factory(const std::string& name, std::shared_ptr<ChatBackend> chat) {
  if (name == "oracle") return [] { return std::make_unique<OraclePolicy>(); };
  if (name == "random") return [] { return std::make_unique<RandomPolicy>(); };
  if (name.rfind("noisy", 0) == 0) {
    double eps = 0.2;
    if (name.size() > 5) {
      if (name[5] != ':') throw ValidationError("bad policy name '" + name + "'", 0, "policy");
      try {
        eps = std::stod(name.substr(6));
      } catch (const std::exception&) {
        throw ValidationError("bad noise level in '" + name + "'", 0, "policy");
      }
    }
    if (eps < 0 || eps > 1) throw ValidationError("noise level must be in [0, 1]", 0, "policy");
    return [eps] { return std::make_unique<NoisyOraclePolicy>(eps); };
  }
  if (name == "llm") {
    if (!chat) throw StateError("llm policy selected but no chat backend configured");
    return [chat] { return std::make_unique<LlmPolicy>(chat); };
  }
  throw ValidationError("unknown policy '" + name + "' (expected oracle, random, noisy[:eps] or llm)", 0, "policy");
}

// ---- episodes ----

std::uint64_t episode_seed(std::uint64_t base, const std::string& task_id, Scenario scenario, std::size_t rollout) {
  auto key = task_id + "|" + std::string(to_string(scenario));
  if (rollout > 0) key += "|" + std::to_string(rollout);
  return derive_seed(base, hash64(key));
}

EpisodeRecord record_from_trace(const EpisodeTrace& trace) {
  const auto* f = trace.final_event();
  if (!f) throw StateError("trace is not complete");
  const auto& s = trace.session();
  EpisodeRecord r;
  r.task_id = s.at("task_id").get<std::string>();
  r.scenario = parse_scenario(s.at("config").at("scenario").get<std::string>());
  r.seed = s.at("config").at("seed").get<std::uint64_t>();
  r.reward = reward_from_json(f->at("reward"));
  r.steps = f->at("steps").get<int>();
  r.termination = f->at("termination").get<std::string>();
  r.trace = trace;
  return r;
}

EpisodeRecord run_episode(const World& world, Policy& policy, const Task& task, EpisodeOptions options,
                          std::unique_ptr<TraceSink> sink) {
  const auto scenario = options.scenario;
  const auto seed = options.seed;
  Episode ep(world, task, std::move(options), std::move(sink));
  policy.begin(task, scenario, seed, world.tasks().profile_for(task));
  auto obs = ep.reset();
  while (!ep.terminal()) {
    std::string raw;
    try {
      raw = policy.act(obs, ep.env().dialogue());
    } catch (const Error& e) {
      ep.abandon(std::string("policy failed: ") + e.what());
      break;
    }
    try {
      obs = ep.step_text(raw).observation;
    } catch (const ProtocolError& e) {
      ep.abandon(std::string("protocol violation: ") + e.what());
    } catch (const BackendError& e) {
      ep.abandon(std::string("shopper backend failed: ") + e.what());
    }
  }
  return record_from_trace(ep.trace());
}

namespace {

struct Job {
  const Task* task;
  Scenario scenario;
  std::uint64_t seed;
};

std::string trace_file_name(const Job& j) {
  return j.task->task_id + "." + std::string(to_string(j.scenario)) + "." + std::to_string(j.seed) + ".jsonl";
}

}  // namespace

EvalResult run_evaluation(const World& world, const PolicyFactory& policy, const std::vector<const Task*>& tasks,
                          const EvalOptions& options) {
  if (tasks.empty()) throw ValidationError("task set is empty", 0, "tasks");
  std::vector<Scenario> scenarios = options.scenarios;
  if (scenarios.empty()) scenarios.assign(std::begin(kAllScenarios), std::end(kAllScenarios));
  std::vector<Job> jobs;
  for (const auto* t : tasks) {
    for (auto s : scenarios) {
      if (t->supports(s)) jobs.push_back({t, s, episode_seed(options.seed, t->task_id, s)});
    }
  }
  if (jobs.empty()) throw ValidationError("no task supports the requested scenarios", 0, "scenario");
  if (!options.trace_dir.empty()) std::filesystem::create_directories(options.trace_dir);

  EvalResult result;
  result.records.resize(jobs.size());
  std::vector<std::unique_ptr<Policy>> policies(std::max<std::size_t>(1, std::min(options.parallelism, jobs.size())));
  for (auto& p : policies) p = policy();
  parallel_for(jobs.size(), policies.size(), [&](std::size_t slot, std::size_t i) {
    const auto& j = jobs[i];
    EpisodeOptions eo;
    eo.scenario = j.scenario;
    eo.seed = j.seed;
    eo.shopper_backend = options.shopper_backend;
    eo.shopper = options.shopper;
    eo.chat = options.shopper_chat;
    eo.session_id = j.task->task_id + "." + std::string(to_string(j.scenario));
    eo.clock = options.clock ? options.clock : system_clock();
    std::unique_ptr<TraceSink> sink;
    if (!options.trace_dir.empty()) sink = std::make_unique<FileTraceSink>(options.trace_dir / trace_file_name(j));
    result.records[i] = run_episode(world, *policies[slot], *j.task, std::move(eo), std::move(sink));
  });
  result.metrics = MetricsTable::from_records(result.records);
  return result;
}

// ---- metrics ----

namespace {

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Nearest-rank percentile of sorted values.
double percentile(const std::vector<int>& sorted, double p) {
  if (sorted.empty()) return 0;
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size())));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

ScenarioMetrics summarize(std::string name, const std::vector<const EpisodeRecord*>& rs) {
  ScenarioMetrics m;
  m.name = std::move(name);
  m.episodes = rs.size();
  std::vector<double> loose, strict, succ, fin, cat, att, opt, price, steps;
  std::vector<int> sorted;
  for (const auto* r : rs) {
    loose.push_back(r->reward.r_loose);
    strict.push_back(r->reward.r_strict);
    succ.push_back(r->reward.r_succ);
    fin.push_back(r->reward.r_finish);
    cat.push_back(r->reward.r_cat);
    att.push_back(r->reward.r_att);
    opt.push_back(r->reward.r_opt);
    price.push_back(r->reward.r_price);
    steps.push_back(r->steps);
    sorted.push_back(r->steps);
    ++m.step_histogram[r->steps];
  }
  m.r_loose = mean(loose);
  m.r_strict = mean(strict);
  m.r_succ = mean(succ);
  m.r_finish = mean(fin);
  m.r_cat = mean(cat);
  m.r_att = mean(att);
  m.r_opt = mean(opt);
  m.r_price = mean(price);
  m.mean_steps = mean(steps);
  std::sort(sorted.begin(), sorted.end());
  m.p50_steps = percentile(sorted, 0.5);
  m.p90_steps = percentile(sorted, 0.9);
  return m;
}

std::string num(double v) { return text::format_number(v); }

}  // namespace

MetricsTable MetricsTable::from_records(const std::vector<EpisodeRecord>& records) {
  // sort so sums do not depend on completion order
  std::vector<const EpisodeRecord*> all;
  for (const auto& r : records) all.push_back(&r);
  std::sort(all.begin(), all.end(), [](const EpisodeRecord* a, const EpisodeRecord* b) {
    return std::tie(a->task_id, a->seed) < std::tie(b->task_id, b->seed);
  });
  MetricsTable t;
  for (auto s : kAllScenarios) {
    std::vector<const EpisodeRecord*> rs;
    for (const auto* r : all) {
      if (r->scenario == s) rs.push_back(r);
    }
    if (!rs.empty()) t.scenarios.push_back(summarize(std::string(to_string(s)), rs));
  }
  t.overall = summarize("overall", all);
  if (!t.scenarios.empty()) {
    auto avg = [&](double ScenarioMetrics::*f) {
      std::vector<double> v;
      for (const auto& m : t.scenarios) v.push_back(m.*f);
      return mean(v);
    };
    t.overall.r_loose = avg(&ScenarioMetrics::r_loose);
    t.overall.r_strict = avg(&ScenarioMetrics::r_strict);
    t.overall.r_succ = avg(&ScenarioMetrics::r_succ);
    t.overall.r_finish = avg(&ScenarioMetrics::r_finish);
    t.overall.r_cat = avg(&ScenarioMetrics::r_cat);
    t.overall.r_att = avg(&ScenarioMetrics::r_att);
    t.overall.r_opt = avg(&ScenarioMetrics::r_opt);
    t.overall.r_price = avg(&ScenarioMetrics::r_price);
    t.overall.mean_steps = avg(&ScenarioMetrics::mean_steps);
  }
  return t;
}

namespace {

json metrics_json(const ScenarioMetrics& m) {
  json j;
  j["scenario"] = m.name;
  j["episodes"] = m.episodes;
  j["r_loose"] = m.r_loose;
  j["r_strict"] = m.r_strict;
  j["r_succ"] = m.r_succ;
  j["r_finish"] = m.r_finish;
  j["r_cat"] = m.r_cat;
  j["r_att"] = m.r_att;
  j["r_opt"] = m.r_opt;
  j["r_price"] = m.r_price;
  j["mean_steps"] = m.mean_steps;
  j["p50_steps"] = m.p50_steps;
  j["p90_steps"] = m.p90_steps;
  json h = json::object();
  for (const auto& [k, n] : m.step_histogram) h[std::to_string(k)] = n;
  j["step_histogram"] = h;
  return j;
}

}  // namespace

json MetricsTable::to_json() const {
  json j;
  j["scenarios"] = json::array();
  for (const auto& m : scenarios) j["scenarios"].push_back(metrics_json(m));
  j["overall"] = metrics_json(overall);
  return j;
}

std::string MetricsTable::to_csv() const {
  std::string out =
      "scenario,episodes,r_loose,r_strict,r_succ,r_finish,r_cat,r_att,r_opt,r_price,mean_steps,p50_steps,p90_steps\n";
  auto row = [&](const ScenarioMetrics& m) {
    out += m.name + "," + std::to_string(m.episodes);
    for (double v : {m.r_loose, m.r_strict, m.r_succ, m.r_finish, m.r_cat, m.r_att, m.r_opt, m.r_price, m.mean_steps,
                     m.p50_steps, m.p90_steps}) {
      out += "," + num(v);
    }
    out += "\n";
  };
  for (const auto& m : scenarios) row(m);
  row(overall);
  return out;
}

std::string MetricsTable::to_text() const {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-18s %8s %8s %8s %8s %8s %8s %8s %8s %8s %6s %6s %6s\n", "scenario", "episodes",
                "loose", "strict", "succ", "finish", "cat", "att", "opt", "price", "steps", "p50", "p90");
  out += buf;
  auto row = [&](const ScenarioMetrics& m) {
    std::snprintf(buf, sizeof buf, "%-18s %8zu %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %6.2f %6.0f %6.0f\n",
                  m.name.c_str(), m.episodes, m.r_loose, m.r_strict, m.r_succ, m.r_finish, m.r_cat, m.r_att, m.r_opt,
                  m.r_price, m.mean_steps, m.p50_steps, m.p90_steps);
    out += buf;
  };
  for (const auto& m : scenarios) row(m);
  row(overall);
  for (const auto& m : scenarios) {
    out += "\nsteps histogram: " + m.name + "\n";
    std::size_t peak = 1;
    for (const auto& [k, n] : m.step_histogram) peak = std::max(peak, n);
    for (const auto& [k, n] : m.step_histogram) {
      const auto bar = std::string(std::max<std::size_t>(1, n * 40 / peak), '#');
      std::snprintf(buf, sizeof buf, "%4d | %-40s %zu\n", k, bar.c_str(), n);
      out += buf;
    }
  }
  return out;
}

std::string MetricsTable::histogram_csv() const {
  std::string out = "scenario,steps,count\n";
  for (const auto& m : scenarios) {
    for (const auto& [k, n] : m.step_histogram) out += m.name + "," + std::to_string(k) + "," + std::to_string(n) + "\n";
  }
  return out;
}

// ---- rollouts ----

RewardSelector parse_reward_selector(std::string_view s) {
  if (s == "loose" || s == "r_loose") return RewardSelector::Loose;
  if (s == "strict" || s == "r_strict") return RewardSelector::Strict;
  throw ValidationError("unknown reward selector '" + std::string(s) + "' (expected loose or strict)", 0, "reward");
}

namespace {

std::vector<std::string> action_sequence(const EpisodeTrace& t) {
  std::vector<std::string> out;
  for (const auto& e : t.events) {
    if (e.at("event") == "action") out.push_back(e.at("action").at("raw").get<std::string>());
  }
  return out;
}

}  // namespace

std::vector<RolloutGroup> collect_rollouts(const World& world, const PolicyFactory& policy,
                                           const std::vector<const Task*>& tasks, const RolloutOptions& options) {
  if (options.group_size < 2) throw ValidationError("group size must be at least 2", 0, "group_size");
  std::vector<const Task*> eligible;
  for (const auto* t : tasks) {
    if (t->supports(options.scenario)) eligible.push_back(t);
  }
  if (eligible.empty()) throw ValidationError("no task supports the requested scenario", 0, "scenario");

  const std::size_t g = options.group_size;
  std::vector<EpisodeRecord> records(eligible.size() * g);
  std::vector<std::unique_ptr<Policy>> policies(std::max<std::size_t>(1, std::min(options.parallelism, records.size())));
  for (auto& p : policies) p = policy();
  parallel_for(records.size(), policies.size(), [&](std::size_t slot, std::size_t i) {
    const auto* task = eligible[i / g];
    EpisodeOptions eo;
    eo.scenario = options.scenario;
    eo.seed = episode_seed(options.seed, task->task_id, options.scenario, i % g + 1);
    eo.session_id = task->task_id + ".r" + std::to_string(i % g);
    eo.clock = options.clock ? options.clock : system_clock();
    records[i] = run_episode(world, *policies[slot], *task, std::move(eo));
  });

  std::vector<RolloutGroup> groups;
  for (std::size_t k = 0; k < eligible.size(); ++k) {
    RolloutGroup grp;
    grp.task_id = eligible[k]->task_id;
    for (std::size_t r = 0; r < g; ++r) {
      auto& rec = records[k * g + r];
      grp.seeds.push_back(rec.seed);
      grp.loose.push_back(rec.reward.r_loose);
      grp.strict.push_back(rec.reward.r_strict);
      grp.rewards.push_back(options.selector == RewardSelector::Loose ? rec.reward.r_loose : rec.reward.r_strict);
      grp.traces.push_back(std::move(rec.trace));
    }
    grp.mean = mean(grp.rewards);
    double var = 0;
    for (double x : grp.rewards) var += (x - grp.mean) * (x - grp.mean);
    grp.std = std::sqrt(var / static_cast<double>(g));
    for (double x : grp.rewards) grp.advantages.push_back(grp.std > 0 ? (x - grp.mean) / grp.std : 0.0);
    const auto first = action_sequence(grp.traces.front());
    grp.degenerate = std::all_of(grp.traces.begin() + 1, grp.traces.end(),
                                 [&](const EpisodeTrace& t) { return action_sequence(t) == first; });
    groups.push_back(std::move(grp));
  }
  return groups;
}

void write_rollouts(const std::vector<RolloutGroup>& groups, std::ostream& out) {
  for (const auto& g : groups) {
    for (std::size_t r = 0; r < g.rewards.size(); ++r) {
      json j;
      j["task_id"] = g.task_id;
      j["rollout"] = r;
      j["seed"] = g.seeds[r];
      j["reward"] = g.rewards[r];
      j["advantage"] = g.advantages[r];
      j["r_loose"] = g.loose[r];
      j["r_strict"] = g.strict[r];
      j["group_mean"] = g.mean;
      j["group_std"] = g.std;
      out << j.dump() << "\n";
    }
  }
}

// ---- SFT export ----

SftStats export_sft(const World& world, const std::vector<EpisodeTrace>& traces, const SftFilter& filter,
                    std::ostream& out) {
  SftStats stats;
  for (const auto& t : traces) {
    ++stats.traces_in;
    const auto* f = t.final_event();
    if (!f) throw StateError("trace is not complete");
    const auto r = t.recorded_reward();
    const bool keep = filter.min_strict ? r.r_strict >= *filter.min_strict : r.r_succ == 1;
    if (!keep) continue;
    ++stats.traces_kept;

    const auto& s = t.session();
    const auto task_id = s.at("task_id").get<std::string>();
    const auto scenario = parse_scenario(s.at("config").at("scenario").get<std::string>());
    const auto& task = world.tasks().get(task_id);
    const auto* profile = is_personalized(scenario) ? world.tasks().profile_for(task) : nullptr;

    json messages = json::array();
    messages.push_back({{"role", "system"}, {"content", agent_system_prompt(scenario, profile)}});
    for (const auto& e : t.events) {
      const auto kind = e.at("event").get<std::string>();
      if (kind == "observation") {
        messages.push_back(
            {{"role", "user"}, {"content", observation_from_json(e.at("observation")).format_for_agent()}});
      } else if (kind == "action") {
        const auto raw = e.at("action").at("raw").get<std::string>();
        json line;
        line["task_id"] = task_id;
        line["scenario"] = std::string(to_string(scenario));
        line["step"] = e.at("step");
        line["messages"] = messages;
        line["action"] = raw;
        out << line.dump() << "\n";
        ++stats.examples;
        messages.push_back({{"role", "assistant"}, {"content", raw}});
      }
    }
  }
  return stats;
}

// ---- error taxonomy ----

namespace {

struct CodeInfo {
  ErrorCode code;
  std::string_view family;
  std::string_view label;
};

constexpr CodeInfo kCodes[] = {
    {ErrorCode::SearchIgnoredKeyAttribute, "search", "Ignored key attribute"},
    {ErrorCode::SearchAbandonedHighMatch, "search", "Abandoned high-match result"},
    {ErrorCode::SearchRepeatedSimilarQuery, "search", "Repeated similar query"},
    {ErrorCode::SearchOthers, "search", "Others"},
    {ErrorCode::ClickViolatedHardRequirement, "click", "Violated hard requirement"},
    {ErrorCode::ClickUnconfirmedKeyAttribute, "click", "Unconfirmed key attribute"},
    {ErrorCode::ClickNonexistentButton, "click", "Nonexistent button"},
    {ErrorCode::ClickRetriedRejectedAttribute, "click", "Retried rejected attribute"},
    {ErrorCode::ClickOthers, "click", "Others"},
    {ErrorCode::BuyNoDetailConfirmation, "buy", "No detail confirmation"},
    {ErrorCode::BuyPurchaseAfterRejection, "buy", "Purchase after rejection"},
    {ErrorCode::BuyOthers, "buy", "Others"},
    {ErrorCode::AskNotAskedWhenMissing, "ask", "Do not ask when info missing"},
    {ErrorCode::AskOverConfirmedKnownInfo, "ask", "Over-confirmed known info"},
    {ErrorCode::AskAfterFarewell, "ask", "Asked after farewell"},
    {ErrorCode::AskOthers, "ask", "Others"},
    {ErrorCode::PersonalIgnored, "personalization", "Ignore personal info"},
    {ErrorCode::PersonalOverinterpreted, "personalization", "Overinterpret personal info"},
    {ErrorCode::PersonalMixedPriorities, "personalization", "Mix short- and long-term priorities"},
    {ErrorCode::ShopperAddedExtraIntent, "shopper", "Adding extra intent"},
    {ErrorCode::ShopperDistortedIntent, "shopper", "Distorting target intent"},
    {ErrorCode::ShopperSilentOnKeyGoal, "shopper", "Silent on key goal"},
};
static_assert(std::size(kCodes) == kErrorCodeCount);

const CodeInfo& info(ErrorCode c) { return kCodes[static_cast<std::size_t>(c)]; }

double jaccard(const std::string& a, const std::string& b) {
  const auto va = text::tokenize(a);
  const auto vb = text::tokenize(b);
  const std::set<std::string> sa(va.begin(), va.end()), sb(vb.begin(), vb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

constexpr double kSimilarQuery = 0.8;

}  // namespace

std::string_view error_family(ErrorCode c) { return info(c).family; }
std::string_view error_label(ErrorCode c) { return info(c).label; }

ErrorCode parse_error_code(std::string_view s) {
  const auto slash = s.find('/');
  const auto family = slash == std::string_view::npos ? std::string_view{} : s.substr(0, slash);
  const auto label = slash == std::string_view::npos ? s : s.substr(slash + 1);
  const CodeInfo* found = nullptr;
  for (const auto& ci : kCodes) {
    if (text::fold_label(ci.label) != text::fold_label(label)) continue;
    if (!family.empty() && ci.family != text::fold_label(family)) continue;
    if (found) throw ValidationError("ambiguous error code '" + std::string(s) + "'; prefix it with its family", 0, "code");
    found = &ci;
  }
  if (!found) throw ValidationError("unknown error code '" + std::string(s) + "'", 0, "code");
  return found->code;
}

json to_json(const ErrorAnnotation& a) {
  json j;
  j["trace_ref"] = a.trace_ref;
  j["family"] = std::string(error_family(a.code));
  j["code"] = std::string(error_label(a.code));
  j["step"] = a.step;
  j["annotator"] = a.annotator;
  j["rationale"] = a.rationale;
  return j;
}

std::vector<ErrorAnnotation> annotate_rules(const EpisodeTrace& trace, const std::string& trace_ref) {
  std::vector<ErrorAnnotation> out;
  auto add = [&](ErrorCode c, int step, std::string why) {
    out.push_back({trace_ref, c, step, "rules", std::move(why)});
  };
  const bool scripted = trace.session().at("config").value("shopper_backend", "scripted") == "scripted";

  std::optional<std::string> last_query;
  bool farewell = false;
  bool refused = false;
  std::string last_action_kind;
  std::string last_click;
  for (const auto& e : trace.events) {
    const auto kind = e.at("event").get<std::string>();
    const int step = e.at("step").get<int>();
    if (kind == "action") {
      const auto& a = e.at("action");
      last_action_kind = a.at("kind").get<std::string>();
      const auto content = a.at("content").get<std::string>();
      if (last_action_kind == "search") {
        if (last_query && jaccard(*last_query, content) >= kSimilarQuery) {
          add(ErrorCode::SearchRepeatedSimilarQuery, step,
              "query '" + content + "' nearly repeats '" + *last_query + "' with nothing new from the shopper");
        }
        last_query = content;
      } else if (last_action_kind == "ask_shopper" && farewell) {
        add(ErrorCode::AskAfterFarewell, step, "asked the shopper again after the farewell");
      } else if (last_action_kind == "click") {
        last_click = content;
        if (text::fold_label(content) == "buy now" && refused && scripted) {
          add(ErrorCode::BuyPurchaseAfterRejection, step, "clicked buy now after the shopper refused the purchase");
        }
      }
    } else if (kind == "shopper") {
      // new information resets the repeated-query window
      last_query.reset();
      farewell = e.value("farewell", false);
      if (e.contains("confirmation")) refused = !e.at("confirmation").at("approved").get<bool>();
    } else if (kind == "error" && !e.value("fatal", false) && last_action_kind == "click") {
      add(ErrorCode::ClickNonexistentButton, step, "clicked '" + last_click + "', which is not on the page");
    }
  }
  return out;
}

std::vector<ErrorAnnotation> LlmErrorClassifier::classify(const EpisodeTrace& trace, const std::string& trace_ref) {
  std::string codes;
  for (const auto& ci : kCodes) codes += "- " + std::string(ci.family) + "/" + std::string(ci.label) + "\n";
  std::string transcript;
  for (const auto& e : trace.events) {
    const auto kind = e.at("event").get<std::string>();
    const auto step = std::to_string(e.at("step").get<int>());
    if (kind == "observation") {
      transcript += "[" + step + "] page: " + e.at("observation").at("text").get<std::string>() + "\n";
    } else if (kind == "action") {
      transcript += "[" + step + "] agent: " + e.at("action").at("raw").get<std::string>() + "\n";
    } else if (kind == "shopper") {
      transcript += "[" + step + "] shopper: " + e.at("utterance").get<std::string>() + "\n";
    } else if (kind == "error") {
      transcript += "[" + step + "] error: " + e.at("message").get<std::string>() + "\n";
    } else if (kind == "final") {
      transcript += "target: " + e.at("target").dump() + "\n";
    }
  }
  const std::vector<ChatMessage> msgs = {
      {"system",
       "You review shopping-assistant episodes and label mistakes. Allowed labels, as family/label:\n" + codes +
           "Reply with only a JSON array of objects with keys \"code\" (family/label), \"step\" (integer) and "
           "\"rationale\" (one sentence). Reply [] if there are no mistakes."},
      {"user", transcript},
  };
  const auto reply = backend_->complete(msgs);
  const auto b = reply.find('[');
  const auto e = reply.rfind(']');
  if (b == std::string::npos || e == std::string::npos || e < b) {
    throw BackendError(BackendError::Kind::MalformedCompletion, "classifier reply has no JSON array");
  }
  std::vector<ErrorAnnotation> out;
  try {
    const auto arr = json::parse(reply.substr(b, e - b + 1));
    for (const auto& item : arr) {
      out.push_back({trace_ref, parse_error_code(item.at("code").get<std::string>()), item.value("step", 0), id(),
                     item.value("rationale", "")});
    }
  } catch (const json::exception& ex) {
    throw BackendError(BackendError::Kind::MalformedCompletion, std::string("classifier reply: ") + ex.what());
  } catch (const ValidationError& ex) {
    throw BackendError(BackendError::Kind::MalformedCompletion, std::string("classifier reply: ") + ex.what());
  }
  return out;
}

AnnotationReport annotate_errors(const std::vector<std::pair<std::string, EpisodeTrace>>& traces,
                                 ErrorClassifier* classifier) {
  AnnotationReport rep;
  rep.coverage = classifier ? "rules+" + classifier->id() : "rules";
  for (const auto& [ref, trace] : traces) {
    auto rules = annotate_rules(trace, ref);
    rep.annotations.insert(rep.annotations.end(), rules.begin(), rules.end());
    if (!classifier) continue;
    try {
      auto more = classifier->classify(trace, ref);
      rep.annotations.insert(rep.annotations.end(), more.begin(), more.end());
    } catch (const Error& e) {
      rep.classifier_failures.push_back(ref + ": " + e.what());
    }
  }
  return rep;
}

std::vector<std::pair<std::string, EpisodeTrace>> load_traces(const std::filesystem::path& path) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    for (const auto& ent : std::filesystem::directory_iterator(path)) {
      if (ent.is_regular_file() && ent.path().extension() == ".jsonl") files.push_back(ent.path());
    }
    std::sort(files.begin(), files.end());
  } else if (std::filesystem::exists(path)) {
    files.push_back(path);
  } else {
    throw NotFoundError("trace path", path.string());
  }
  std::vector<std::pair<std::string, EpisodeTrace>> out;
  for (const auto& f : files) out.emplace_back(f.filename().string(), EpisodeTrace::load(f));
  return out;
}

}  // namespace shopsim
