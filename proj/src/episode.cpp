#include "shopsim/episode.hpp"

#include <chrono>
#include <ctime>
#include <istream>
#include <sstream>

#include "shopsim/error.hpp"

namespace shopsim {

using json = nlohmann::ordered_json;

World::World(Catalog catalog, TaskSet tasks)
    : catalog_(std::move(catalog)), index_(std::make_unique<SearchIndex>(catalog_)), tasks_(std::move(tasks)) {}

Clock system_clock() {
  return [] {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                  tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return std::string(buf);
  };
}

Clock fixed_clock(std::string stamp) {
  return [stamp = std::move(stamp)] { return stamp; };
}

const json& EpisodeTrace::session() const {
  if (events.empty() || events.front().value("event", "") != "session") throw ValidationError("trace has no session event", 1, "event");
  return events.front();
}

const json* EpisodeTrace::final_event() const {
  if (!events.empty() && events.back().value("event", "") == "final") return &events.back();
  return nullptr;
}

RewardBreakdown EpisodeTrace::recorded_reward() const {
  const auto* f = final_event();
  if (!f) throw StateError("trace is not complete");
  return reward_from_json(f->at("reward"));
}

std::string EpisodeTrace::to_jsonl() const {
  std::string out;
  for (const auto& e : events) out += e.dump() + "\n";
  return out;
}

EpisodeTrace EpisodeTrace::from_jsonl(std::istream& in) {
  EpisodeTrace t;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      t.events.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ValidationError(std::string("malformed trace event: ") + e.what(), n);
    }
  }
  return t;
}

EpisodeTrace EpisodeTrace::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("trace", path.string());
  return from_jsonl(in);
}

FileTraceSink::FileTraceSink(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
  if (!out_) throw Error("cannot open trace file " + path.string());
}

void FileTraceSink::write(const json& event) {
  out_ << event.dump() << '\n';
  out_.flush();
}

json options_to_json(const EpisodeOptions& o) {
  json j;
  j["scenario"] = std::string(to_string(o.scenario));
  j["seed"] = o.seed;
  j["step_limit"] = o.step_limit ? json(*o.step_limit) : json(nullptr);
  j["shopper_backend"] = o.shopper_backend;
  j["leaky"] = o.shopper.leaky;
  j["opener_attributes"] = o.shopper.opener_attributes;
  return j;
}

std::unique_ptr<Shopper> make_shopper(const Task& task, const EpisodeOptions& options) {
  if (!is_multi_turn(options.scenario)) return nullptr;
  if (options.shopper_backend == "scripted") return std::make_unique<ScriptedShopper>(task, options.seed, options.shopper);
  if (options.shopper_backend == "llm") {
    if (!options.chat) throw StateError("llm shopper selected but no chat backend configured");
    return std::make_unique<LlmShopper>(task, options.chat);
  }
  throw ValidationError("unknown shopper backend '" + options.shopper_backend + "'", 0, "shopper_backend");
}

Episode::Episode(const World& world, const Task& task, EpisodeOptions options, std::unique_ptr<TraceSink> sink)
    : options_(std::move(options)), sink_(std::move(sink)) {
  if (!options_.clock) options_.clock = system_clock();
  auto config = ScenarioConfig::defaults(options_.scenario);
  if (options_.step_limit) config.step_limit = *options_.step_limit;
  config.shopper_backend = options_.shopper_backend;
  env_ = std::make_unique<Environment>(world.catalog(), world.index(), task, config, world.tasks().profile_for(task),
                                       make_shopper(task, options_));
  options_.step_limit = config.step_limit;
}

void Episode::emit(json event) {
  if (sink_) sink_->write(event);
  trace_.events.push_back(std::move(event));
}

namespace {

json event(const char* kind, int step, const std::string& ts) {
  json j;
  j["event"] = kind;
  j["step"] = step;
  j["ts"] = ts;
  return j;
}

}  // namespace

Observation Episode::reset() {
  auto e = event("session", 0, options_.clock());
  e["session_id"] = options_.session_id;
  e["task_id"] = task().task_id;
  e["version"] = kVersion;
  e["config"] = options_to_json(options_);
  emit(std::move(e));
  last_ = env_->reset();
  auto o = event("observation", 0, options_.clock());
  o["observation"] = to_json(last_);
  emit(std::move(o));
  return last_;
}

void Episode::log_step(const Action& action, const StepResult& r, std::size_t dialogue_before) {
  const int k = env_->step_count();
  auto a = event("action", k, options_.clock());
  // unparseable text is logged with empty content
  const std::string kind = action.content.empty() ? "unparsed" : std::string(to_string(action.kind));
  a["action"] = {{"kind", kind}, {"content", action.content}, {"raw", action.raw}};
  emit(std::move(a));
  const auto& dlg = env_->dialogue();
  if (dlg.size() > dialogue_before) {
    auto s = event("shopper", k, options_.clock());
    s["agent"] = action.content;
    s["utterance"] = dlg.back().text;
    s["disclosed"] = env_->shopper()->disclosed();
    s["farewell"] = env_->shopper()->said_farewell();
    if (const auto& c = env_->last_confirmation()) {
      s["confirmation"] = {{"approved", c->approved}, {"reason", c->reason}};
    }
    emit(std::move(s));
  }
  if (r.observation.error) {
    auto e = event("error", k, options_.clock());
    e["message"] = *r.observation.error;
    e["fatal"] = false;
    emit(std::move(e));
  }
  auto o = event("observation", k, options_.clock());
  o["observation"] = to_json(r.observation);
  emit(std::move(o));
  last_ = r.observation;
  if (r.terminal) write_final(std::string(to_string(env_->termination())));
}

void Episode::write_final(const std::string& termination) {
  auto f = event("final", env_->step_count(), options_.clock());
  f["termination"] = termination;
  f["steps"] = env_->step_count();
  f["reward"] = to_json(env_->reward());
  f["target"] = to_json(task().target);
  const auto out = env_->outcome();
  f["outcome"] = out ? to_json(*out) : json(nullptr);
  emit(std::move(f));
  finished_ = true;
}

StepResult Episode::step(const Action& action) {
  if (finished_) throw StateError("episode is over");
  const auto before = env_->dialogue().size();
  try {
    auto r = env_->step(action);
    log_step(action, r, before);
    return r;
  } catch (const ProtocolError& e) {
    auto err = event("error", env_->step_count() + 1, options_.clock());
    err["message"] = e.what();
    err["fatal"] = true;
    err["raw"] = action.raw;
    emit(std::move(err));
    throw;
  }
}

StepResult Episode::step_text(const std::string& raw) {
  if (finished_) throw StateError("episode is over");
  Action action;
  try {
    action = parse_action(raw);
  } catch (const ProtocolError& e) {
    auto r = env_->reject_unparseable(raw, e.what());
    log_step(Action{ActionKind::Click, "", raw}, r, env_->dialogue().size());
    return r;
  }
  return step(action);
}

void Episode::abandon(const std::string& reason) {
  if (finished_) return;
  auto err = event("error", env_->step_count(), options_.clock());
  err["message"] = reason;
  err["fatal"] = true;
  emit(std::move(err));
  write_final("abandoned");
}

RewardBreakdown rescore(const EpisodeTrace& trace) {
  const auto* f = trace.final_event();
  if (!f) throw StateError("trace is not complete");
  const auto target = target_from_json(f->at("target"));
  std::optional<PurchaseOutcome> outcome;
  if (!f->at("outcome").is_null()) outcome = outcome_from_json(f->at("outcome"));
  return score(target, outcome);
}

ReplayReport replay_trace(const World& world, const EpisodeTrace& trace) {
  const auto& s = trace.session();
  const auto& cfg = s.at("config");
  EpisodeOptions o;
  o.scenario = parse_scenario(cfg.at("scenario").get<std::string>());
  o.seed = cfg.at("seed").get<std::uint64_t>();
  if (!cfg.at("step_limit").is_null()) o.step_limit = cfg.at("step_limit").get<int>();
  o.shopper_backend = cfg.at("shopper_backend").get<std::string>();
  if (o.shopper_backend != "scripted") throw StateError("only scripted-shopper traces can be replayed");
  o.shopper.leaky = cfg.at("leaky").get<bool>();
  o.shopper.opener_attributes = cfg.at("opener_attributes").get<int>();
  o.session_id = s.value("session_id", "");
  o.clock = fixed_clock(s.at("ts").get<std::string>());

  ReplayReport rep;
  Episode ep(world, world.tasks().get(s.at("task_id").get<std::string>()), o);
  std::vector<Observation> recorded;
  for (const auto& e : trace.events) {
    if (e.at("event") == "observation") recorded.push_back(observation_from_json(e.at("observation")));
  }
  std::vector<Observation> replayed{ep.reset()};
  bool abandoned = false;
  for (const auto& e : trace.events) {
    const auto kind = e.at("event").get<std::string>();
    if (kind == "action") {
      const auto& a = e.at("action");
      if (a.at("content").get<std::string>().empty()) {
        replayed.push_back(ep.step_text(a.at("raw").get<std::string>()).observation);
      } else {
        Action act{parse_action_kind(a.at("kind").get<std::string>()), a.at("content").get<std::string>(),
                   a.at("raw").get<std::string>()};
        replayed.push_back(ep.step(act).observation);
      }
    } else if (kind == "error" && e.at("fatal").get<bool>() && e.contains("raw")) {
      try {
        ep.step_text(e.at("raw").get<std::string>());
      } catch (const ProtocolError&) {
      }
    } else if (kind == "final" && e.at("termination") == "abandoned") {
      abandoned = true;
    }
  }
  if (abandoned) ep.abandon("replayed abandonment");

  rep.observations_match = replayed.size() == recorded.size();
  for (std::size_t i = 0; i < std::min(replayed.size(), recorded.size()); ++i) {
    if (!(replayed[i] == recorded[i])) {
      rep.observations_match = false;
      rep.first_mismatch = i;
      break;
    }
  }
  if (!rep.first_mismatch && replayed.size() != recorded.size()) rep.first_mismatch = std::min(replayed.size(), recorded.size());
  rep.replayed = ep.reward();
  rep.rescored = rescore(trace);
  const auto recorded_reward = trace.recorded_reward();
  rep.reward_match = rep.replayed == recorded_reward && rep.rescored == recorded_reward;
  rep.trace = ep.trace();
  return rep;
}

}  // namespace shopsim
