#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "shopsim/chat.hpp"
#include "shopsim/env.hpp"

namespace shopsim {

inline constexpr const char* kVersion = "0.3.0";

/// Catalog, index and tasks shared read-only by every episode.
class World {
 public:
  World(Catalog catalog, TaskSet tasks);
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  const Catalog& catalog() const { return catalog_; }
  const SearchIndex& index() const { return *index_; }
  const TaskSet& tasks() const { return tasks_; }

 private:
  Catalog catalog_;
  std::unique_ptr<SearchIndex> index_;
  TaskSet tasks_;
};

/// Returns an ISO-8601 UTC timestamp.
using Clock = std::function<std::string()>;
Clock system_clock();
Clock fixed_clock(std::string stamp = "2000-01-01T00:00:00Z");

/// Line-delimited event log of one episode. Event kinds: session,
/// observation, action, shopper, error, final. Every event carries "event",
/// "step" and "ts".
struct EpisodeTrace {
  std::vector<nlohmann::ordered_json> events;

  const nlohmann::ordered_json& session() const;
  /// Null when the episode has not finished.
  const nlohmann::ordered_json* final_event() const;
  bool complete() const { return final_event() != nullptr; }
  RewardBreakdown recorded_reward() const;

  std::string to_jsonl() const;
  static EpisodeTrace from_jsonl(std::istream& in);
  static EpisodeTrace load(const std::filesystem::path& path);
};

/// Receives each event as it is appended.
class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void write(const nlohmann::ordered_json& event) = 0;
};

/// Appends one line per event and flushes, so a crash leaves a valid prefix.
class FileTraceSink : public TraceSink {
 public:
  explicit FileTraceSink(const std::filesystem::path& path);
  void write(const nlohmann::ordered_json& event) override;

 private:
  std::ofstream out_;
};

struct EpisodeOptions {
  Scenario scenario = Scenario::SingleTurn;
  std::uint64_t seed = 0;
  /// Defaults to the scenario limit (30 or 40).
  std::optional<int> step_limit;
  /// "scripted" or "llm".
  std::string shopper_backend = "scripted";
  ShopperOptions shopper;
  std::shared_ptr<ChatBackend> chat;
  std::string session_id;
  Clock clock;
};

nlohmann::ordered_json options_to_json(const EpisodeOptions& o);

/// Environment plus trace bookkeeping.
class Episode {
 public:
  Episode(const World& world, const Task& task, EpisodeOptions options, std::unique_ptr<TraceSink> sink = nullptr);

  Observation reset();
  /// Parses and applies agent text. Unparseable text becomes a counted
  /// in-episode error. ask_shopper in single-turn rethrows ProtocolError
  /// after logging a fatal error event; the step is not counted.
  StepResult step_text(const std::string& raw);
  StepResult step(const Action& action);
  /// Ends a live episode without purchase (e.g. the policy backend failed).
  void abandon(const std::string& reason);

  const Environment& env() const { return *env_; }
  const Task& task() const { return env_->task(); }
  const EpisodeOptions& options() const { return options_; }
  const EpisodeTrace& trace() const { return trace_; }
  bool terminal() const { return finished_; }
  int steps() const { return env_->step_count(); }
  RewardBreakdown reward() const { return env_->reward(); }
  const Observation& last_observation() const { return last_; }

 private:
  void emit(nlohmann::ordered_json event);
  void log_step(const Action& action, const StepResult& r, std::size_t dialogue_before);
  void write_final(const std::string& termination);

  EpisodeOptions options_;
  std::unique_ptr<Environment> env_;
  std::unique_ptr<TraceSink> sink_;
  EpisodeTrace trace_;
  Observation last_;
  bool finished_ = false;
};

/// Builds the shopper an episode would use (null for single-turn).
std::unique_ptr<Shopper> make_shopper(const Task& task, const EpisodeOptions& options);

struct ReplayReport {
  bool observations_match = false;
  bool reward_match = false;
  /// Index into the observation events of the first difference, if any.
  std::optional<std::size_t> first_mismatch;
  RewardBreakdown replayed;
  RewardBreakdown rescored;
  EpisodeTrace trace;

  bool ok() const { return observations_match && reward_match; }
};

/// Re-runs the recorded actions through a fresh engine with the recorded
/// seed and compares observations and rewards. Scripted shopper only.
ReplayReport replay_trace(const World& world, const EpisodeTrace& trace);

/// Recomputes the breakdown from the final event's target and outcome.
RewardBreakdown rescore(const EpisodeTrace& trace);

}  // namespace shopsim
