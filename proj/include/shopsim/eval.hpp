#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "shopsim/episode.hpp"

namespace shopsim {

/// An agent. One instance drives one episode at a time.
class Policy {
 public:
  virtual ~Policy() = default;
  /// Called before the first act() of every episode.
  virtual void begin(const Task& task, Scenario scenario, std::uint64_t seed, const UserProfile* profile) = 0;
  /// Returns exactly one action as agent text.
  virtual std::string act(const Observation& obs, const std::vector<DialogueTurn>& dialogue) = 0;
  virtual std::string id() const = 0;
};

using PolicyFactory = std::function<std::unique_ptr<Policy>()>;

/// Reads the target: (multi-turn) asks one question covering every slot,
/// searches the canonical query, opens the target, selects the required
/// options, (multi-turn) asks for confirmation, buys.
class OraclePolicy : public Policy {
 public:
  void begin(const Task& task, Scenario scenario, std::uint64_t seed, const UserProfile* profile) override;
  std::string act(const Observation& obs, const std::vector<DialogueTurn>& dialogue) override;
  std::string id() const override { return "oracle"; }
  /// Forget which options were selected (after an outside click).
  void invalidate() { selected_.clear(); }

  static constexpr const char* kAskAll =
      "What is your budget, which options such as color and size do you need, and which features are required?";
  static constexpr const char* kConfirm = "I found one that fits. Shall I go ahead and buy it?";

 private:
  const Task* task_ = nullptr;
  Scenario scenario_ = Scenario::SingleTurn;
  bool asked_ = false;
  bool confirmed_ = false;
  bool fallback_ = false;
  std::vector<std::string> selected_;
};

/// Searches the header text, then clicks uniformly at random.
class RandomPolicy : public Policy {
 public:
  void begin(const Task& task, Scenario scenario, std::uint64_t seed, const UserProfile* profile) override;
  std::string act(const Observation& obs, const std::vector<DialogueTurn>& dialogue) override;
  std::string id() const override { return "random"; }

 private:
  Rng rng_{0};
};

/// Oracle that takes a random clickable action with probability epsilon.
class NoisyOraclePolicy : public Policy {
 public:
  explicit NoisyOraclePolicy(double epsilon) : epsilon_(epsilon) {}
  void begin(const Task& task, Scenario scenario, std::uint64_t seed, const UserProfile* profile) override;
  std::string act(const Observation& obs, const std::vector<DialogueTurn>& dialogue) override;
  std::string id() const override;

 private:
  double epsilon_;
  OraclePolicy oracle_;
  Rng rng_{0};
};

/// Chat-model agent: system prompt plus alternating observation/action
/// history.
class LlmPolicy : public Policy {
 public:
  explicit LlmPolicy(std::shared_ptr<ChatBackend> backend) : backend_(std::move(backend)) {}
  void begin(const Task& task, Scenario scenario, std::uint64_t seed, const UserProfile* profile) override;
  std::string act(const Observation& obs, const std::vector<DialogueTurn>& dialogue) override;
  std::string id() const override { return "llm:" + backend_->id(); }

 private:
  std::shared_ptr<ChatBackend> backend_;
  std::vector<ChatMessage> messages_;
};

/// "oracle", "random", "noisy:<eps>" or "llm" (needs `chat`).
PolicyFactory make_policy_factory(const std::string& name, std::shared_ptr<ChatBackend> chat = nullptr);

struct EpisodeRecord {
  std::string task_id;
  Scenario scenario = Scenario::SingleTurn;
  std::uint64_t seed = 0;
  RewardBreakdown reward;
  int steps = 0;
  std::string termination;
  EpisodeTrace trace;
};

/// Builds a record from a complete trace.
EpisodeRecord record_from_trace(const EpisodeTrace& trace);

struct ScenarioMetrics {
  std::string name;  // scenario name or "overall"
  std::size_t episodes = 0;
  double r_loose = 0, r_strict = 0, r_succ = 0, r_finish = 0;
  double r_cat = 0, r_att = 0, r_opt = 0, r_price = 0;
  double mean_steps = 0;
  double p50_steps = 0, p90_steps = 0;
  std::map<int, std::size_t> step_histogram;
  bool operator==(const ScenarioMetrics&) const = default;
};

struct MetricsTable {
  /// Present scenarios in canonical order.
  std::vector<ScenarioMetrics> scenarios;
  /// Unweighted mean over the scenario rows.
  ScenarioMetrics overall;

  static MetricsTable from_records(const std::vector<EpisodeRecord>& records);
  nlohmann::ordered_json to_json() const;
  std::string to_csv() const;
  std::string to_text() const;
  /// "scenario,steps,count" rows.
  std::string histogram_csv() const;
  bool operator==(const MetricsTable&) const = default;
};

struct EvalOptions {
  std::vector<Scenario> scenarios;
  std::uint64_t seed = 0;
  std::size_t parallelism = 8;
  ShopperOptions shopper;
  std::string shopper_backend = "scripted";
  std::shared_ptr<ChatBackend> shopper_chat;
  /// When set, each trace is written to "<task>.<scenario>.<seed>.jsonl".
  std::filesystem::path trace_dir;
  Clock clock;
};

struct EvalResult {
  MetricsTable metrics;
  std::vector<EpisodeRecord> records;
};

/// Per-episode seed: derived from the base seed, task and scenario.
std::uint64_t episode_seed(std::uint64_t base, const std::string& task_id, Scenario scenario, std::size_t rollout = 0);

/// Runs every (task, scenario) pair the task supports. Policy or backend
/// failures end the episode with zero reward and an error event. Throws
/// ValidationError on an empty task list.
EvalResult run_evaluation(const World& world, const PolicyFactory& policy, const std::vector<const Task*>& tasks,
                          const EvalOptions& options);

/// Drives one episode to terminal.
EpisodeRecord run_episode(const World& world, Policy& policy, const Task& task, EpisodeOptions options,
                          std::unique_ptr<TraceSink> sink = nullptr);

enum class RewardSelector { Loose, Strict };
RewardSelector parse_reward_selector(std::string_view s);

struct RolloutGroup {
  std::string task_id;
  std::vector<std::uint64_t> seeds;
  std::vector<double> rewards;  // selected reward per rollout
  std::vector<double> loose;
  std::vector<double> strict;
  double mean = 0;
  double std = 0;  // population standard deviation
  std::vector<double> advantages;
  /// All G traces produced the same action sequence.
  bool degenerate = false;
  std::vector<EpisodeTrace> traces;
};

struct RolloutOptions {
  std::size_t group_size = 8;
  RewardSelector selector = RewardSelector::Loose;
  Scenario scenario = Scenario::SingleTurn;
  std::uint64_t seed = 0;
  std::size_t parallelism = 8;
  Clock clock;
};

/// Throws ValidationError when group_size < 2 or no task supports the
/// scenario.
std::vector<RolloutGroup> collect_rollouts(const World& world, const PolicyFactory& policy,
                                           const std::vector<const Task*>& tasks, const RolloutOptions& options);

/// One line per rollout: task_id, rollout, seed, reward, advantage,
/// r_loose, r_strict, group_mean, group_std.
void write_rollouts(const std::vector<RolloutGroup>& groups, std::ostream& out);

struct SftFilter {
  /// Keep traces with r_strict >= this instead of requiring r_succ = 1.
  std::optional<double> min_strict;
};

struct SftStats {
  std::size_t traces_in = 0;
  std::size_t traces_kept = 0;
  std::size_t examples = 0;
};

/// One line per agent step: {"task_id","scenario","step","messages","action"}
/// where messages hold the system prompt and the full prior history.
SftStats export_sft(const World& world, const std::vector<EpisodeTrace>& traces, const SftFilter& filter,
                    std::ostream& out);

/// The closed set of error types.
enum class ErrorCode {
  SearchIgnoredKeyAttribute,
  SearchAbandonedHighMatch,
  SearchRepeatedSimilarQuery,
  SearchOthers,
  ClickViolatedHardRequirement,
  ClickUnconfirmedKeyAttribute,
  ClickNonexistentButton,
  ClickRetriedRejectedAttribute,
  ClickOthers,
  BuyNoDetailConfirmation,
  BuyPurchaseAfterRejection,
  BuyOthers,
  AskNotAskedWhenMissing,
  AskOverConfirmedKnownInfo,
  AskAfterFarewell,
  AskOthers,
  PersonalIgnored,
  PersonalOverinterpreted,
  PersonalMixedPriorities,
  ShopperAddedExtraIntent,
  ShopperDistortedIntent,
  ShopperSilentOnKeyGoal,
};
inline constexpr std::size_t kErrorCodeCount = 22;

/// Family ("search", "click", "buy", "ask", "personalization", "shopper")
/// and label ("Repeated similar query").
std::string_view error_family(ErrorCode c);
std::string_view error_label(ErrorCode c);
/// Accepts the label or "family/label". Throws ValidationError.
ErrorCode parse_error_code(std::string_view s);

struct ErrorAnnotation {
  std::string trace_ref;
  ErrorCode code;
  int step = 0;
  std::string annotator;
  std::string rationale;
};

nlohmann::ordered_json to_json(const ErrorAnnotation& a);

/// Judgment-based codes.
class ErrorClassifier {
 public:
  virtual ~ErrorClassifier() = default;
  virtual std::vector<ErrorAnnotation> classify(const EpisodeTrace& trace, const std::string& trace_ref) = 0;
  virtual std::string id() const = 0;
};

/// Asks a chat model for a JSON list of {"code","step","rationale"}.
class LlmErrorClassifier : public ErrorClassifier {
 public:
  explicit LlmErrorClassifier(std::shared_ptr<ChatBackend> backend) : backend_(std::move(backend)) {}
  std::vector<ErrorAnnotation> classify(const EpisodeTrace& trace, const std::string& trace_ref) override;
  std::string id() const override { return "llm:" + backend_->id(); }

 private:
  std::shared_ptr<ChatBackend> backend_;
};

/// Mechanical detectors: repeated similar query, nonexistent button, asked
/// after farewell, and purchase after rejection (scripted shopper only).
std::vector<ErrorAnnotation> annotate_rules(const EpisodeTrace& trace, const std::string& trace_ref);

struct AnnotationReport {
  std::vector<ErrorAnnotation> annotations;
  /// "rules" or "rules+<classifier id>".
  std::string coverage;
  std::vector<std::string> classifier_failures;
};

/// Rules always run; the classifier, when given, adds judgment codes. A
/// failing classifier leaves the rule-based subset and is reported.
AnnotationReport annotate_errors(const std::vector<std::pair<std::string, EpisodeTrace>>& traces,
                                 ErrorClassifier* classifier);

/// Every *.jsonl under `dir` (sorted by name), or the single file.
std::vector<std::pair<std::string, EpisodeTrace>> load_traces(const std::filesystem::path& path);

}  // namespace shopsim
