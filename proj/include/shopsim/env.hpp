#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "shopsim/catalog.hpp"
#include "shopsim/reward.hpp"
#include "shopsim/search.hpp"
#include "shopsim/shopper.hpp"
#include "shopsim/tasks.hpp"

namespace shopsim {

enum class ActionKind { Search, Click, AskShopper };
std::string_view to_string(ActionKind k);
ActionKind parse_action_kind(std::string_view s);

struct Action {
  ActionKind kind = ActionKind::Search;
  std::string content;
  std::string raw;
  bool operator==(const Action&) const = default;
};

/// Accepts an "Action_type: ... / Action_content: ..." block (on separate
/// lines or joined by " / "), an "Action: search[...]" line, or a bare
/// search[...] / click[...]. Throws ProtocolError carrying the raw text.
Action parse_action(std::string_view raw);

/// "search[q]", "click[v]" or the ask_shopper block.
std::string format_action(const Action& a);

struct Observation {
  std::string text;
  bool search_available = false;
  std::vector<std::string> clickable;
  std::optional<std::string> shopper_utterance;
  /// Set on rejected actions.
  std::optional<std::string> error;

  /// Text as an agent reads it, with the search/clickable footer lines.
  std::string format_for_agent() const;
  bool operator==(const Observation&) const = default;
};

nlohmann::ordered_json to_json(const Observation& o);
Observation observation_from_json(const nlohmann::ordered_json& j);

struct SearchHomePage {
  bool operator==(const SearchHomePage&) const = default;
};
struct ResultsPage {
  std::string query;
  std::size_t page = 1;
  bool operator==(const ResultsPage&) const = default;
};
struct ItemPage {
  std::string product_id;
  OptionSelection selected;
  std::optional<std::string> detail_tab;  // "Description", "Features" or "Reviews"
  std::optional<ResultsPage> return_to;
  bool operator==(const ItemPage&) const = default;
};
using Page = std::variant<SearchHomePage, ResultsPage, ItemPage>;

struct Purchase {
  std::string product_id;
  OptionSelection selected;
  double effective_price = 0.0;
  bool operator==(const Purchase&) const = default;
};

struct DialogueTurn {
  std::string speaker;  // "shopper" or "agent"
  std::string text;
  bool operator==(const DialogueTurn&) const = default;
};

enum class Termination { None, Purchase, StepLimit };
std::string_view to_string(Termination t);

struct StepResult {
  Observation observation;
  bool terminal = false;
};

/// Price as shown on an item page: the effective price once every
/// price-bearing group of a range-priced product is chosen, else the listed
/// price or range.
std::string item_price_display(const Product& product, const OptionSelection& selected);

/// One episode. Not thread-safe; callers serialize steps.
class Environment {
 public:
  /// `shopper` is required for multi-turn scenarios and ignored otherwise.
  /// `profile` is required for personalized scenarios. Throws StateError on
  /// a scenario the task does not support or a missing profile/shopper.
  Environment(const Catalog& catalog, const SearchIndex& index, const Task& task, ScenarioConfig config,
              const UserProfile* profile, std::unique_ptr<Shopper> shopper);

  Observation reset();
  /// Throws StateError when terminal or before reset, and ProtocolError
  /// (fatal, not counted, state unchanged) for ask_shopper in a single-turn
  /// scenario.
  StepResult step(const Action& action);
  /// Unparseable agent text: counted as a step with an error observation.
  StepResult reject_unparseable(const std::string& raw, const std::string& reason);

  Observation render() const;

  const Task& task() const { return task_; }
  const ScenarioConfig& config() const { return config_; }
  const Page& page() const { return page_; }
  int step_count() const { return step_count_; }
  bool terminal() const { return termination_ != Termination::None; }
  Termination termination() const { return termination_; }
  const std::optional<Purchase>& purchased() const { return purchased_; }
  const std::string& first_search_query() const { return first_query_; }
  const std::vector<DialogueTurn>& dialogue() const { return dialogue_; }
  /// Header text: the instruction, or the shopper's opener in multi-turn.
  const std::string& header() const { return header_; }
  Shopper* shopper() const { return shopper_.get(); }
  /// Verdict of the most recent ask_shopper step if it was a purchase
  /// confirmation request; cleared by every other step.
  const std::optional<Confirmation>& last_confirmation() const { return last_confirmation_; }

  std::optional<PurchaseOutcome> outcome() const;
  RewardBreakdown reward() const { return score(task_.target, outcome()); }
  /// The open item page as the shopper sees it, if any.
  std::optional<CandidateSummary> candidate() const;

 private:
  StepResult finish_step(Observation obs);
  Observation error_observation(const std::string& reason) const;
  Observation apply_click(const std::string& label);
  std::string page_prefix() const;

  const Catalog* catalog_;
  const SearchIndex* index_;
  Task task_;
  ScenarioConfig config_;
  const UserProfile* profile_;
  std::unique_ptr<Shopper> shopper_;

  bool started_ = false;
  Page page_ = SearchHomePage{};
  int step_count_ = 0;
  Termination termination_ = Termination::None;
  std::optional<Purchase> purchased_;
  std::string first_query_;
  std::vector<DialogueTurn> dialogue_;
  std::string header_;
  std::optional<Confirmation> last_confirmation_;
};

}  // namespace shopsim
