#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "shopsim/chat.hpp"
#include "shopsim/rng.hpp"
#include "shopsim/tasks.hpp"

namespace shopsim {

/// The product the agent currently has open, as the shopper sees it.
struct CandidateSummary {
  Product product;
  OptionSelection selected;
  double price = 0.0;

  /// "<title> | Color: White/Blue, Size: 40 | 528 yuan"
  std::string describe() const;
};

struct Confirmation {
  bool approved = false;
  /// Short slot-level reason when refused.
  std::string reason;
  std::string utterance;
};

class Shopper {
 public:
  virtual ~Shopper() = default;
  virtual std::string open() = 0;
  /// `candidate` is null when the agent is not on an item page.
  virtual std::string reply(const std::string& agent_message, const CandidateSummary* candidate) = 0;
  virtual Confirmation confirm_purchase(const std::string& agent_message, const CandidateSummary* candidate) = 0;
  virtual bool said_farewell() const = 0;
  /// Disclosed slots, in reveal-plan order. Empty for backends that do not
  /// track slots.
  virtual std::vector<std::string> disclosed() const { return {}; }
  virtual std::string backend_id() const = 0;
};

/// Slots of `plan` whose lexicon the message hits, in plan order.
std::vector<std::string> matched_slots(std::string_view message, const std::vector<RevealEntry>& plan);

/// A purchase-confirmation request asks to buy and names no slot other than
/// the product kind.
bool is_confirmation_request(std::string_view message, const std::vector<RevealEntry>& plan);

/// "budget information", "size preference", ...
std::string slot_reason(const std::string& slot);

struct ShopperOptions {
  /// Volunteer one extra undisclosed slot per reply.
  bool leaky = false;
  /// Attributes the opener mentions besides the product kind.
  int opener_attributes = 1;
};

/// Deterministic keyword-driven shopper.
class ScriptedShopper : public Shopper {
 public:
  ScriptedShopper(Task task, std::uint64_t seed, ShopperOptions options = {});

  std::string open() override;
  std::string reply(const std::string& agent_message, const CandidateSummary* candidate) override;
  Confirmation confirm_purchase(const std::string& agent_message, const CandidateSummary* candidate) override;
  bool said_farewell() const override { return farewell_; }
  std::vector<std::string> disclosed() const override;
  std::string backend_id() const override { return options_.leaky ? "scripted-leaky" : "scripted"; }

  bool fully_disclosed() const;

 private:
  Task task_;
  Rng rng_;
  ShopperOptions options_;
  std::set<std::string> disclosed_;
  bool farewell_ = false;
};

/// Role-play shopper backed by a chat model. Errors propagate; there is no
/// silent fallback to the scripted shopper.
class LlmShopper : public Shopper {
 public:
  LlmShopper(Task task, std::shared_ptr<ChatBackend> backend);

  std::string open() override;
  std::string reply(const std::string& agent_message, const CandidateSummary* candidate) override;
  Confirmation confirm_purchase(const std::string& agent_message, const CandidateSummary* candidate) override;
  bool said_farewell() const override { return farewell_; }
  std::string backend_id() const override { return backend_->id(); }

  const std::vector<ChatMessage>& transcript() const { return messages_; }

 private:
  std::string exchange(std::string user_text);

  Task task_;
  std::shared_ptr<ChatBackend> backend_;
  std::vector<ChatMessage> messages_;
  bool farewell_ = false;
};

}  // namespace shopsim
