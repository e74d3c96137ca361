#include "shopsim/prompts.hpp"

#include "shopsim/text.hpp"

namespace shopsim {

namespace {

constexpr const char* kAgentCore = R"(You are a shopping assistant working for a customer in a text-based online store.
Your job is to buy the single product that matches what the customer wants.

Tools:
- search[keywords] runs a catalog search. It only works when "Is search available" is True.
- click[value] presses one of the buttons in the current "Clickable buttons" list. Buttons from earlier pages do not count.
- click[buy now] purchases the product on the current item page immediately.
Select every required option (colour, size and so on) on the item page before you buy.

Reply in exactly this layout, with one action per reply:
Thought: <your reasoning>
Action_type: interact_with_env
Action_content: search[...] or click[...]
)";

constexpr const char* kAgentDialogue = R"(
You may also talk to the customer instead of acting:
Action_type: ask_shopper
Action_content: <an open question, e.g. What is your budget?>
The customer starts out vague. Ask about anything you still need (budget, options, features).
Before buying, ask the customer to confirm the product you picked. If they object, do not buy it.
Once the customer says goodbye, stop asking and buy the best match.
)";

constexpr const char* kAgentLimit =
    "\nAn episode ends without reward if you reach the step limit before buying. Every reply counts as one step.\n";

constexpr const char* kShopperPrompt = R"(You are playing a customer who chats with a shopping assistant.
You have one concrete purchase goal, shown below. Keep it to yourself at first and only describe the general kind of product you want.
Answer the assistant's questions truthfully and briefly. Never volunteer details that were not asked about.
If the assistant tries to finish the purchase before you have told it every requirement in your goal, say no, name what is still missing in a few words, and wait.
When the assistant proposes a product that meets every requirement, agree and say goodbye.
Talk like an ordinary shopper.

Goal: {goal})";

std::string lower(const std::string& s) { return text::fold_label(s); }

}  // namespace

std::string agent_system_prompt(Scenario scenario, const UserProfile* profile) {
  std::string out = kAgentCore;
  if (is_multi_turn(scenario)) out += kAgentDialogue;
  if (profile) {
    out += "\nThe customer's long-term profile follows. Treat it as background preference, not as hard requirements "
           "unless the request confirms them.\n";
    out += to_json(*profile).dump(2);
    out += "\n";
  }
  out += kAgentLimit;
  return out;
}

std::string shopper_system_prompt(const std::string& goal) {
  std::string out = kShopperPrompt;
  out.replace(out.find("{goal}"), 6, goal);
  return out;
}

std::string render_goal(const Task& task) {
  const auto& t = task.target;
  std::string out = "buy " + lower(t.category.fine_category) + ".";
  if (!t.attributes.empty()) {
    out += " Required features:";
    for (std::size_t i = 0; i < t.attributes.size(); ++i) out += (i ? ", " : " ") + lower(t.attributes[i]);
    out += ".";
  }
  if (!t.options.empty()) {
    out += " Required options:";
    bool first = true;
    for (const auto& [g, v] : t.options) {
      out += (first ? " " : "; ") + g + " " + v;
      first = false;
    }
    out += ".";
  }
  if (t.price_cap) out += " Budget: at most " + text::format_number(*t.price_cap) + " yuan.";
  return out;
}

}  // namespace shopsim
