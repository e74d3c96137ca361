#include "shopsim/shopper.hpp"

#include <algorithm>
#include <map>

#include "shopsim/error.hpp"
#include "shopsim/prompts.hpp"
#include "shopsim/text.hpp"

namespace shopsim {

std::string CandidateSummary::describe() const {
  std::string out = product.title + " |";
  bool first = true;
  for (const auto& g : product.option_groups) {
    auto it = selected.find(g.name);
    if (it == selected.end()) continue;
    out += (first ? " " : ", ") + g.name + ": " + it->second;
    first = false;
  }
  if (first) out += " no options selected";
  return out + " | " + text::format_number(price) + " yuan";
}

namespace {

using Lexicon = std::set<std::string>;

const Lexicon kCategoryWords = {"category", "type", "kind", "product", "item", "looking"};
const Lexicon kPriceWords = {"budget", "price", "prices", "cost", "costs", "spend", "spending", "yuan",
                             "afford", "expensive", "cheap", "money", "预算", "价格"};
const Lexicon kOptionWords = {"option", "options", "specification", "specifications", "spec", "specs", "variant", "variants"};
const Lexicon kAttributeWords = {"feature",    "features",  "attribute",    "attributes", "material",   "materials",
                                 "style",      "brand",     "brands",       "requirement", "requirements", "function",
                                 "functions",  "property",  "properties",   "characteristics", "preference", "preferences"};
const std::map<std::string, Lexicon> kGroupSynonyms = {
    {"color", {"color", "colour", "colors", "colours", "colorway", "shade"}},
    {"size", {"size", "sizes", "fit"}},
    {"capacity", {"capacity", "volume"}},
    {"pack", {"pack", "quantity"}},
    {"length", {"length", "long"}},
    {"edition", {"edition", "version"}},
};
const Lexicon kConfirmWords = {"buy", "purchase", "order", "checkout", "proceed", "confirm"};

bool hits(const std::set<std::string>& tokens, const Lexicon& lex) {
  return std::any_of(tokens.begin(), tokens.end(), [&](const std::string& t) { return lex.count(t) > 0; });
}

Lexicon slot_lexicon(const std::string& slot) {
  if (slot == "category") return kCategoryWords;
  if (slot == "price") return kPriceWords;
  if (slot.rfind("option:", 0) == 0) {
    Lexicon lex = kOptionWords;
    for (const auto& tok : text::tokenize(slot.substr(7))) {
      lex.insert(tok);
      if (auto it = kGroupSynonyms.find(tok); it != kGroupSynonyms.end()) lex.insert(it->second.begin(), it->second.end());
    }
    return lex;
  }
  Lexicon lex = kAttributeWords;
  for (const auto& tok : text::tokenize(slot.substr(10))) lex.insert(tok);
  return lex;
}

std::set<std::string> token_set(std::string_view s) {
  const auto v = text::tokenize(s);
  return {v.begin(), v.end()};
}

std::string lower(std::string_view s) { return text::fold_label(s); }

const std::vector<std::string> kDeflections = {
    "I'm not sure how to answer that. Could you ask me something more specific?",
    "Hmm, I don't really have an opinion on that.",
    "Sorry, could you rephrase the question?",
};

}  // namespace

std::vector<std::string> matched_slots(std::string_view message, const std::vector<RevealEntry>& plan) {
  const auto tokens = token_set(message);
  std::vector<std::string> out;
  for (const auto& r : plan) {
    if (hits(tokens, slot_lexicon(r.slot))) out.push_back(r.slot);
  }
  return out;
}

bool is_confirmation_request(std::string_view message, const std::vector<RevealEntry>& plan) {
  const auto tokens = token_set(message);
  const bool asks = hits(tokens, kConfirmWords) || (tokens.count("go") && tokens.count("ahead"));
  // "this product" style wording should not turn a confirmation into a category question
  const auto slots = matched_slots(message, plan);
  return asks && std::all_of(slots.begin(), slots.end(), [](const std::string& s) { return s == "category"; });
}

std::string slot_reason(const std::string& slot) {
  if (slot == "price") return "budget information";
  if (slot == "category") return "product type";
  if (slot.rfind("option:", 0) == 0) return lower(slot.substr(7)) + " preference";
  return "feature requirements";
}

ScriptedShopper::ScriptedShopper(Task task, std::uint64_t seed, ShopperOptions options)
    : task_(std::move(task)), rng_(derive_seed(seed, hash64("shopper:" + task_.task_id))), options_(options) {
  for (const auto& r : task_.reveal_plan) {
    if (r.via_profile) disclosed_.insert(r.slot);
  }
}

std::string ScriptedShopper::open() {
  static const std::vector<std::string> forms = {"I want to buy some {}", "I'm looking for {}",
                                                  "Can you help me find some {}"};
  auto s = rng_.pick(forms);
  s.replace(s.find("{}"), 2, lower(task_.target.category.fine_category));
  disclosed_.insert("category");
  std::vector<std::string> attrs;
  for (const auto& r : task_.reveal_plan) {
    if (static_cast<int>(attrs.size()) >= options_.opener_attributes) break;
    if (!r.via_profile && r.slot.rfind("attribute:", 0) == 0) {
      attrs.push_back(lower(r.slot.substr(10)));
      disclosed_.insert(r.slot);
    }
  }
  if (!attrs.empty()) {
    s += ", preferably ";
    for (std::size_t i = 0; i < attrs.size(); ++i) s += (i ? " and " : "") + attrs[i];
  }
  return s + ".";
}

std::string ScriptedShopper::reply(const std::string& agent_message, const CandidateSummary*) {
  if (farewell_) return "I've already said goodbye. Please just complete the order.";
  const auto slots = matched_slots(agent_message, task_.reveal_plan);
  std::string out;
  for (const auto& r : task_.reveal_plan) {
    if (std::find(slots.begin(), slots.end(), r.slot) == slots.end()) continue;
    out += (out.empty() ? "" : " ") + r.text;
    disclosed_.insert(r.slot);
  }
  if (options_.leaky) {
    for (const auto& r : task_.reveal_plan) {
      if (!disclosed_.count(r.slot)) {
        out += (out.empty() ? "" : " ") + std::string("Also, ") + r.text;
        disclosed_.insert(r.slot);
        break;
      }
    }
  }
  if (out.empty()) out = rng_.pick(kDeflections);
  return out;
}

Confirmation ScriptedShopper::confirm_purchase(const std::string&, const CandidateSummary* candidate) {
  Confirmation c;
  for (const auto& r : task_.reveal_plan) {
    if (!disclosed_.count(r.slot)) {
      c.reason = slot_reason(r.slot);
      c.utterance = "Not yet. You haven't asked about my " + c.reason + ".";
      return c;
    }
  }
  if (!candidate) {
    c.reason = "no product selected";
    c.utterance = "Which product do you mean? I don't see one yet.";
    return c;
  }
  const auto& t = task_.target;
  for (const auto& r : task_.reveal_plan) {
    std::string violated;
    if (r.slot == "category") {
      if (candidate->product.category.fine_category != t.category.fine_category) violated = "product type";
    } else if (r.slot == "price") {
      if (t.price_cap && candidate->price > *t.price_cap) violated = "price";
    } else if (r.slot.rfind("option:", 0) == 0) {
      const auto g = r.slot.substr(7);
      auto it = candidate->selected.find(g);
      if (it == candidate->selected.end() || !text::fuzzy_equal(it->second, t.options.at(g))) violated = lower(g);
    } else {
      const auto a = r.slot.substr(10);
      if (match_attributes({a}, candidate->product).ratio < 1.0) violated = lower(a);
    }
    if (!violated.empty()) {
      c.reason = violated;
      c.utterance = "No, that doesn't work for me. The " + violated + " is not what I asked for.";
      return c;
    }
  }
  c.approved = true;
  c.utterance = "Yes, that is exactly what I want. Please go ahead and buy it. Thank you, goodbye!";
  farewell_ = true;
  return c;
}

std::vector<std::string> ScriptedShopper::disclosed() const {
  std::vector<std::string> out;
  for (const auto& r : task_.reveal_plan) {
    if (disclosed_.count(r.slot)) out.push_back(r.slot);
  }
  return out;
}

bool ScriptedShopper::fully_disclosed() const {
  return std::all_of(task_.reveal_plan.begin(), task_.reveal_plan.end(),
                     [&](const RevealEntry& r) { return disclosed_.count(r.slot) > 0; });
}

LlmShopper::LlmShopper(Task task, std::shared_ptr<ChatBackend> backend)
    : task_(std::move(task)), backend_(std::move(backend)) {
  if (!backend_) throw StateError("LLM shopper needs a chat backend");
  messages_.push_back({"system", shopper_system_prompt(render_goal(task_))});
}

std::string LlmShopper::exchange(std::string user_text) {
  messages_.push_back({"user", std::move(user_text)});
  auto answer = backend_->complete(messages_);
  messages_.push_back({"assistant", answer});
  const auto tokens = token_set(answer);
  if (tokens.count("goodbye") || tokens.count("bye")) farewell_ = true;
  return answer;
}

std::string LlmShopper::open() { return exchange("(The assistant has greeted you. Say what you are shopping for.)"); }

std::string LlmShopper::reply(const std::string& agent_message, const CandidateSummary* candidate) {
  std::string msg = agent_message;
  if (candidate) msg += "\n(Product on the assistant's screen: " + candidate->describe() + ")";
  return exchange(std::move(msg));
}

Confirmation LlmShopper::confirm_purchase(const std::string& agent_message, const CandidateSummary* candidate) {
  Confirmation c;
  c.utterance = reply(agent_message, candidate);
  const auto tokens = token_set(c.utterance);
  static const Lexicon refuse = {"no", "not", "don", "wait", "missing", "haven"};
  static const Lexicon approve = {"yes", "confirm", "ok", "okay", "sure", "go"};
  c.approved = hits(tokens, approve) && !hits(tokens, refuse);
  if (!c.approved) c.reason = "refused by shopper";
  return c;
}

}  // namespace shopsim
