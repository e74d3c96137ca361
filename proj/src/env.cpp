#include "shopsim/env.hpp"

#include <algorithm>

#include "shopsim/error.hpp"
#include "shopsim/text.hpp"

namespace shopsim {

using json = nlohmann::ordered_json;

std::string_view to_string(ActionKind k) {
  switch (k) {
    case ActionKind::Search: return "search";
    case ActionKind::Click: return "click";
    case ActionKind::AskShopper: return "ask_shopper";
  }
  return "search";
}

ActionKind parse_action_kind(std::string_view s) {
  if (s == "search") return ActionKind::Search;
  if (s == "click") return ActionKind::Click;
  if (s == "ask_shopper") return ActionKind::AskShopper;
  throw ValidationError("unknown action kind '" + std::string(s) + "'", 0, "kind");
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::None: return "none";
    case Termination::Purchase: return "purchase";
    case Termination::StepLimit: return "step_limit";
  }
  return "none";
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

/// search[...] or click[...]; nullopt if `s` is neither.
std::optional<Action> parse_bracketed(std::string_view s) {
  const auto t = trim(s);
  const auto low = ascii_lower(t);
  for (auto kind : {ActionKind::Search, ActionKind::Click}) {
    const std::string prefix = std::string(to_string(kind)) + "[";
    if (low.rfind(prefix, 0) == 0 && t.size() > prefix.size() && t.back() == ']') {
      Action a{kind, trim(std::string_view(t).substr(prefix.size(), t.size() - prefix.size() - 1)), {}};
      if (!a.content.empty()) return a;
    }
  }
  return std::nullopt;
}

}  // namespace

Action parse_action(std::string_view raw) {
  const std::string text(raw);
  const auto low = ascii_lower(text);
  Action out;
  const auto type_pos = low.find("action_type:");
  if (type_pos != std::string::npos) {
    const auto content_pos = low.find("action_content:", type_pos);
    if (content_pos == std::string::npos) throw ProtocolError("Action_type without Action_content", text);
    auto type = trim(std::string_view(low).substr(type_pos + 12, content_pos - type_pos - 12));
    while (!type.empty() && (type.back() == '/' || type.back() == ' ')) type.pop_back();
    const auto content = trim(std::string_view(text).substr(content_pos + 15));
    if (type == "ask_shopper") {
      if (content.empty()) throw ProtocolError("empty ask_shopper content", text);
      out = {ActionKind::AskShopper, content, text};
      return out;
    }
    if (type == "interact_with_env") {
      // the content may span lines; the action is its first line
      auto parsed = parse_bracketed(content.substr(0, content.find('\n')));
      if (!parsed) throw ProtocolError("Action_content must be search[...] or click[...]", text);
      parsed->raw = text;
      return *parsed;
    }
    throw ProtocolError("unknown Action_type '" + type + "'", text);
  }

  std::optional<Action> found;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    auto line = trim(std::string_view(text).substr(start, end - start));
    if (ascii_lower(line).rfind("action:", 0) == 0) line = trim(std::string_view(line).substr(7));
    if (auto a = parse_bracketed(line)) found = a;
    start = end + 1;
  }
  if (!found) throw ProtocolError("no search[...], click[...] or ask_shopper action found", text);
  found->raw = text;
  return *found;
}

std::string format_action(const Action& a) {
  if (a.kind == ActionKind::AskShopper) return "Action_type: ask_shopper\nAction_content: " + a.content;
  return std::string(to_string(a.kind)) + "[" + a.content + "]";
}

std::string Observation::format_for_agent() const {
  std::string out;
  if (shopper_utterance) out += "[Shopper] " + *shopper_utterance + "\n";
  out += text;
  out += "\nIs search available: ";
  out += search_available ? "True" : "False";
  out += "\nClickable buttons: [";
  for (std::size_t i = 0; i < clickable.size(); ++i) {
    if (i) out += ", ";
    out += json(clickable[i]).dump();
  }
  return out + "]";
}

json to_json(const Observation& o) {
  json j;
  j["text"] = o.text;
  j["search_available"] = o.search_available;
  j["clickable"] = o.clickable;
  j["shopper_utterance"] = o.shopper_utterance ? json(*o.shopper_utterance) : json(nullptr);
  j["error"] = o.error ? json(*o.error) : json(nullptr);
  return j;
}

Observation observation_from_json(const json& j) {
  Observation o;
  try {
    o.text = j.at("text").get<std::string>();
    o.search_available = j.at("search_available").get<bool>();
    o.clickable = j.at("clickable").get<std::vector<std::string>>();
    if (j.contains("shopper_utterance") && !j["shopper_utterance"].is_null()) {
      o.shopper_utterance = j["shopper_utterance"].get<std::string>();
    }
    if (j.contains("error") && !j["error"].is_null()) o.error = j["error"].get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(e.what(), 0, "observation");
  }
  return o;
}

std::string item_price_display(const Product& product, const OptionSelection& selected) {
  if (product.price_resolved(selected)) return text::format_number(product.effective_price(selected));
  return product.price.display();
}

Environment::Environment(const Catalog& catalog, const SearchIndex& index, const Task& task, ScenarioConfig config,
                         const UserProfile* profile, std::unique_ptr<Shopper> shopper)
    : catalog_(&catalog), index_(&index), task_(task), config_(config), profile_(profile), shopper_(std::move(shopper)) {
  if (!task_.supports(config_.scenario)) {
    throw StateError("task " + task_.task_id + " does not support scenario " + std::string(to_string(config_.scenario)));
  }
  if (is_personalized(config_.scenario) && !profile_) {
    throw StateError("scenario " + std::string(to_string(config_.scenario)) + " needs a user profile for task " +
                     task_.task_id);
  }
  if (is_multi_turn(config_.scenario) && !shopper_) throw StateError("multi-turn scenario needs a shopper");
  if (config_.step_limit < 1) throw StateError("step limit must be positive");
  catalog_->get(task_.target.product_id);
}

Observation Environment::reset() {
  if (started_) throw StateError("episode already started");
  started_ = true;
  Observation obs;
  if (is_multi_turn(config_.scenario)) {
    header_ = shopper_->open();
    dialogue_.push_back({"shopper", header_});
    obs = render();
    obs.shopper_utterance = header_;
  } else {
    header_ = task_.instruction;
    obs = render();
  }
  return obs;
}

std::string Environment::page_prefix() const { return "Instruction: [SEP] " + header_ + " [SEP] Back to Search"; }

Observation Environment::render() const {
  Observation o;
  if (termination_ == Termination::Purchase) {
    const auto& p = catalog_->get(purchased_->product_id);
    o.text = "Thank you for your purchase! [SEP] " + p.product_id + " [SEP] " + p.title;
    for (const auto& g : p.option_groups) {
      if (auto it = purchased_->selected.find(g.name); it != purchased_->selected.end()) {
        o.text += " [SEP] " + g.name + ": " + it->second;
      }
    }
    o.text += " [SEP] Price: " + text::format_number(purchased_->effective_price);
    return o;
  }
  if (termination_ == Termination::StepLimit) {
    o.text = "Step limit reached [SEP] The episode ended without a purchase.";
    return o;
  }

  if (std::holds_alternative<SearchHomePage>(page_)) {
    o.text = "WebShop [SEP] Instruction: [SEP] " + header_;
    if (profile_ && config_.inject_profile) o.text += " [SEP] Profile: [SEP] " + to_json(*profile_).dump();
    o.text += " [SEP] Search";
    o.search_available = true;
    return o;
  }

  o.text = page_prefix();
  o.clickable.push_back("back to search");
  if (const auto* r = std::get_if<ResultsPage>(&page_)) {
    const auto res = index_->search(r->query, r->page);
    o.text += " [SEP] Page " + std::to_string(res.page_number) + " (Total results: " + std::to_string(res.total_results) + ")";
    if (res.has_prev()) {
      o.text += " [SEP] < Prev";
      o.clickable.push_back("< prev");
    }
    if (res.has_next()) {
      o.text += " [SEP] Next >";
      o.clickable.push_back("next >");
    }
    for (const auto& e : res.entries) {
      o.text += " [SEP] " + e.product_id + " [SEP] " + e.title + " [SEP] " + e.price_display;
      o.clickable.push_back(e.product_id);
    }
    return o;
  }

  const auto& item = std::get<ItemPage>(page_);
  const auto& p = catalog_->get(item.product_id);
  o.text += " [SEP] < Prev";
  for (const char* b : {"< prev", "description", "features", "reviews", "buy now"}) o.clickable.push_back(b);
  for (const auto& g : p.option_groups) {
    o.text += " [SEP] " + g.name;
    for (const auto& v : g.values) {
      o.text += " [SEP] " + v;
      o.clickable.push_back(v);
    }
  }
  o.text += " [SEP] " + p.title + " [SEP] Price: " + item_price_display(p, item.selected) + " [SEP] Store: " + p.shop_name +
            " [SEP] Description [SEP] Features [SEP] Reviews [SEP] Buy Now";
  if (item.detail_tab) {
    const auto& tab = *item.detail_tab;
    const auto& body = tab == "Description" ? p.description : tab == "Features" ? p.features : p.reviews;
    o.text += " [SEP] " + tab + ": " + body;
  }
  return o;
}

Observation Environment::error_observation(const std::string& reason) const {
  auto o = render();
  o.text = "Invalid action: " + reason + " [SEP] " + o.text;
  o.error = reason;
  return o;
}

StepResult Environment::finish_step(Observation obs) {
  ++step_count_;
  if (termination_ == Termination::None && step_count_ >= config_.step_limit) {
    termination_ = Termination::StepLimit;
    const auto utterance = obs.shopper_utterance;
    const auto error = obs.error;
    obs = render();
    obs.shopper_utterance = utterance;
    obs.error = error;
  }
  return {std::move(obs), terminal()};
}

StepResult Environment::reject_unparseable(const std::string& raw, const std::string& reason) {
  if (!started_) throw StateError("step before reset");
  if (terminal()) throw StateError("episode is over");
  (void)raw;
  last_confirmation_.reset();
  return finish_step(error_observation("could not parse action (" + reason + ")"));
}

Observation Environment::apply_click(const std::string& label) {
  const auto current = render();
  const auto folded = text::fold_label(label);
  std::size_t idx = current.clickable.size();
  for (std::size_t i = 0; i < current.clickable.size(); ++i) {
    if (text::fold_label(current.clickable[i]) == folded) {
      idx = i;
      break;
    }
  }
  if (idx == current.clickable.size()) return error_observation("'" + label + "' is not a clickable button on this page");
  const auto& button = current.clickable[idx];

  if (button == "back to search") {
    page_ = SearchHomePage{};
    return render();
  }
  if (auto* r = std::get_if<ResultsPage>(&page_)) {
    if (button == "< prev") {
      --r->page;
    } else if (button == "next >") {
      ++r->page;
    } else {
      page_ = ItemPage{button, {}, std::nullopt, *r};
    }
    return render();
  }

  auto& item = std::get<ItemPage>(page_);
  if (button == "< prev") {
    page_ = *item.return_to;
  } else if (button == "description" || button == "features" || button == "reviews") {
    std::string tab = button;
    tab[0] = static_cast<char>(tab[0] - 'a' + 'A');
    item.detail_tab = tab;
  } else if (button == "buy now") {
    const auto& p = catalog_->get(item.product_id);
    purchased_ = Purchase{item.product_id, item.selected, p.effective_price(item.selected)};
    termination_ = Termination::Purchase;
  } else {
    // option buttons follow the five fixed ones in group order
    const auto& p = catalog_->get(item.product_id);
    std::size_t k = idx - 6;
    for (const auto& g : p.option_groups) {
      if (k < g.values.size()) {
        item.selected[g.name] = g.values[k];
        break;
      }
      k -= g.values.size();
    }
  }
  return render();
}

StepResult Environment::step(const Action& action) {
  if (!started_) throw StateError("step before reset");
  if (terminal()) throw StateError("episode is over");
  if (action.kind == ActionKind::AskShopper && !is_multi_turn(config_.scenario)) {
    throw ProtocolError("ask_shopper is not available in single-turn scenarios", action.raw);
  }
  last_confirmation_.reset();
  switch (action.kind) {
    case ActionKind::Search: {
      if (!std::holds_alternative<SearchHomePage>(page_)) {
        return finish_step(error_observation("search is not available on this page"));
      }
      const auto query = trim(action.content);
      if (text::tokenize(query).empty()) return finish_step(error_observation("search query has no searchable words"));
      if (first_query_.empty()) first_query_ = query;
      page_ = ResultsPage{query, 1};
      return finish_step(render());
    }
    case ActionKind::Click:
      return finish_step(apply_click(action.content));
    case ActionKind::AskShopper: {
      dialogue_.push_back({"agent", action.content});
      const auto cand = candidate();
      std::string utterance;
      if (is_confirmation_request(action.content, task_.reveal_plan)) {
        last_confirmation_ = shopper_->confirm_purchase(action.content, cand ? &*cand : nullptr);
        utterance = last_confirmation_->utterance;
      } else {
        utterance = shopper_->reply(action.content, cand ? &*cand : nullptr);
      }
      dialogue_.push_back({"shopper", utterance});
      auto obs = render();
      obs.shopper_utterance = utterance;
      return finish_step(std::move(obs));
    }
  }
  throw StateError("unreachable action kind");
}

std::optional<CandidateSummary> Environment::candidate() const {
  const auto* item = std::get_if<ItemPage>(&page_);
  if (!item || terminal()) return std::nullopt;
  const auto& p = catalog_->get(item->product_id);
  return CandidateSummary{p, item->selected, p.effective_price(item->selected)};
}

std::optional<PurchaseOutcome> Environment::outcome() const {
  if (!purchased_) return std::nullopt;
  return PurchaseOutcome{catalog_->get(purchased_->product_id), purchased_->selected, purchased_->effective_price,
                         first_query_};
}

}  // namespace shopsim
