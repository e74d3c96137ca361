#include <doctest.h>

#include <algorithm>
#include <memory>

#include "shopsim/error.hpp"
#include "shopsim/shopper.hpp"
#include "shopsim/text.hpp"

using namespace shopsim;

namespace {

struct World {
  Catalog catalog = generate_catalog(1, GenerationSpec::preset("fine120"));
  TaskSet tasks = generate_tasks(catalog, 7, 20);
};

const World& world() {
  static const World w;
  return w;
}

/// A task with two attributes, a colour and a second option group.
const Task& rich_task() {
  for (const auto& t : world().tasks.tasks) {
    if (t.target.attributes.size() >= 2 && t.target.options.size() == 2) return t;
  }
  FAIL("no task with two option groups");
  throw;
}

std::string second_group(const Task& t) {
  for (const auto& [g, _] : t.target.options) {
    if (g != "Color") return g;
  }
  return {};
}

CandidateSummary candidate_for(const Task& t, OptionSelection sel) {
  CandidateSummary c;
  c.product = world().catalog.get(t.target.product_id);
  c.selected = std::move(sel);
  c.price = c.product.effective_price(c.selected);
  return c;
}

class ScriptedChat : public ChatBackend {
 public:
  explicit ScriptedChat(std::vector<std::string> answers) : answers_(std::move(answers)) {}
  std::string complete(const std::vector<ChatMessage>& messages) override {
    seen.push_back(messages);
    if (next_ >= answers_.size()) throw BackendError(BackendError::Kind::MalformedCompletion, "empty completion");
    return answers_[next_++];
  }
  std::string id() const override { return "mock"; }
  std::vector<std::vector<ChatMessage>> seen;

 private:
  std::vector<std::string> answers_;
  std::size_t next_ = 0;
};

}  // namespace

TEST_SUITE("shopper") {

TEST_CASE("opener names the product kind and at most one attribute") {
  const auto& t = rich_task();
  ScriptedShopper s(t, 3);
  const auto open = s.open();
  CHECK(text::contains_phrase(open, text::fold_label(t.target.category.fine_category)));
  CHECK_FALSE(text::contains_phrase(open, text::format_number(*t.target.price_cap)));
  CHECK_FALSE(text::contains_phrase(open, t.target.options.at(second_group(t))));
  int attrs = 0;
  for (const auto& a : t.target.attributes) attrs += text::contains_phrase(open, a);
  CHECK(attrs <= 1);
  CHECK(s.disclosed().size() == 1 + static_cast<std::size_t>(attrs));

  ScriptedShopper again(t, 3);
  CHECK(again.open() == open);

  ScriptedShopper terse(t, 3, {false, 0});
  terse.open();
  CHECK(terse.disclosed() == std::vector<std::string>{"category"});
}

TEST_CASE("questions disclose matching slots once") {
  const auto& t = rich_task();
  ScriptedShopper s(t, 3);
  s.open();
  const auto before = s.disclosed();

  const auto budget = s.reply("What is your budget?", nullptr);
  CHECK(text::contains_phrase(budget, text::format_number(*t.target.price_cap)));
  auto after = s.disclosed();
  CHECK(std::find(after.begin(), after.end(), "price") != after.end());
  CHECK(after.size() == before.size() + 1);

  const auto again = s.reply("And the budget again?", nullptr);
  CHECK(again == budget);
  CHECK(s.disclosed() == after);

  const auto weather = s.reply("Lovely weather today, isn't it?", nullptr);
  CHECK_FALSE(text::contains_phrase(weather, text::format_number(*t.target.price_cap)));
  CHECK(s.disclosed() == after);
}

TEST_CASE("confirmation is gated on disclosure and on the candidate") {
  const auto& t = rich_task();
  const auto group = second_group(t);
  ScriptedShopper s(t, 3);
  s.open();
  const auto good = candidate_for(t, t.target.options);

  auto c = s.confirm_purchase("Shall I buy it?", &good);
  CHECK_FALSE(c.approved);
  CHECK_FALSE(s.said_farewell());
  s.reply("What is your budget?", nullptr);
  c = s.confirm_purchase("Shall I buy it?", &good);
  CHECK_FALSE(c.approved);
  CHECK(c.reason != "budget information");

  s.reply("Which features, color and " + text::fold_label(group) + " do you need?", nullptr);
  REQUIRE(s.fully_disclosed());

  // wrong value in the non-colour group
  auto sel = t.target.options;
  const auto* grp = good.product.find_group(group);
  REQUIRE(grp != nullptr);
  for (const auto& v : grp->values) {
    if (!text::fuzzy_equal(v, sel[group])) {
      sel[group] = v;
      break;
    }
  }
  const auto bad = candidate_for(t, sel);
  c = s.confirm_purchase("Shall I buy it?", &bad);
  CHECK_FALSE(c.approved);
  CHECK(c.reason == text::fold_label(group));
  CHECK(text::contains_phrase(c.utterance, text::fold_label(group)));

  c = s.confirm_purchase("Shall I buy it?", nullptr);
  CHECK_FALSE(c.approved);

  c = s.confirm_purchase("Shall I buy it?", &good);
  CHECK(c.approved);
  CHECK(s.said_farewell());
  CHECK(s.reply("one more question about size", nullptr).find("goodbye") != std::string::npos);
}

TEST_CASE("refusal names the budget when only the price is missing") {
  const auto& t = rich_task();
  ScriptedShopper s(t, 3);
  s.open();
  s.reply("Which features, color and " + text::fold_label(second_group(t)) + " do you need?", nullptr);
  const auto good = candidate_for(t, t.target.options);
  const auto c = s.confirm_purchase("Shall I buy it?", &good);
  CHECK_FALSE(c.approved);
  CHECK(c.reason == "budget information");
  CHECK(text::contains_phrase(c.utterance, "budget information"));
}

TEST_CASE("leaky shopper volunteers one slot per reply") {
  const auto& t = rich_task();
  ScriptedShopper s(t, 3, {true, 1});
  s.open();
  const auto n = s.disclosed().size();
  s.reply("hello there", nullptr);
  CHECK(s.disclosed().size() == n + 1);
  CHECK(s.backend_id() == "scripted-leaky");
}

TEST_CASE("confirmation requests") {
  const auto& plan = rich_task().reveal_plan;
  CHECK(is_confirmation_request("I found one that fits. Shall I go ahead and buy it?", plan));
  CHECK(is_confirmation_request("Can I place the order for this product?", plan));
  CHECK_FALSE(is_confirmation_request("What is your budget before I buy?", plan));
  CHECK_FALSE(is_confirmation_request("Which color do you like?", plan));
  CHECK(slot_reason("price") == "budget information");
  CHECK(slot_reason("option:Size") == "size preference");
}

TEST_CASE("candidate summary text") {
  const auto& t = rich_task();
  const auto c = candidate_for(t, t.target.options);
  const auto d = c.describe();
  CHECK(d.rfind(c.product.title + " | ", 0) == 0);
  CHECK(d.size() > 5);
  CHECK(d.substr(d.size() - 5) == " yuan");
}

TEST_CASE("LLM shopper passes completions through verbatim") {
  const auto& t = rich_task();
  auto chat = std::make_shared<ScriptedChat>(std::vector<std::string>{
      "I need some rain gear.", "  My budget is 100 yuan!  ", "Yes, please buy it. Goodbye!"});
  LlmShopper s(t, chat);
  CHECK(s.open() == "I need some rain gear.");
  CHECK(s.reply("What is your budget?", nullptr) == "  My budget is 100 yuan!  ");
  CHECK(chat->seen.back().front().role == "system");
  CHECK(chat->seen.back().back().content == "What is your budget?");
  const auto good = candidate_for(t, t.target.options);
  const auto c = s.confirm_purchase("Shall I buy it?", &good);
  CHECK(c.approved);
  CHECK(s.said_farewell());
  CHECK(chat->seen.back().back().content.find(good.describe()) != std::string::npos);
  CHECK(s.transcript().size() == 7);
  CHECK_THROWS_AS(s.reply("anything else?", nullptr), BackendError);
  CHECK_THROWS_AS(LlmShopper(t, nullptr), StateError);
}

TEST_CASE("LLM shopper refusal detection") {
  const auto& t = rich_task();
  auto chat = std::make_shared<ScriptedChat>(std::vector<std::string>{"No, wait, you haven't asked about my size."});
  LlmShopper s(t, chat);
  const auto c = s.confirm_purchase("Shall I buy it?", nullptr);
  CHECK_FALSE(c.approved);
  CHECK_FALSE(c.reason.empty());
}

}
