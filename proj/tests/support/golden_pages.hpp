#pragma once

// Pinned page renderings shared by the unit and acceptance suites.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "shopsim/env.hpp"
#include "shopsim/text.hpp"

namespace golden {

inline const std::string kYonex = "724988974873";
inline const std::string kWhiteBlue = "SHB510WCR White/Blue (Wide last)";

/// The YONEX range-priced product plus 149 badminton-shoe siblings.
inline shopsim::Catalog badminton150(const std::filesystem::path& fixtures) {
  const auto base = shopsim::load_catalog(fixtures / "yonex_range.jsonl").get(kYonex);
  std::vector<shopsim::Product> all{base};
  const char* brands[] = {"LI-NING", "VICTOR", "Kawasaki", "Mizuno", "ASICS", "Kumpoo", "Apacs"};
  const char* traits[] = {"breathable", "lightweight", "anti-slip", "shock-absorbing", "wide-last"};
  for (int i = 1; i < 150; ++i) {
    shopsim::Product p = base;
    char id[16];
    std::snprintf(id, sizeof id, "8100%08d", i);
    p.product_id = id;
    p.title = std::string(brands[i % 7]) + " badminton shoes model " + std::to_string(100 + i) + ", " + traits[i % 5] +
              " court trainers";
    p.price = shopsim::PriceSpec{199.0 + i, std::nullopt};
    p.price_deltas.clear();
    all.push_back(std::move(p));
  }
  return shopsim::Catalog(std::move(all), "badminton150");
}

inline shopsim::Task yonex_task(const shopsim::Catalog& c) {
  const auto& p = c.get(kYonex);
  shopsim::Task t;
  t.task_id = "g1";
  t.instruction = "I need YONEX badminton shoes with cushioning in White/Blue, size 40, within 600 yuan.";
  t.target = {p.product_id, p.category, p.title, "yonex badminton shoes", {"Cushioning"},
              {{"Color Options", kWhiteBlue}, {"Size", "40"}}, 600.0};
  t.scenario_tags = {shopsim::Scenario::SingleTurn};
  for (const auto& s : shopsim::constrained_slots(t.target)) t.reveal_plan.push_back({s, s, false});
  return t;
}

inline shopsim::Action click(std::string v) { return {shopsim::ActionKind::Click, std::move(v), {}}; }
inline shopsim::Action search(std::string q) { return {shopsim::ActionKind::Search, std::move(q), {}}; }

/// (file name, observation) for every pinned page.
inline std::vector<std::pair<std::string, shopsim::Observation>> pages(const std::filesystem::path& fixtures) {
  using namespace shopsim;
  const auto catalog = badminton150(fixtures);
  const SearchIndex index(catalog);
  const auto task = yonex_task(catalog);
  std::vector<std::pair<std::string, Observation>> out;

  Environment env(catalog, index, task, ScenarioConfig::defaults(Scenario::SingleTurn), nullptr, nullptr);
  out.emplace_back("home.txt", env.reset());
  out.emplace_back("results_page1.txt", env.step(search("badminton shoes")).observation);
  out.emplace_back("results_page2.txt", env.step(click("next >")).observation);
  env.step(click("back to search"));
  env.step(search("yonex badminton shoes"));
  out.emplace_back("item_unselected.txt", env.step(click(kYonex)).observation);
  env.step(click(kWhiteBlue));
  out.emplace_back("item_selected.txt", env.step(click("40")).observation);
  out.emplace_back("item_features.txt", env.step(click("Features")).observation);
  out.emplace_back("purchased.txt", env.step(click("Buy Now")).observation);

  auto cfg = ScenarioConfig::defaults(Scenario::SingleTurn);
  cfg.step_limit = 2;
  Environment limited(catalog, index, task, cfg, nullptr, nullptr);
  limited.reset();
  limited.step(search("badminton shoes"));
  out.emplace_back("step_limit.txt", limited.step(click("no such button")).observation);
  return out;
}

/// [SEP] only appears as " [SEP] " between non-empty, trimmed segments, and
/// every clickable is shown as a segment. Returns the problems found.
inline std::vector<std::string> structure_problems(const shopsim::Observation& o) {
  std::vector<std::string> segs;
  for (std::size_t start = 0;;) {
    const auto p = o.text.find(" [SEP] ", start);
    segs.push_back(o.text.substr(start, p == std::string::npos ? std::string::npos : p - start));
    if (p == std::string::npos) break;
    start = p + 7;
  }
  std::vector<std::string> problems;
  for (const auto& s : segs) {
    if (s.empty() || s.find("[SEP]") != std::string::npos || s.front() == ' ' || s.back() == ' ') {
      problems.push_back("bad segment '" + s + "'");
    }
  }
  for (const auto& c : o.clickable) {
    const bool shown = std::any_of(segs.begin(), segs.end(), [&](const std::string& s) {
      return shopsim::text::fold_label(s) == shopsim::text::fold_label(c);
    });
    if (!shown) problems.push_back("clickable '" + c + "' is not on the page");
  }
  return problems;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace golden
