#include <doctest.h>

#include <set>
#include <sstream>

#include "shopsim/catalog.hpp"
#include "shopsim/error.hpp"

using namespace shopsim;

namespace {
const std::filesystem::path kFixtures = SHOPSIM_FIXTURES;

std::string serialize(const Catalog& c) {
  std::ostringstream out;
  write_catalog(c, out);
  return out.str();
}
}  // namespace

TEST_SUITE("catalog") {

TEST_CASE("the example product loads with its groups and price") {
  const auto c = load_catalog(kFixtures / "yonex.jsonl");
  REQUIRE(c.size() == 1);
  const auto& p = c.get("724988974873");
  REQUIRE(p.option_groups.size() == 2);
  CHECK(p.option_groups[0].name == "Color Options");
  CHECK(p.option_groups[0].values.size() == 5);
  CHECK(p.option_groups[1].name == "Size");
  CHECK(p.option_groups[1].values.size() == 10);
  CHECK(p.attributes.size() == 4);
  CHECK(p.price.low == 528.0);
  CHECK_FALSE(p.price.is_range());
  CHECK(p.price.display() == "528.0");
  CHECK(c.tree().fine_category_count() == 1);
}

TEST_CASE("range price collapses once the price-bearing group is chosen") {
  const auto c = load_catalog(kFixtures / "yonex_range.jsonl");
  const auto& p = c.get("724988974873");
  CHECK(p.price.display() == "528.0 to 660.0");
  CHECK_FALSE(p.price_resolved({{"Size", "40"}}));
  CHECK(p.effective_price({}) == 660.0);  // default SKU is the first colour
  const OptionSelection sel = {{"Color Options", "SHB510WCR White/Blue (Wide last)"}};
  CHECK(p.price_resolved(sel));
  CHECK(p.effective_price(sel) == 528.0);
  CHECK(p.min_price_with({}) == 528.0);
}

TEST_CASE("duplicate ids and bad records are rejected with a line number") {
  try {
    load_catalog(kFixtures / "duplicate_id.jsonl");
    FAIL("expected a duplicate-id error");
  } catch (const ValidationError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("724988974873") != std::string::npos);
  }
  try {
    load_catalog(kFixtures / "bad_range.jsonl");
    FAIL("expected a range error");
  } catch (const ValidationError& e) {
    CHECK(e.line() == 3);
    CHECK(e.field() == "pricing");
  }
  CHECK_THROWS_AS(load_catalog(kFixtures / "missing.jsonl"), NotFoundError);
}

TEST_CASE("unknown ids raise not-found with the id") {
  const auto c = load_catalog(kFixtures / "yonex.jsonl");
  try {
    c.get("nope");
    FAIL("expected not-found");
  } catch (const NotFoundError& e) {
    CHECK(e.id() == "nope");
  }
  CHECK(c.find("nope") == nullptr);
}

TEST_CASE("serialization round-trips") {
  const auto c = load_catalog(kFixtures / "yonex_range.jsonl");
  std::istringstream in(serialize(c));
  const auto back = read_catalog(in);
  CHECK(back.get("724988974873") == c.get("724988974873"));

  const auto gen = generate_catalog(3, GenerationSpec::preset("tiny"));
  std::istringstream in2(serialize(gen));
  CHECK(serialize(read_catalog(in2)) == serialize(gen));
}

TEST_CASE("generation is deterministic and seed-sensitive") {
  const auto spec = GenerationSpec::preset("fine120");
  const auto a = generate_catalog(1, spec);
  const auto b = generate_catalog(1, spec);
  const auto c = generate_catalog(2, spec);
  CHECK(a.size() == 120);
  CHECK(serialize(a) == serialize(b));
  CHECK(serialize(a) != serialize(c));
  CHECK(a.tree().fine_category_count() == 1);
}

TEST_CASE("siblings are pairwise distinguishable and valid") {
  const auto c = generate_catalog(5, GenerationSpec::preset("desk"));
  CHECK(c.size() == 2 * 2 * 3 * 60);
  for (const auto& fine : c.tree().fine_categories()) {
    std::set<std::string> keys;
    for (const auto& id : c.tree().products_in(fine)) {
      const auto& p = c.get(id);
      CHECK_NOTHROW(validate_product(p));
      auto attrs = p.attributes;
      std::sort(attrs.begin(), attrs.end());
      std::string key;
      for (const auto& a : attrs) key += a + "|";
      for (const auto& g : p.option_groups) {
        key += "#" + g.name;
        for (const auto& v : g.values) key += "," + v;
      }
      key += "$" + p.price.display();
      CHECK(keys.insert(key).second);
    }
  }
}

TEST_CASE("manifest counts must agree") {
  const auto c = generate_catalog(1, GenerationSpec::preset("tiny"));
  auto m = make_manifest(c, 1, GenerationSpec::preset("tiny").to_json());
  CHECK(m.product_count == 20);
  CHECK_NOTHROW(check_manifest(CatalogManifest::from_json(m.to_json()), c));
  m.product_count = 21;
  CHECK_THROWS_AS(check_manifest(m, c), ValidationError);
  CHECK(manifest_path_for("/x/cat.jsonl") == std::filesystem::path("/x/cat.manifest.json"));
}

TEST_CASE("zero counts are rejected") {
  auto spec = GenerationSpec::preset("tiny");
  spec.products_per_fine = 0;
  CHECK_THROWS_AS(generate_catalog(1, spec), ValidationError);
}

}
