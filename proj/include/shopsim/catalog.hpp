#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace shopsim {

/// domain -> first-level category -> fine category.
struct CategoryPath {
  std::string domain;
  std::string first_category;
  std::string fine_category;

  auto operator<=>(const CategoryPath&) const = default;
  std::string to_string() const { return domain + " > " + first_category + " > " + fine_category; }
};

/// Number of leading levels two paths have in common (0..3).
std::size_t shared_path_nodes(const CategoryPath& a, const CategoryPath& b);

struct OptionGroup {
  std::string name;
  std::vector<std::string> values;
  bool operator==(const OptionGroup&) const = default;
};

/// group name -> chosen value.
using OptionSelection = std::map<std::string, std::string>;

/// A point price, or an inclusive range when `high` is set.
struct PriceSpec {
  double low = 0.0;
  std::optional<double> high;

  bool is_range() const { return high.has_value(); }
  double max() const { return high.value_or(low); }
  /// "528.0" or "528.0 to 660.0".
  std::string display() const;
  bool operator==(const PriceSpec&) const = default;
};

struct Product {
  std::string product_id;
  std::string title;
  std::string shop_name;
  CategoryPath category;
  std::vector<OptionGroup> option_groups;
  std::vector<std::string> attributes;
  PriceSpec price;
  /// Per-option surcharge over `price.low`: group -> value -> delta. Groups
  /// listed here are "price-bearing".
  std::map<std::string, std::map<std::string, double>> price_deltas;
  std::string description;
  std::string features;
  std::string reviews;

  const OptionGroup* find_group(std::string_view name) const;
  /// First group containing `value` (exact match).
  const OptionGroup* group_of_value(std::string_view value) const;

  /// True once a range-priced product has every price-bearing group selected.
  bool price_resolved(const OptionSelection& selected) const;

  /// low + sum of deltas. An unselected price-bearing group is charged at its
  /// first listed value (the default SKU).
  double effective_price(const OptionSelection& selected) const;

  /// Cheapest price reachable when `fixed` groups are pinned and all others
  /// are free.
  double min_price_with(const OptionSelection& fixed) const;

  bool operator==(const Product&) const = default;
};

/// Throws ValidationError naming the field on any invariant violation.
void validate_product(const Product& product);

nlohmann::ordered_json product_to_json(const Product& product);
/// Throws ValidationError (field set) on schema problems.
Product product_from_json(const nlohmann::ordered_json& j);

/// Three-level hierarchy with the product ids filed under each fine category.
class CategoryTree {
 public:
  void add(const CategoryPath& path, const std::string& product_id);

  std::vector<std::string> domains() const;
  std::vector<std::string> first_categories(const std::string& domain) const;
  std::vector<CategoryPath> fine_categories() const;
  const std::vector<std::string>& products_in(const CategoryPath& path) const;
  std::size_t fine_category_count() const { return fine_.size(); }

 private:
  std::map<CategoryPath, std::vector<std::string>> fine_;
};

/// Immutable in-memory product collection.
class Catalog {
 public:
  Catalog() = default;
  /// Validates every product and builds the tree. Throws ValidationError
  /// (line = 1-based position) on the first bad record or duplicate id.
  explicit Catalog(std::vector<Product> products, std::string name = "catalog");

  const std::string& name() const { return name_; }
  std::size_t size() const { return products_.size(); }
  bool empty() const { return products_.empty(); }
  std::span<const Product> products() const { return products_; }
  const CategoryTree& tree() const { return tree_; }

  /// Throws NotFoundError carrying the id.
  const Product& get(std::string_view product_id) const;
  const Product* find(std::string_view product_id) const;
  std::size_t index_of(std::string_view product_id) const;

 private:
  std::string name_;
  std::vector<Product> products_;
  std::unordered_map<std::string, std::size_t> by_id_;
  CategoryTree tree_;
};

/// Line-delimited JSON, one product per line. Blank lines are skipped.
/// Rejects the whole input on the first bad record, reporting its line.
Catalog read_catalog(std::istream& in, std::string name = "catalog");
Catalog load_catalog(const std::filesystem::path& path);
void write_catalog(const Catalog& catalog, std::ostream& out);
void save_catalog(const Catalog& catalog, const std::filesystem::path& path);

/// Vocabulary used by the generator. Every pool must be free of
/// near-duplicates under the fuzzy matcher.
struct VocabularyPools {
  std::vector<std::string> domains;
  std::vector<std::string> first_categories;
  std::vector<std::string> fine_categories;
  std::vector<std::string> brands;
  std::vector<std::string> attributes;
  std::vector<std::string> colors;
  /// Second option group per fine category, assigned round-robin.
  std::vector<OptionGroup> option_templates;
  std::vector<std::string> shop_suffixes;
  std::vector<std::string> reviews;

  static VocabularyPools builtin();
};

struct GenerationSpec {
  std::string catalog_name = "synthetic";
  int domains = 1;
  int first_per_domain = 1;
  int fine_per_first = 1;
  int products_per_fine = 120;
  /// Per fine category the generator draws this many attributes/colors/brands
  /// from the global pools, so siblings overlap heavily.
  int attribute_pool_per_fine = 10;
  int color_pool_per_fine = 8;
  int brands_per_fine = 6;
  int attributes_min = 3;
  int attributes_max = 5;
  int colors_min = 3;
  int colors_max = 5;
  int second_group_min = 4;
  int second_group_max = 7;
  double min_base_price = 60.0;
  double max_base_price = 900.0;
  /// Probability that a product is range-priced with colour surcharges.
  double range_price_probability = 0.4;
  VocabularyPools pools = VocabularyPools::builtin();

  nlohmann::ordered_json to_json() const;
  static GenerationSpec from_json(const nlohmann::ordered_json& j);
  /// "tiny" (1x1x1x20), "fine120" (1x1x1x120), "desk" (2x2x3x60), "bench" (1x2x3x120).
  static GenerationSpec preset(std::string_view name);
};

/// Deterministic for a given (seed, spec). Within a fine category no two
/// products share (attribute set, option groups, price).
Catalog generate_catalog(std::uint64_t seed, const GenerationSpec& spec);

struct CatalogManifest {
  std::string name;
  std::uint64_t seed = 0;
  std::size_t product_count = 0;
  std::map<std::string, std::size_t> per_domain_counts;
  nlohmann::ordered_json generation;

  nlohmann::ordered_json to_json() const;
  static CatalogManifest from_json(const nlohmann::ordered_json& j);
};

CatalogManifest make_manifest(const Catalog& catalog, std::uint64_t seed, const nlohmann::ordered_json& generation);
/// Throws ValidationError if counts disagree with the catalog.
void check_manifest(const CatalogManifest& manifest, const Catalog& catalog);
/// "<stem>.manifest.json" next to the catalog file.
std::filesystem::path manifest_path_for(const std::filesystem::path& catalog_path);

}  // namespace shopsim
