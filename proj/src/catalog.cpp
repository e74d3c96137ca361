#include "shopsim/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "shopsim/error.hpp"
#include "shopsim/rng.hpp"
#include "shopsim/text.hpp"

namespace shopsim {

using json = nlohmann::ordered_json;

std::size_t shared_path_nodes(const CategoryPath& a, const CategoryPath& b) {
  if (a.domain != b.domain) return 0;
  if (a.first_category != b.first_category) return 1;
  if (a.fine_category != b.fine_category) return 2;
  return 3;
}

std::string PriceSpec::display() const {
  if (high) return text::format_price(low) + " to " + text::format_price(*high);
  return text::format_price(low);
}

const OptionGroup* Product::find_group(std::string_view name) const {
  for (const auto& g : option_groups) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

const OptionGroup* Product::group_of_value(std::string_view value) const {
  for (const auto& g : option_groups) {
    if (std::find(g.values.begin(), g.values.end(), value) != g.values.end()) return &g;
  }
  return nullptr;
}

bool Product::price_resolved(const OptionSelection& selected) const {
  if (!price.is_range() || price_deltas.empty()) return false;
  return std::all_of(price_deltas.begin(), price_deltas.end(),
                     [&](const auto& kv) { return selected.count(kv.first) > 0; });
}

namespace {
double delta_of(const std::map<std::string, double>& table, const std::string& value) {
  auto it = table.find(value);
  return it == table.end() ? 0.0 : it->second;
}
}  // namespace

double Product::effective_price(const OptionSelection& selected) const {
  double total = price.low;
  for (const auto& [group, table] : price_deltas) {
    auto sel = selected.find(group);
    if (sel != selected.end()) {
      total += delta_of(table, sel->second);
    } else if (const auto* g = find_group(group); g != nullptr && !g->values.empty()) {
      total += delta_of(table, g->values.front());
    }
  }
  return total;
}

double Product::min_price_with(const OptionSelection& fixed) const {
  double total = price.low;
  for (const auto& [group, table] : price_deltas) {
    auto sel = fixed.find(group);
    if (sel != fixed.end()) {
      total += delta_of(table, sel->second);
      continue;
    }
    const auto* g = find_group(group);
    if (g == nullptr) continue;
    double best = INFINITY;
    for (const auto& v : g->values) best = std::min(best, delta_of(table, v));
    if (std::isfinite(best)) total += best;
  }
  return total;
}

void validate_product(const Product& p) {
  if (p.product_id.empty()) throw ValidationError("must be non-empty", 0, "product_id");
  if (p.title.empty()) throw ValidationError("must be non-empty", 0, "title");
  if (p.category.domain.empty()) throw ValidationError("must be non-empty", 0, "domain");
  if (p.category.first_category.empty()) throw ValidationError("must be non-empty", 0, "first_category");
  if (p.category.fine_category.empty()) throw ValidationError("must be non-empty", 0, "fine_category");

  std::set<std::string> group_names;
  for (const auto& g : p.option_groups) {
    if (g.name.empty()) throw ValidationError("option group name must be non-empty", 0, "options");
    if (!group_names.insert(g.name).second) throw ValidationError("duplicate option group '" + g.name + "'", 0, "options");
    if (g.values.empty()) throw ValidationError("option group '" + g.name + "' has no values", 0, "options");
    std::set<std::string> seen;
    for (const auto& v : g.values) {
      if (v.empty()) throw ValidationError("empty value in option group '" + g.name + "'", 0, "options");
      if (!seen.insert(v).second) {
        throw ValidationError("duplicate value '" + v + "' in option group '" + g.name + "'", 0, "options");
      }
    }
  }

  std::set<std::string> attrs;
  for (const auto& a : p.attributes) {
    if (a.empty()) throw ValidationError("empty attribute", 0, "attribute");
    if (!attrs.insert(a).second) throw ValidationError("duplicate attribute '" + a + "'", 0, "attribute");
  }

  if (!std::isfinite(p.price.low) || p.price.low < 0) throw ValidationError("price must be >= 0", 0, "pricing");
  if (p.price.high) {
    if (!std::isfinite(*p.price.high) || *p.price.high < p.price.low) {
      throw ValidationError("price range min must be <= max", 0, "pricing");
    }
  }

  for (const auto& [group, table] : p.price_deltas) {
    const auto* g = p.find_group(group);
    if (g == nullptr) throw ValidationError("unknown option group '" + group + "'", 0, "option_price_deltas");
    for (const auto& [value, delta] : table) {
      if (std::find(g->values.begin(), g->values.end(), value) == g->values.end()) {
        throw ValidationError("unknown value '" + value + "' in group '" + group + "'", 0, "option_price_deltas");
      }
      if (!std::isfinite(delta) || delta < 0) {
        throw ValidationError("price delta must be >= 0", 0, "option_price_deltas");
      }
    }
  }
}

json product_to_json(const Product& p) {
  json j;
  j["product_id"] = p.product_id;
  j["title"] = p.title;
  j["shop_name"] = p.shop_name;
  j["domain"] = p.category.domain;
  j["first_category"] = p.category.first_category;
  j["fine_category"] = p.category.fine_category;
  json options = json::object();
  for (const auto& g : p.option_groups) options[g.name] = g.values;
  j["options"] = std::move(options);
  if (p.price.high) {
    j["pricing"] = json::array({p.price.low, *p.price.high});
  } else {
    j["pricing"] = p.price.low;
  }
  j["attribute"] = p.attributes;
  j["description"] = p.description;
  j["features"] = p.features;
  j["reviews"] = p.reviews;
  if (!p.price_deltas.empty()) {
    json deltas = json::object();
    for (const auto& [group, table] : p.price_deltas) {
      json t = json::object();
      for (const auto& [value, d] : table) t[value] = d;
      deltas[group] = std::move(t);
    }
    j["option_price_deltas"] = std::move(deltas);
  }
  return j;
}

namespace {

std::string require_string(const json& j, const char* field, bool optional = false) {
  auto it = j.find(field);
  if (it == j.end()) {
    if (optional) return {};
    throw ValidationError("missing", 0, field);
  }
  if (!it->is_string()) throw ValidationError("must be a string", 0, field);
  return it->get<std::string>();
}

double require_number(const json& v, const char* field) {
  if (!v.is_number()) throw ValidationError("must be a number", 0, field);
  return v.get<double>();
}

std::vector<std::string> string_array(const json& v, const char* field) {
  if (!v.is_array()) throw ValidationError("must be an array of strings", 0, field);
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ValidationError("must be an array of strings", 0, field);
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace

Product product_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("record must be a JSON object");
  Product p;
  p.product_id = require_string(j, "product_id");
  p.title = require_string(j, "title");
  p.shop_name = require_string(j, "shop_name");
  p.category.domain = require_string(j, "domain");
  p.category.first_category = require_string(j, "first_category");
  p.category.fine_category = require_string(j, "fine_category");

  auto opts = j.find("options");
  if (opts == j.end()) throw ValidationError("missing", 0, "options");
  if (!opts->is_object()) throw ValidationError("must be an object of arrays", 0, "options");
  for (const auto& [name, values] : opts->items()) {
    p.option_groups.push_back({name, string_array(values, "options")});
  }

  auto pricing = j.find("pricing");
  if (pricing == j.end()) throw ValidationError("missing", 0, "pricing");
  if (pricing->is_array()) {
    if (pricing->size() != 2) throw ValidationError("range must be [min, max]", 0, "pricing");
    p.price.low = require_number((*pricing)[0], "pricing");
    p.price.high = require_number((*pricing)[1], "pricing");
  } else {
    p.price.low = require_number(*pricing, "pricing");
  }

  auto attrs = j.find("attribute");
  if (attrs == j.end()) throw ValidationError("missing", 0, "attribute");
  p.attributes = string_array(*attrs, "attribute");

  p.description = require_string(j, "description", true);
  p.features = require_string(j, "features", true);
  p.reviews = require_string(j, "reviews", true);

  if (auto deltas = j.find("option_price_deltas"); deltas != j.end()) {
    if (!deltas->is_object()) throw ValidationError("must be an object", 0, "option_price_deltas");
    for (const auto& [group, table] : deltas->items()) {
      if (!table.is_object()) throw ValidationError("must map values to numbers", 0, "option_price_deltas");
      for (const auto& [value, d] : table.items()) {
        p.price_deltas[group][value] = require_number(d, "option_price_deltas");
      }
    }
  }
  validate_product(p);
  return p;
}

void CategoryTree::add(const CategoryPath& path, const std::string& product_id) {
  fine_[path].push_back(product_id);
}

std::vector<std::string> CategoryTree::domains() const {
  std::vector<std::string> out;
  for (const auto& [path, _] : fine_) {
    if (out.empty() || out.back() != path.domain) out.push_back(path.domain);
  }
  return out;
}

std::vector<std::string> CategoryTree::first_categories(const std::string& domain) const {
  std::vector<std::string> out;
  for (const auto& [path, _] : fine_) {
    if (path.domain == domain && (out.empty() || out.back() != path.first_category)) {
      out.push_back(path.first_category);
    }
  }
  return out;
}

std::vector<CategoryPath> CategoryTree::fine_categories() const {
  std::vector<CategoryPath> out;
  out.reserve(fine_.size());
  for (const auto& [path, _] : fine_) out.push_back(path);
  return out;
}

const std::vector<std::string>& CategoryTree::products_in(const CategoryPath& path) const {
  static const std::vector<std::string> kEmpty;
  auto it = fine_.find(path);
  return it == fine_.end() ? kEmpty : it->second;
}

Catalog::Catalog(std::vector<Product> products, std::string name)
    : name_(std::move(name)), products_(std::move(products)) {
  by_id_.reserve(products_.size());
  for (std::size_t i = 0; i < products_.size(); ++i) {
    const auto& p = products_[i];
    try {
      validate_product(p);
    } catch (const ValidationError& e) {
      throw ValidationError(e.message(), i + 1, e.field());
    }
    if (!by_id_.emplace(p.product_id, i).second) {
      throw ValidationError("duplicate product_id: " + p.product_id, i + 1, "product_id");
    }
    tree_.add(p.category, p.product_id);
  }
}

const Product* Catalog::find(std::string_view product_id) const {
  auto it = by_id_.find(std::string(product_id));
  return it == by_id_.end() ? nullptr : &products_[it->second];
}

const Product& Catalog::get(std::string_view product_id) const {
  if (const auto* p = find(product_id)) return *p;
  throw NotFoundError("product", std::string(product_id));
}

std::size_t Catalog::index_of(std::string_view product_id) const {
  auto it = by_id_.find(std::string(product_id));
  if (it == by_id_.end()) throw NotFoundError("product", std::string(product_id));
  return it->second;
}

Catalog read_catalog(std::istream& in, std::string name) {
  std::vector<Product> products;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    Product p;
    try {
      p = product_from_json(j);
    } catch (const ValidationError& e) {
      throw ValidationError(e.message(), line_no, e.field());
    }
    if (auto [it, inserted] = seen.emplace(p.product_id, line_no); !inserted) {
      throw ValidationError("duplicate product_id: " + p.product_id + " (first seen on line " +
                                std::to_string(it->second) + ")",
                            line_no, "product_id");
    }
    products.push_back(std::move(p));
  }
  return Catalog(std::move(products), std::move(name));
}

Catalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("catalog file", path.string());
  return read_catalog(in, path.stem().string());
}

void write_catalog(const Catalog& catalog, std::ostream& out) {
  for (const auto& p : catalog.products()) out << product_to_json(p).dump() << '\n';
}

void save_catalog(const Catalog& catalog, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_catalog(catalog, out);
}

// --- generation --------------------------------------------------------------

VocabularyPools VocabularyPools::builtin() {
  VocabularyPools p;
  p.domains = {"Home & Living",
               "Industrial & Farm Supplies",
               "Leisure & Entertainment & Education",
               "Sports & Outdoor & Travel",
               "Beauty & Personal Care & Health",
               "Home Appliances & Electronics",
               "Food & Drinks",
               "Clothing & Shoes & Accessories",
               "Maternity & Baby & Kids",
               "Local & General Services",
               "Online Services & Digital Goods",
               "Second-hand & Auctions"};
  p.first_categories = {"Athletic Shoes", "Outdoor Apparel", "Kitchen Tools",  "Bedding",
                        "Skin Care",      "Audio Devices",   "Snacks",         "Toys",
                        "Stationery",     "Pet Supplies",    "Garden Tools",   "Bags & Luggage",
                        "Fitness Gear",   "Lighting",        "Drinkware",      "Camping Gear"};
  p.fine_categories = {"Badminton Shoes",   "Running Shoes",   "Hiking Boots",      "Tennis Shoes",
                       "Basketball Shoes",  "Trail Sneakers",  "Rain Jackets",      "Fleece Hoodies",
                       "Yoga Pants",        "Chef Knives",     "Frying Pans",       "Cutting Boards",
                       "Duvet Covers",      "Pillow Cases",    "Face Serums",       "Sunscreen Lotions",
                       "Bluetooth Earbuds", "Desk Speakers",   "Trail Mix",         "Green Tea",
                       "Building Blocks",   "Plush Toys",      "Gel Pens",          "Notebooks",
                       "Dog Leashes",       "Cat Beds",        "Pruning Shears",    "Garden Hoses",
                       "Travel Backpacks",  "Carry-on Suitcases", "Yoga Mats",      "Dumbbells",
                       "Desk Lamps",        "String Lights",   "Water Bottles",     "Camping Tents"};
  p.brands = {"Kestrel", "Yonder",  "Vantor",    "Lumio",   "Quillon", "Brisa",   "Tamarack", "Orvelle",
              "Zephra",  "Halden",  "Marlowe",   "Sorrel",  "Pinecrest", "Aurex", "Novaline", "Bexley",
              "Corvid",  "Dunmore", "Elmwood",   "Fenwick", "Glenrock", "Hollis", "Ivor",     "Juniper"};
  p.attributes = {"Cushioning",   "Wear-resistant", "Authentic",       "Unisex",         "Waterproof",
                  "Breathable",   "Lightweight",    "Anti-slip",       "Quick-dry",      "Foldable",
                  "Eco-friendly", "Shock-absorbing", "Reflective",     "Windproof",      "Handmade",
                  "Ergonomic",    "Insulated",      "Adjustable",      "Portable",       "Washable",
                  "Stain-resistant", "UV-protective", "Hypoallergenic", "Rechargeable"};
  p.colors = {"Black", "White",  "Navy",   "Red",   "Gray",  "Silver", "Pink",       "Olive",
              "Beige", "Purple", "Orange", "Teal",  "Ivory", "Khaki",  "White/Blue", "Black/Red"};
  p.option_templates = {
      {"Size", {"35", "36", "37", "38", "39", "40", "41", "42", "43", "44", "45", "46"}},
      {"Capacity", {"250ml", "350ml", "500ml", "750ml", "1L", "1.5L", "2L"}},
      {"Size", {"XS", "S", "M", "L", "XL", "XXL", "3XL"}},
      {"Pack", {"1 Pack", "2 Pack", "3 Pack", "4 Pack", "6 Pack", "8 Pack"}},
      {"Length", {"1m", "1.5m", "2m", "3m", "5m", "10m", "15m"}},
      {"Edition", {"Standard", "Pro", "Lite", "Max", "Plus", "Classic", "Deluxe"}},
  };
  p.shop_suffixes = {"Official Store", "Flagship Store", "Specialty Store", "Outlet", "Direct Shop"};
  p.reviews = {"Arrived quickly and well packaged.", "Good value for the money.", "Exactly as described.",
               "Would buy again.", "Customer service was helpful.", "Looks nice in person.",
               "Solid build, no complaints.", "My second purchase from this shop."};
  return p;
}

namespace {

void require_pool(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what, 0, "spec");
}

void check_distinct(const std::vector<std::string>& pool, const std::string& what, bool with_containment) {
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      const bool clash = with_containment ? (text::fuzzy_match(pool[i], pool[j]) || text::fuzzy_match(pool[j], pool[i]))
                                          : text::fuzzy_equal(pool[i], pool[j]);
      if (clash) {
        throw ValidationError(what + " pool has near-duplicate values '" + pool[i] + "' and '" + pool[j] + "'", 0,
                              "spec");
      }
    }
  }
}

void validate_spec(const GenerationSpec& s) {
  require_pool(s.domains > 0 && s.first_per_domain > 0 && s.fine_per_first > 0 && s.products_per_fine > 0,
               "all counts must be positive");
  const auto& p = s.pools;
  const auto total_first = static_cast<std::size_t>(s.domains) * static_cast<std::size_t>(s.first_per_domain);
  const auto total_fine = total_first * static_cast<std::size_t>(s.fine_per_first);
  require_pool(p.domains.size() >= static_cast<std::size_t>(s.domains), "domain pool smaller than requested domains");
  require_pool(p.first_categories.size() >= total_first, "first-category pool smaller than required distinct values");
  require_pool(p.fine_categories.size() >= total_fine, "fine-category pool smaller than required distinct values");
  require_pool(s.attributes_min >= 1 && s.attributes_min <= s.attributes_max, "attribute count range invalid");
  require_pool(s.attribute_pool_per_fine >= s.attributes_max, "attribute_pool_per_fine smaller than attributes_max");
  require_pool(p.attributes.size() >= static_cast<std::size_t>(s.attribute_pool_per_fine),
               "attribute pool smaller than required distinct values");
  require_pool(s.colors_min >= 1 && s.colors_min <= s.colors_max, "color count range invalid");
  require_pool(s.color_pool_per_fine >= s.colors_max, "color_pool_per_fine smaller than colors_max");
  require_pool(p.colors.size() >= static_cast<std::size_t>(s.color_pool_per_fine),
               "color pool smaller than required distinct values");
  require_pool(s.brands_per_fine >= 1 && p.brands.size() >= static_cast<std::size_t>(s.brands_per_fine),
               "brand pool smaller than required distinct values");
  require_pool(!p.option_templates.empty(), "option template pool is empty");
  require_pool(s.second_group_min >= 1 && s.second_group_min <= s.second_group_max, "option count range invalid");
  for (const auto& t : p.option_templates) {
    require_pool(t.values.size() >= static_cast<std::size_t>(s.second_group_min),
                 "option template '" + t.name + "' smaller than second_group_min");
    check_distinct(t.values, "option template '" + t.name + "'", false);
  }
  require_pool(!p.shop_suffixes.empty() && !p.reviews.empty(), "shop suffix and review pools must be non-empty");
  require_pool(s.min_base_price >= 0 && s.max_base_price >= s.min_base_price, "price bounds invalid");
  check_distinct(p.attributes, "attribute", true);
  check_distinct(p.colors, "color", false);
  for (const auto& a : p.attributes) {
    auto leaks = [&](const std::vector<std::string>& pool, const std::string& what) {
      for (const auto& item : pool) {
        if (text::contains_phrase(item, a)) {
          throw ValidationError(what + " '" + item + "' contains attribute '" + a + "'", 0, "spec");
        }
      }
    };
    leaks(p.reviews, "review");
    leaks(p.brands, "brand");
    leaks(p.fine_categories, "fine category");
    leaks(p.shop_suffixes, "shop suffix");
  }
}

std::string model_prefix(const std::string& brand) {
  std::string out;
  for (char c : brand) {
    if (std::isalpha(static_cast<unsigned char>(c))) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (out.size() == 2) break;
  }
  return out.empty() ? "MX" : out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

struct FineContext {
  CategoryPath path;
  std::vector<std::string> attributes;
  std::vector<std::string> colors;
  std::vector<std::string> brands;
  OptionGroup second;
};

}  // namespace

Catalog generate_catalog(std::uint64_t seed, const GenerationSpec& spec) {
  validate_spec(spec);
  const auto& pools = spec.pools;
  Rng rng(derive_seed(seed, hash64("catalog")));

  auto domains = rng.sample(pools.domains, static_cast<std::size_t>(spec.domains));
  auto firsts = rng.sample(pools.first_categories,
                           static_cast<std::size_t>(spec.domains) * static_cast<std::size_t>(spec.first_per_domain));
  auto fines = rng.sample(pools.fine_categories, firsts.size() * static_cast<std::size_t>(spec.fine_per_first));

  std::vector<Product> products;
  std::set<std::string> used_ids;
  std::set<std::string> used_codes;
  std::size_t fine_index = 0;

  for (std::size_t d = 0; d < domains.size(); ++d) {
    for (int f = 0; f < spec.first_per_domain; ++f) {
      const auto& first = firsts[d * static_cast<std::size_t>(spec.first_per_domain) + static_cast<std::size_t>(f)];
      for (int c = 0; c < spec.fine_per_first; ++c, ++fine_index) {
        FineContext ctx;
        ctx.path = {domains[d], first, fines[fine_index]};
        ctx.attributes = rng.sample(pools.attributes, static_cast<std::size_t>(spec.attribute_pool_per_fine));
        ctx.colors = rng.sample(pools.colors, static_cast<std::size_t>(spec.color_pool_per_fine));
        ctx.brands = rng.sample(pools.brands, static_cast<std::size_t>(spec.brands_per_fine));
        ctx.second = pools.option_templates[fine_index % pools.option_templates.size()];

        std::set<std::string> signatures;
        for (int n = 0; n < spec.products_per_fine; ++n) {
          bool placed = false;
          for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
            Product p;
            p.category = ctx.path;
            const auto& brand = rng.pick(ctx.brands);

            const auto n_attr = static_cast<std::size_t>(rng.between(spec.attributes_min, spec.attributes_max));
            p.attributes = rng.sample(ctx.attributes, n_attr);

            const auto n_colors = static_cast<std::size_t>(rng.between(spec.colors_min, spec.colors_max));
            OptionGroup color{"Color", rng.sample(ctx.colors, n_colors)};
            const auto second_max = std::min<std::size_t>(static_cast<std::size_t>(spec.second_group_max),
                                                          ctx.second.values.size());
            const auto n_second = static_cast<std::size_t>(
                rng.between(spec.second_group_min, static_cast<std::int64_t>(second_max)));
            // keep the template's natural order (sizes ascending etc.)
            auto picked = rng.sample(ctx.second.values, n_second);
            OptionGroup second{ctx.second.name, {}};
            for (const auto& v : ctx.second.values) {
              if (std::find(picked.begin(), picked.end(), v) != picked.end()) second.values.push_back(v);
            }

            const double base = static_cast<double>(
                rng.between(static_cast<std::int64_t>(spec.min_base_price), static_cast<std::int64_t>(spec.max_base_price)));
            p.price.low = base;
            if (color.values.size() > 1 && rng.chance(spec.range_price_probability)) {
              std::map<std::string, double> deltas;
              double max_delta = 0;
              for (const auto& v : color.values) {
                const double dlt = 10.0 * static_cast<double>(rng.between(0, 15));
                deltas[v] = dlt;
              }
              deltas[color.values[rng.below(color.values.size())]] = 0.0;
              for (const auto& [_, dlt] : deltas) max_delta = std::max(max_delta, dlt);
              if (max_delta > 0) {
                p.price.high = base + max_delta;
                p.price_deltas["Color"] = std::move(deltas);
              }
            }

            auto sorted_attrs = p.attributes;
            std::sort(sorted_attrs.begin(), sorted_attrs.end());
            auto sorted_colors = color.values;
            std::sort(sorted_colors.begin(), sorted_colors.end());
            std::string signature = join(sorted_attrs, ",") + "|" + join(sorted_colors, ",") + "|" +
                                    join(second.values, ",") + "|" + p.price.display();
            if (!signatures.insert(signature).second) continue;

            std::string code;
            do {
              code = model_prefix(brand) + "-" + std::to_string(rng.between(1000, 9999));
            } while (!used_codes.insert(code).second);
            std::string id;
            do {
              id = std::to_string(100000000000ULL + rng.below(900000000000ULL));
            } while (!used_ids.insert(id).second);

            p.product_id = id;
            p.option_groups = {std::move(color), std::move(second)};
            const auto title_attrs = std::min<std::size_t>(2, p.attributes.size());
            std::vector<std::string> title_parts = {brand, code};
            for (std::size_t i = 0; i < title_attrs; ++i) title_parts.push_back(p.attributes[i]);
            title_parts.push_back(ctx.path.fine_category);
            p.title = join(title_parts, " ");
            p.shop_name = brand + " " + rng.pick(pools.shop_suffixes);
            p.description = brand + " " + ctx.path.fine_category + ", model " + code + ". Highlights: " +
                            join(p.attributes, ", ") + ".";
            p.features = join(p.attributes, "; ");
            p.reviews = join(rng.sample(pools.reviews, 2), " ");
            products.push_back(std::move(p));
            placed = true;
          }
          if (!placed) {
            throw ValidationError("cannot generate " + std::to_string(spec.products_per_fine) +
                                      " distinguishable products in '" + ctx.path.fine_category +
                                      "'; enlarge the vocabulary pools",
                                  0, "spec");
          }
        }
      }
    }
  }
  return Catalog(std::move(products), spec.catalog_name);
}

json GenerationSpec::to_json() const {
  json j;
  j["catalog_name"] = catalog_name;
  j["domains"] = domains;
  j["first_per_domain"] = first_per_domain;
  j["fine_per_first"] = fine_per_first;
  j["products_per_fine"] = products_per_fine;
  j["attribute_pool_per_fine"] = attribute_pool_per_fine;
  j["color_pool_per_fine"] = color_pool_per_fine;
  j["brands_per_fine"] = brands_per_fine;
  j["attributes_min"] = attributes_min;
  j["attributes_max"] = attributes_max;
  j["colors_min"] = colors_min;
  j["colors_max"] = colors_max;
  j["second_group_min"] = second_group_min;
  j["second_group_max"] = second_group_max;
  j["min_base_price"] = min_base_price;
  j["max_base_price"] = max_base_price;
  j["range_price_probability"] = range_price_probability;
  const auto builtin = VocabularyPools::builtin();
  auto pool_json = [](const VocabularyPools& p) {
    json pj;
    pj["domains"] = p.domains;
    pj["first_categories"] = p.first_categories;
    pj["fine_categories"] = p.fine_categories;
    pj["brands"] = p.brands;
    pj["attributes"] = p.attributes;
    pj["colors"] = p.colors;
    json templates = json::array();
    for (const auto& t : p.option_templates) templates.push_back({{"name", t.name}, {"values", t.values}});
    pj["option_templates"] = std::move(templates);
    pj["shop_suffixes"] = p.shop_suffixes;
    pj["reviews"] = p.reviews;
    return pj;
  };
  const bool is_builtin = pools.domains == builtin.domains && pools.first_categories == builtin.first_categories &&
                          pools.fine_categories == builtin.fine_categories && pools.brands == builtin.brands &&
                          pools.attributes == builtin.attributes && pools.colors == builtin.colors &&
                          pools.option_templates == builtin.option_templates &&
                          pools.shop_suffixes == builtin.shop_suffixes && pools.reviews == builtin.reviews;
  if (is_builtin) {
    j["pools"] = "builtin";
  } else {
    j["pools"] = pool_json(pools);
  }
  return j;
}

GenerationSpec GenerationSpec::from_json(const json& j) {
  GenerationSpec s;
  if (!j.is_object()) throw ValidationError("generation spec must be a JSON object", 0, "spec");
  auto get_int = [&](const char* key, int& dst) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_number_integer()) throw ValidationError("must be an integer", 0, key);
      dst = it->get<int>();
    }
  };
  auto get_double = [&](const char* key, double& dst) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_number()) throw ValidationError("must be a number", 0, key);
      dst = it->get<double>();
    }
  };
  if (auto it = j.find("preset"); it != j.end()) s = preset(it->get<std::string>());
  if (auto it = j.find("catalog_name"); it != j.end()) s.catalog_name = it->get<std::string>();
  get_int("domains", s.domains);
  get_int("first_per_domain", s.first_per_domain);
  get_int("fine_per_first", s.fine_per_first);
  get_int("products_per_fine", s.products_per_fine);
  get_int("attribute_pool_per_fine", s.attribute_pool_per_fine);
  get_int("color_pool_per_fine", s.color_pool_per_fine);
  get_int("brands_per_fine", s.brands_per_fine);
  get_int("attributes_min", s.attributes_min);
  get_int("attributes_max", s.attributes_max);
  get_int("colors_min", s.colors_min);
  get_int("colors_max", s.colors_max);
  get_int("second_group_min", s.second_group_min);
  get_int("second_group_max", s.second_group_max);
  get_double("min_base_price", s.min_base_price);
  get_double("max_base_price", s.max_base_price);
  get_double("range_price_probability", s.range_price_probability);
  if (auto it = j.find("pools"); it != j.end() && it->is_object()) {
    auto list = [&](const char* key, std::vector<std::string>& dst) {
      if (auto f = it->find(key); f != it->end()) dst = string_array(*f, key);
    };
    list("domains", s.pools.domains);
    list("first_categories", s.pools.first_categories);
    list("fine_categories", s.pools.fine_categories);
    list("brands", s.pools.brands);
    list("attributes", s.pools.attributes);
    list("colors", s.pools.colors);
    list("shop_suffixes", s.pools.shop_suffixes);
    list("reviews", s.pools.reviews);
    if (auto f = it->find("option_templates"); f != it->end()) {
      s.pools.option_templates.clear();
      for (const auto& t : *f) {
        s.pools.option_templates.push_back({t.at("name").get<std::string>(), string_array(t.at("values"), "values")});
      }
    }
  }
  return s;
}

GenerationSpec GenerationSpec::preset(std::string_view name) {
  GenerationSpec s;
  s.catalog_name = std::string(name);
  if (name == "tiny") {
    s.products_per_fine = 20;
  } else if (name == "fine120") {
    s.products_per_fine = 120;
  } else if (name == "desk") {
    s.domains = 2;
    s.first_per_domain = 2;
    s.fine_per_first = 3;
    s.products_per_fine = 60;
  } else if (name == "bench") {
    s.domains = 1;
    s.first_per_domain = 2;
    s.fine_per_first = 3;
    s.products_per_fine = 120;
  } else {
    throw ValidationError("unknown preset '" + std::string(name) + "'", 0, "preset");
  }
  return s;
}

json CatalogManifest::to_json() const {
  json j;
  j["name"] = name;
  j["seed"] = seed;
  j["product_count"] = product_count;
  json per = json::object();
  for (const auto& [d, n] : per_domain_counts) per[d] = n;
  j["per_domain_counts"] = std::move(per);
  j["generation"] = generation;
  return j;
}

CatalogManifest CatalogManifest::from_json(const json& j) {
  CatalogManifest m;
  m.name = j.value("name", "");
  m.seed = j.value("seed", std::uint64_t{0});
  m.product_count = j.value("product_count", std::size_t{0});
  if (auto it = j.find("per_domain_counts"); it != j.end()) {
    for (const auto& [d, n] : it->items()) m.per_domain_counts[d] = n.get<std::size_t>();
  }
  if (auto it = j.find("generation"); it != j.end()) m.generation = *it;
  return m;
}

CatalogManifest make_manifest(const Catalog& catalog, std::uint64_t seed, const json& generation) {
  CatalogManifest m;
  m.name = catalog.name();
  m.seed = seed;
  m.product_count = catalog.size();
  for (const auto& p : catalog.products()) ++m.per_domain_counts[p.category.domain];
  m.generation = generation;
  return m;
}

void check_manifest(const CatalogManifest& manifest, const Catalog& catalog) {
  if (manifest.product_count != catalog.size()) {
    throw ValidationError("manifest product_count " + std::to_string(manifest.product_count) +
                              " != catalog size " + std::to_string(catalog.size()),
                          0, "product_count");
  }
  std::map<std::string, std::size_t> actual;
  for (const auto& p : catalog.products()) ++actual[p.category.domain];
  if (actual != manifest.per_domain_counts) {
    throw ValidationError("manifest per-domain counts disagree with catalog", 0, "per_domain_counts");
  }
}

std::filesystem::path manifest_path_for(const std::filesystem::path& catalog_path) {
  auto p = catalog_path;
  p.replace_extension(".manifest.json");
  return p;
}

}  // namespace shopsim
