#pragma once

// Parsing, cleaning, deduplication, currency conversion and categorization of
// raw trade exports.

#include <nlohmann/json.hpp>

#include <regex>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "nftmarket/core.hpp"

namespace nftmarket {

struct RawTrade {
  std::string buyer;
  std::string seller;
  Timestamp ts = 0;
  std::string collection_raw;
  std::string nft_id;
  std::string url;  // empty when absent
  std::string currency;
  double amount = 0.0;
  Source source = Source::Other;

  friend bool operator==(const RawTrade&, const RawTrade&) = default;
};

/// A cleaned purchase event. price_usd is empty when no exchange rate was
/// available for the trade's currency and day; such records still count in
/// count-based analyses.
struct TradeRecord : RawTrade {
  std::string collection;
  Category category = Category::Other;
  std::optional<double> price_usd;

  friend bool operator==(const TradeRecord&, const TradeRecord&) = default;
};

namespace ingest {

inline constexpr std::array<std::string_view, 9> kTradeColumns = {
    "buyer", "seller", "ts", "collection", "nft_id", "url", "currency", "amount", "source"};

enum class TradeFormat { Csv, Jsonl };

inline TradeFormat format_for_path(std::string_view path) {
  auto ends_with = [&](std::string_view suf) {
    return path.size() >= suf.size() && path.substr(path.size() - suf.size()) == suf;
  };
  return ends_with(".jsonl") || ends_with(".json") ? TradeFormat::Jsonl : TradeFormat::Csv;
}

struct ParseOptions {
  bool strict = false;  // abort on the first malformed row
};

struct ParseResult {
  std::vector<RawTrade> trades;
  std::size_t rows = 0;           // data rows seen (blank lines ignored)
  std::size_t dropped_empty = 0;  // a required field was empty
  std::size_t malformed = 0;      // undecodable / invalid values

  std::size_t dropped() const { return dropped_empty + malformed; }
};

namespace detail {

enum class RowStatus { Ok, Empty, Malformed };

struct FieldView {
  std::string buyer, seller, ts, collection, nft_id, url, currency, amount, source;
};

inline RowStatus build_trade(const FieldView& f, RawTrade& out, std::string& why) {
  for (const std::string* s : {&f.buyer, &f.seller, &f.ts, &f.collection, &f.nft_id, &f.currency,
                               &f.amount, &f.source}) {
    if (trim(*s).empty()) {
      why = "empty required field";
      return RowStatus::Empty;
    }
  }
  auto ts = parse_int(f.ts);
  if (!ts || *ts <= 0) {
    why = "invalid timestamp '" + f.ts + "'";
    return RowStatus::Malformed;
  }
  auto amount = parse_double(f.amount);
  if (!amount || !std::isfinite(*amount) || *amount < 0) {
    why = "invalid amount '" + f.amount + "'";
    return RowStatus::Malformed;
  }
  auto source = parse_source(trim(f.source));
  if (!source) {
    why = "unknown source '" + f.source + "'";
    return RowStatus::Malformed;
  }
  out = RawTrade{std::string(trim(f.buyer)),    std::string(trim(f.seller)),
                 *ts,                            std::string(trim(f.collection)),
                 std::string(trim(f.nft_id)),    std::string(trim(f.url)),
                 std::string(trim(f.currency)),  *amount,
                 *source};
  return RowStatus::Ok;
}

inline std::string json_field(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  if (it->is_number()) return format_double(it->get<double>());
  return it->dump();
}

}  // namespace detail

/// Reads line-delimited trades. CSV input must start with the exact header
/// `buyer,seller,ts,collection,nft_id,url,currency,amount,source`; JSONL rows
/// are objects carrying the same keys. Rows with an empty required field (url
/// is optional) are dropped and counted; malformed rows are counted and
/// skipped, or raise ValidationError naming the line in strict mode.
inline ParseResult parse_trades(std::istream& in, TradeFormat format, ParseOptions opts = {}) {
  ParseResult res;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = format == TradeFormat::Jsonl;

  auto reject = [&](detail::RowStatus st, const std::string& why) {
    if (st == detail::RowStatus::Empty) {
      ++res.dropped_empty;
      return;
    }
    if (opts.strict)
      throw ValidationError("malformed trade at line " + std::to_string(lineno) + ": " + why);
    ++res.malformed;
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (!header_seen) {
      auto cols = split_csv_line(line);
      if (!cols || cols->size() != kTradeColumns.size() ||
          !std::equal(cols->begin(), cols->end(), kTradeColumns.begin(),
                      [](const std::string& a, std::string_view b) { return trim(a) == b; }))
        throw ValidationError("trades CSV header must be exactly "
                              "buyer,seller,ts,collection,nft_id,url,currency,amount,source");
      header_seen = true;
      continue;
    }
    ++res.rows;
    detail::FieldView f;
    if (format == TradeFormat::Csv) {
      auto cols = split_csv_line(line);
      if (!cols || cols->size() != kTradeColumns.size()) {
        reject(detail::RowStatus::Malformed, "expected 9 fields");
        continue;
      }
      auto& c = *cols;
      f = {c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7], c[8]};
    } else {
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error&) {
        reject(detail::RowStatus::Malformed, "invalid JSON");
        continue;
      }
      if (!obj.is_object()) {
        reject(detail::RowStatus::Malformed, "row is not a JSON object");
        continue;
      }
      using detail::json_field;
      f = {json_field(obj, "buyer"),    json_field(obj, "seller"),   json_field(obj, "ts"),
           json_field(obj, "collection"), json_field(obj, "nft_id"), json_field(obj, "url"),
           json_field(obj, "currency"), json_field(obj, "amount"),   json_field(obj, "source")};
    }
    RawTrade t;
    std::string why;
    auto st = detail::build_trade(f, t, why);
    if (st == detail::RowStatus::Ok)
      res.trades.push_back(std::move(t));
    else
      reject(st, why);
  }
  return res;
}

inline void write_trades_csv(std::ostream& out, const std::vector<RawTrade>& trades) {
  out << "buyer,seller,ts,collection,nft_id,url,currency,amount,source\n";
  for (const auto& t : trades) {
    out << csv_escape(t.buyer) << ',' << csv_escape(t.seller) << ',' << t.ts << ','
        << csv_escape(t.collection_raw) << ',' << csv_escape(t.nft_id) << ',' << csv_escape(t.url)
        << ',' << csv_escape(t.currency) << ',' << format_double(t.amount) << ','
        << to_string(t.source) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Collection names

struct NormalizeRules {
  std::vector<std::string> merge_prefixes{"Aavegotchi"};
  std::vector<std::string> generic_names{"Stuff", "Misc", "Miscellaneous", "Untitled", "Unnamed"};
  std::vector<std::string> unusual_patterns{R"((.)\1{3,})"};
};

inline constexpr std::string_view kMiscellanea = "Miscellanea";

namespace detail {

inline std::string lower_letters(std::string_view s) {
  std::string out;
  for (unsigned char c : s)
    if (std::isalpha(c) && c < 128) out.push_back(static_cast<char>(std::tolower(c)));
  return out;
}

inline std::string capitalize(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace detail

/// Compiled form of NormalizeRules.
class CollectionNormalizer {
 public:
  explicit CollectionNormalizer(NormalizeRules rules = {}) : rules_(std::move(rules)) {
    for (const auto& p : rules_.unusual_patterns) {
      try {
        patterns_.emplace_back(p, std::regex::ECMAScript);
      } catch (const std::regex_error& e) {
        throw ValidationError("invalid unusual-pattern regex '" + p + "': " + e.what());
      }
    }
    for (const auto& p : rules_.merge_prefixes) {
      auto l = detail::lower_letters(p);
      if (!l.empty()) prefixes_.push_back(std::move(l));
    }
    for (const auto& g : rules_.generic_names) generic_.insert(detail::lower_letters(g));
  }

  /// Strips digits and non-letters, removes unusual patterns, capitalizes,
  /// folds merge prefixes; empty and generic names become "Miscellanea".
  std::string operator()(std::string_view raw) const {
    std::string s = detail::lower_letters(raw);
    for (const auto& re : patterns_) s = std::regex_replace(s, re, "");
    if (s.empty() || generic_.count(s)) return std::string(kMiscellanea);
    for (const auto& p : prefixes_)
      if (s.compare(0, p.size(), p) == 0) return detail::capitalize(p);
    return detail::capitalize(std::move(s));
  }

  const NormalizeRules& rules() const { return rules_; }

 private:
  NormalizeRules rules_;
  std::vector<std::regex> patterns_;
  std::vector<std::string> prefixes_;
  std::unordered_set<std::string> generic_;
};

inline std::string normalize_collection(std::string_view raw, const NormalizeRules& rules = {}) {
  return CollectionNormalizer(rules)(raw);
}

// ---------------------------------------------------------------------------
// Categories

class CategoryMap {
 public:
  CategoryMap() = default;
  CategoryMap(std::initializer_list<std::pair<const std::string, Category>> init) : map_(init) {}

  void set(std::string collection, Category c) { map_[std::move(collection)] = c; }

  Category operator()(const std::string& collection) const {
    auto it = map_.find(collection);
    return it == map_.end() ? Category::Other : it->second;
  }

  std::size_t size() const { return map_.size(); }
  const std::map<std::string, Category>& entries() const { return map_; }

 private:
  std::map<std::string, Category> map_;
};

inline Category categorize(const std::string& collection, const CategoryMap& map) {
  return map(collection);
}

/// Category map, merge prefixes, generic names and unusual patterns share one
/// key-value file:
///
///   category.Cryptokitties = Art
///   merge_prefix = Aavegotchi, Sorare
///   generic_name = Stuff
///   unusual_pattern = (.)\1{3,}
///
/// List keys that are absent fall back to the built-in defaults.
struct IngestConfig {
  NormalizeRules rules;
  CategoryMap categories;
};

inline IngestConfig load_ingest_config(const KeyValueConfig& cfg) {
  IngestConfig out;
  if (cfg.contains("merge_prefix")) out.rules.merge_prefixes = cfg.get_list("merge_prefix");
  if (cfg.contains("generic_name")) out.rules.generic_names = cfg.get_list("generic_name");
  if (cfg.contains("unusual_pattern")) out.rules.unusual_patterns = cfg.get_all("unusual_pattern");
  for (const auto& [name, value] : cfg.with_prefix("category.")) {
    auto c = parse_category(value);
    if (!c) throw ValidationError("unknown category '" + value + "' for collection " + name);
    out.categories.set(name, *c);
  }
  return out;
}

inline void write_ingest_config(std::ostream& out, const IngestConfig& cfg) {
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
    return s;
  };
  out << "merge_prefix = " << join(cfg.rules.merge_prefixes) << '\n';
  out << "generic_name = " << join(cfg.rules.generic_names) << '\n';
  for (const auto& p : cfg.rules.unusual_patterns) out << "unusual_pattern = " << p << '\n';
  for (const auto& [name, c] : cfg.categories.entries())
    out << "category." << name << " = " << to_string(c) << '\n';
}

// ---------------------------------------------------------------------------
// Deduplication

inline int source_priority(Source s) { return static_cast<int>(s); }

/// Collapses records sharing (nft_id, ts, buyer, seller) to the copy from the
/// highest-priority source; among equal priorities the first occurrence wins.
/// Survivors keep their relative input order.
inline std::vector<RawTrade> deduplicate(const std::vector<RawTrade>& records) {
  struct KeyHash {
    std::size_t operator()(const std::tuple<std::string_view, Timestamp, std::string_view,
                                            std::string_view>& k) const {
      std::size_t h = std::hash<std::string_view>{}(std::get<0>(k));
      auto mix = [&](std::size_t v) { h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2); };
      mix(std::hash<Timestamp>{}(std::get<1>(k)));
      mix(std::hash<std::string_view>{}(std::get<2>(k)));
      mix(std::hash<std::string_view>{}(std::get<3>(k)));
      return h;
    }
  };
  std::unordered_map<std::tuple<std::string_view, Timestamp, std::string_view, std::string_view>,
                     std::size_t, KeyHash>
      winner;
  winner.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    auto [it, inserted] = winner.try_emplace({r.nft_id, r.ts, r.buyer, r.seller}, i);
    if (!inserted && source_priority(r.source) < source_priority(records[it->second].source))
      it->second = i;
  }
  std::vector<char> keep(records.size(), 0);
  for (const auto& [k, idx] : winner) keep[idx] = 1;
  std::vector<RawTrade> out;
  out.reserve(winner.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    if (keep[i]) out.push_back(records[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Exchange rates

struct ExchangeRate {
  Day date = 0;
  std::string currency;
  double usd_rate = 0.0;
};

class ExchangeRateTable {
 public:
  void add(const ExchangeRate& r) {
    if (!(r.usd_rate > 0) || !std::isfinite(r.usd_rate))
      throw ValidationError("exchange rate must be positive: " + r.currency + " on " +
                            format_date(r.date));
    rates_[{r.currency, r.date}] = r.usd_rate;
  }

  std::optional<double> rate(const std::string& currency, Day day) const {
    auto it = rates_.find({currency, day});
    if (it == rates_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const { return rates_.size(); }

  /// CSV with header `date,currency,usd_rate`, date as YYYY-MM-DD.
  static ExchangeRateTable parse_csv(std::istream& in) {
    ExchangeRateTable t;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      auto cols = split_csv_line(line);
      if (!header) {
        if (!cols || cols->size() != 3 || trim((*cols)[0]) != "date" ||
            trim((*cols)[1]) != "currency" || trim((*cols)[2]) != "usd_rate")
          throw ValidationError("rates CSV header must be exactly date,currency,usd_rate");
        header = true;
        continue;
      }
      auto fail = [&] {
        return ValidationError("malformed rate at line " + std::to_string(lineno));
      };
      if (!cols || cols->size() != 3) throw fail();
      auto day = parse_date(trim((*cols)[0]));
      auto rate = parse_double((*cols)[2]);
      if (!day || !rate) throw fail();
      t.add({*day, std::string(trim((*cols)[1])), *rate});
    }
    return t;
  }

  void write_csv(std::ostream& out) const {
    out << "date,currency,usd_rate\n";
    std::vector<std::pair<std::pair<Day, std::string>, double>> rows;
    for (const auto& [k, v] : rates_) rows.push_back({{k.second, k.first}, v});
    std::sort(rows.begin(), rows.end());
    for (const auto& [k, v] : rows)
      out << format_date(k.first) << ',' << k.second << ',' << format_double(v) << '\n';
  }

 private:
  std::map<std::pair<std::string, Day>, double> rates_;
};

/// amount x rate of the trade's UTC calendar day; nullopt when no rate exists.
inline std::optional<double> to_usd(const RawTrade& t, const ExchangeRateTable& rates) {
  auto r = rates.rate(t.currency, utc_day(t.ts));
  if (!r) return std::nullopt;
  return t.amount * *r;
}

// ---------------------------------------------------------------------------
// Full cleaning pass

struct IngestSummary {
  std::size_t rows = 0;
  std::size_t dropped_empty = 0;
  std::size_t malformed = 0;
  std::size_t duplicates = 0;
  std::size_t missing_rate = 0;
  std::size_t kept = 0;
};

/// Canonical order of the trade store: time, then NFT, buyer, seller, source.
inline bool canonical_less(const TradeRecord& a, const TradeRecord& b) {
  return std::tie(a.ts, a.nft_id, a.buyer, a.seller, a.source) <
         std::tie(b.ts, b.nft_id, b.buyer, b.seller, b.source);
}

inline std::vector<TradeRecord> clean(const std::vector<RawTrade>& raw, const ExchangeRateTable& rates,
                                      const IngestConfig& cfg, IngestSummary* summary = nullptr) {
  const auto unique = deduplicate(raw);
  const CollectionNormalizer normalize(cfg.rules);
  std::unordered_map<std::string, std::string> name_cache;
  std::vector<TradeRecord> out;
  out.reserve(unique.size());
  std::size_t missing = 0;
  for (const auto& t : unique) {
    TradeRecord rec;
    static_cast<RawTrade&>(rec) = t;
    auto it = name_cache.find(t.collection_raw);
    if (it == name_cache.end()) it = name_cache.emplace(t.collection_raw, normalize(t.collection_raw)).first;
    rec.collection = it->second;
    rec.category = categorize(rec.collection, cfg.categories);
    rec.price_usd = to_usd(t, rates);
    if (!rec.price_usd) ++missing;
    out.push_back(std::move(rec));
  }
  std::sort(out.begin(), out.end(), canonical_less);
  if (summary) {
    summary->duplicates += raw.size() - unique.size();
    summary->missing_rate += missing;
    summary->kept = out.size();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Canonical trade store

inline constexpr std::string_view kStoreHeader =
    "buyer,seller,ts,collection_raw,nft_id,url,currency,amount,source,collection,category,price_usd";

inline void write_store(std::ostream& out, const std::vector<TradeRecord>& trades) {
  out << kStoreHeader << '\n';
  for (const auto& t : trades) {
    out << csv_escape(t.buyer) << ',' << csv_escape(t.seller) << ',' << t.ts << ','
        << csv_escape(t.collection_raw) << ',' << csv_escape(t.nft_id) << ',' << csv_escape(t.url)
        << ',' << csv_escape(t.currency) << ',' << format_double(t.amount) << ','
        << to_string(t.source) << ',' << csv_escape(t.collection) << ',' << to_string(t.category)
        << ',' << (t.price_usd ? format_double(*t.price_usd) : std::string()) << '\n';
  }
}

inline std::vector<TradeRecord> read_store(std::istream& in) {
  std::vector<TradeRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (trim(line) != kStoreHeader) throw ValidationError("not a canonical trade store (bad header)");
      continue;
    }
    if (trim(line).empty()) continue;
    auto cols = split_csv_line(line);
    auto fail = [&] { return ValidationError("corrupt trade store at line " + std::to_string(lineno)); };
    if (!cols || cols->size() != 12) throw fail();
    auto& c = *cols;
    TradeRecord t;
    auto ts = parse_int(c[2]);
    auto amount = parse_double(c[7]);
    auto source = parse_source(c[8]);
    auto category = parse_category(c[10]);
    if (!ts || !amount || !source || !category) throw fail();
    t.buyer = c[0];
    t.seller = c[1];
    t.ts = *ts;
    t.collection_raw = c[3];
    t.nft_id = c[4];
    t.url = c[5];
    t.currency = c[6];
    t.amount = *amount;
    t.source = *source;
    t.collection = c[9];
    t.category = *category;
    if (!c[11].empty()) {
      auto p = parse_double(c[11]);
      if (!p) throw fail();
      t.price_usd = *p;
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace ingest
}  // namespace nftmarket
