#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace nftmarket {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that fails validation (bad file, bad config, bad row in strict mode).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Numerical preconditions not met (degenerate samples, rank deficiency, ...).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

using Timestamp = std::int64_t;  // UTC seconds
using Day = std::int64_t;        // days since 1970-01-01 (UTC)

inline constexpr std::int64_t kSecondsPerDay = 86400;

inline Day utc_day(Timestamp ts) {
  // floor division, so negative timestamps still land on the right day
  return ts >= 0 ? ts / kSecondsPerDay : -((-ts + kSecondsPerDay - 1) / kSecondsPerDay);
}

inline int utc_year(Timestamp ts) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{utc_day(ts)}}};
  return static_cast<int>(ymd.year());
}

inline std::string format_date(Day day) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{day}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

/// Parses YYYY-MM-DD into a day number; nullopt on malformed or impossible dates.
inline std::optional<Day> parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0, d = 0;
  auto ok = [](auto r) { return r.ec == std::errc{}; };
  if (!ok(std::from_chars(s.data(), s.data() + 4, y)) ||
      !ok(std::from_chars(s.data() + 5, s.data() + 7, m)) ||
      !ok(std::from_chars(s.data() + 8, s.data() + 10, d)))
    return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) return std::nullopt;
  return sys_days{ymd}.time_since_epoch().count();
}

// ---------------------------------------------------------------------------
// Categorical domain values

enum class Category { Art, Collectible, Games, Metaverse, Utility, Other };

inline constexpr std::array<Category, 6> kAllCategories = {
    Category::Art,     Category::Collectible, Category::Games,
    Category::Metaverse, Category::Utility,   Category::Other};

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::Art: return "Art";
    case Category::Collectible: return "Collectible";
    case Category::Games: return "Games";
    case Category::Metaverse: return "Metaverse";
    case Category::Utility: return "Utility";
    case Category::Other: return "Other";
  }
  return "Other";
}

inline std::optional<Category> parse_category(std::string_view s) {
  for (auto c : kAllCategories)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

/// Data source of a raw trade. Declaration order is deduplication priority
/// (earlier wins) for the mirrored sources.
enum class Source { NonFungible, CryptoKittiesSales, GodsUnchained, Decentraland, OpenSea, Atomic, Other };

inline constexpr std::array<Source, 7> kAllSources = {
    Source::NonFungible, Source::CryptoKittiesSales, Source::GodsUnchained, Source::Decentraland,
    Source::OpenSea,     Source::Atomic,             Source::Other};

inline std::string_view to_string(Source s) {
  switch (s) {
    case Source::NonFungible: return "NonFungible";
    case Source::CryptoKittiesSales: return "CryptoKittiesSales";
    case Source::GodsUnchained: return "GodsUnchained";
    case Source::Decentraland: return "Decentraland";
    case Source::OpenSea: return "OpenSea";
    case Source::Atomic: return "Atomic";
    case Source::Other: return "Other";
  }
  return "Other";
}

inline std::optional<Source> parse_source(std::string_view s) {
  for (auto v : kAllSources)
    if (to_string(v) == s) return v;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Text helpers

/// Shortest decimal representation that round-trips; used for every numeric
/// field written to CSV so outputs are byte-stable.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  std::int64_t v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Splits one CSV line (RFC 4180 quoting, no embedded newlines).
/// Returns nullopt on an unterminated quote.
inline std::optional<std::vector<std::string>> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) return std::nullopt;
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// ---------------------------------------------------------------------------
// Key-value configuration files
//
//   # comment
//   key = value
//
// Repeated keys accumulate; get() returns the last value, get_all() every one.

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, std::string_view origin = "<config>") {
    KeyValueConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto t = trim(line);
      if (t.empty() || t.front() == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string_view::npos)
        throw ValidationError(std::string(origin) + ":" + std::to_string(lineno) +
                              ": expected 'key = value'");
      auto key = trim(t.substr(0, eq));
      if (key.empty())
        throw ValidationError(std::string(origin) + ":" + std::to_string(lineno) + ": empty key");
      cfg.entries_.emplace_back(std::string(key), std::string(trim(t.substr(eq + 1))));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    return parse(in, path);
  }

  void set(std::string key, std::string value) {
    entries_.emplace_back(std::move(key), std::move(value));
  }

  bool contains(std::string_view key) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const auto& e) { return e.first == key; });
  }

  std::optional<std::string> get(std::string_view key) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
      if (it->first == key) return it->second;
    return std::nullopt;
  }

  std::string get_or(std::string_view key, std::string fallback) const {
    auto v = get(key);
    return v ? *v : std::move(fallback);
  }

  double get_double(std::string_view key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    auto d = parse_double(*v);
    if (!d) throw ValidationError("config key '" + std::string(key) + "' is not a number: " + *v);
    return *d;
  }

  std::int64_t get_int(std::string_view key, std::int64_t fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    auto d = parse_int(*v);
    if (!d) throw ValidationError("config key '" + std::string(key) + "' is not an integer: " + *v);
    return *d;
  }

  std::vector<std::string> get_all(std::string_view key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
      if (k == key) out.push_back(v);
    return out;
  }

  /// Every value of `key`, each split on commas, empties removed.
  std::vector<std::string> get_list(std::string_view key) const {
    std::vector<std::string> out;
    for (const auto& v : get_all(key))
      for (auto& item : split(v, ','))
        if (!item.empty()) out.push_back(std::move(item));
    return out;
  }

  /// Entries whose key starts with `prefix`, prefix stripped.
  std::map<std::string, std::string> with_prefix(std::string_view prefix) const {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : entries_)
      if (k.size() > prefix.size() && std::string_view(k).substr(0, prefix.size()) == prefix)
        out[k.substr(prefix.size())] = v;
    return out;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// ---------------------------------------------------------------------------
// Logging: stderr, one line per message, machine-parseable level prefix.

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

inline LogLevel& log_threshold() {
  static LogLevel level = [] {
    if (const char* env = std::getenv("NFTMARKET_LOG")) {
      const std::string_view v = env;
      if (v == "debug") return LogLevel::Debug;
      if (v == "warn") return LogLevel::Warn;
      if (v == "error") return LogLevel::Error;
      if (v == "off") return LogLevel::Off;
    }
    return LogLevel::Info;
  }();
  return level;
}

inline void log(LogLevel level, std::string_view msg) {
  if (level < log_threshold()) return;
  static std::mutex mu;
  static constexpr std::array<std::string_view, 4> tags = {"[DEBUG] ", "[INFO] ", "[WARN] ",
                                                           "[ERROR] "};
  std::lock_guard lock(mu);
  std::cerr << tags[static_cast<int>(level)] << msg << '\n';
}

inline void log_info(std::string_view msg) { log(LogLevel::Info, msg); }
inline void log_warn(std::string_view msg) { log(LogLevel::Warn, msg); }

// ---------------------------------------------------------------------------
// Threading

/// Worker count from NFTMARKET_THREADS, else hardware concurrency.
inline unsigned thread_count() {
  if (const char* env = std::getenv("NFTMARKET_THREADS")) {
    if (auto n = parse_int(env); n && *n > 0) return static_cast<unsigned>(*n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, n) over a static interleaved schedule. Results
/// must be written to per-index slots so output does not depend on scheduling.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace nftmarket
