#pragma once

// Descriptive market statistics: rolling activity series, price percentiles,
// sale timelines and resale dynamics.

#include <set>
#include <unordered_map>

#include "nftmarket/ingest.hpp"
#include "nftmarket/power_law.hpp"

namespace nftmarket::stats {

inline constexpr std::string_view kTotalGroup = "Total";

// ---------------------------------------------------------------------------
// Rolling series

struct GroupSeries {
  std::vector<double> volume_usd;      // trailing-window mean of daily USD volume
  std::vector<double> n_transactions;  // trailing-window mean of daily trade count
  std::vector<std::size_t> n_traders;      // distinct buyers+sellers in the window
  std::vector<std::size_t> n_collections;  // distinct collections in the window
};

struct TimeSeriesReport {
  int window_days = 30;
  Day first_day = 0;
  std::size_t n_days = 0;
  std::map<std::string, GroupSeries> groups;  // "Total" plus one per category seen

  Day day(std::size_t i) const { return first_day + static_cast<Day>(i); }
};

/// Trailing rolling means over [d - window + 1, d]; the divisor is always the
/// window length, so early days average in zero-activity days.
inline TimeSeriesReport rolling_series(const std::vector<TradeRecord>& trades, int window_days = 30) {
  if (window_days < 1) throw ValidationError("window_days must be >= 1");
  TimeSeriesReport rep;
  rep.window_days = window_days;
  if (trades.empty()) return rep;

  Day lo = utc_day(trades.front().ts), hi = lo;
  for (const auto& t : trades) {
    lo = std::min(lo, utc_day(t.ts));
    hi = std::max(hi, utc_day(t.ts));
  }
  rep.first_day = lo;
  rep.n_days = static_cast<std::size_t>(hi - lo + 1);

  // per group, per day: trade indices
  std::map<std::string, std::vector<std::vector<std::size_t>>> by_day;
  auto bucket = [&](const std::string& g) -> auto& {
    auto& v = by_day[g];
    if (v.empty()) v.resize(rep.n_days);
    return v;
  };
  for (std::size_t i = 0; i < trades.size(); ++i) {
    const auto d = static_cast<std::size_t>(utc_day(trades[i].ts) - lo);
    bucket(std::string(kTotalGroup))[d].push_back(i);
    bucket(std::string(to_string(trades[i].category)))[d].push_back(i);
  }

  const double w = window_days;
  for (auto& [group, days] : by_day) {
    GroupSeries s;
    s.volume_usd.resize(rep.n_days);
    s.n_transactions.resize(rep.n_days);
    s.n_traders.resize(rep.n_days);
    s.n_collections.resize(rep.n_days);
    std::vector<double> daily_vol(rep.n_days, 0.0), daily_n(rep.n_days, 0.0);
    for (std::size_t d = 0; d < rep.n_days; ++d) {
      for (auto i : days[d]) {
        daily_n[d] += 1;
        if (trades[i].price_usd) daily_vol[d] += *trades[i].price_usd;
      }
    }
    std::unordered_map<std::string_view, std::size_t> traders, collections;
    auto add = [](auto& m, std::string_view k) { ++m[k]; };
    auto remove = [](auto& m, std::string_view k) {
      auto it = m.find(k);
      if (--it->second == 0) m.erase(it);
    };
    double vol_sum = 0, n_sum = 0;
    for (std::size_t d = 0; d < rep.n_days; ++d) {
      vol_sum += daily_vol[d];
      n_sum += daily_n[d];
      for (auto i : days[d]) {
        add(traders, trades[i].buyer);
        add(traders, trades[i].seller);
        add(collections, trades[i].collection);
      }
      if (d >= static_cast<std::size_t>(window_days)) {
        const auto out = d - window_days;
        vol_sum -= daily_vol[out];
        n_sum -= daily_n[out];
        for (auto i : days[out]) {
          remove(traders, trades[i].buyer);
          remove(traders, trades[i].seller);
          remove(collections, trades[i].collection);
        }
      }
      s.volume_usd[d] = vol_sum / w;
      s.n_transactions[d] = n_sum / w;
      s.n_traders[d] = traders.size();
      s.n_collections[d] = collections.size();
    }
    rep.groups.emplace(group, std::move(s));
  }
  return rep;
}

/// Share of the total rolling volume held by `group` on day index i; nullopt on
/// zero-volume days.
inline std::optional<double> volume_share(const TimeSeriesReport& rep, const std::string& group,
                                          std::size_t i) {
  const auto& total = rep.groups.at(std::string(kTotalGroup)).volume_usd[i];
  if (!(total > 0)) return std::nullopt;
  auto it = rep.groups.find(group);
  if (it == rep.groups.end()) return 0.0;
  return it->second.volume_usd[i] / total;
}

/// Plot-ready CSV. `shown` is 0 on days whose total rolling volume is below
/// `min_volume_shown`; the rows are still emitted.
inline void write_series_csv(std::ostream& out, const TimeSeriesReport& rep,
                             double min_volume_shown = 1000.0) {
  out << "date,group,volume_usd,n_transactions,n_traders,n_collections,volume_share,shown\n";
  if (rep.groups.empty()) return;
  const auto& total = rep.groups.at(std::string(kTotalGroup));
  for (std::size_t i = 0; i < rep.n_days; ++i) {
    const bool shown = total.volume_usd[i] >= min_volume_shown;
    for (const auto& [g, s] : rep.groups) {
      auto share = volume_share(rep, g, i);
      out << format_date(rep.day(i)) << ',' << g << ',' << format_double(s.volume_usd[i]) << ','
          << format_double(s.n_transactions[i]) << ',' << s.n_traders[i] << ','
          << s.n_collections[i] << ',' << (share ? format_double(*share) : std::string()) << ','
          << (shown ? 1 : 0) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Percentiles

/// Lower-value (type 1) empirical quantile of sorted data, q in [0, 1].
inline double quantile_lower(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DegenerateError("quantile of empty sample");
  const auto n = static_cast<double>(sorted.size());
  auto idx = static_cast<std::ptrdiff_t>(std::ceil(q * n)) - 1;
  idx = std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(sorted.size()) - 1);
  return sorted[static_cast<std::size_t>(idx)];
}

struct PercentileRow {
  std::string group;
  std::size_t n_nfts = 0;
  std::map<int, double> percentiles;  // empty when the group has no priced NFT
};

inline constexpr std::array<int, 4> kPricePercentiles = {50, 75, 99, 100};

/// Percentiles of per-NFT mean USD sale price, for every category seen plus
/// "Total". Sales without a USD price are ignored.
inline std::vector<PercentileRow> price_percentiles(const std::vector<TradeRecord>& trades) {
  struct Acc {
    double sum = 0;
    std::size_t n = 0;
    Category cat{};
  };
  std::map<std::string, Acc> per_nft;
  std::set<std::string> groups{std::string(kTotalGroup)};
  for (const auto& t : trades) {
    groups.insert(std::string(to_string(t.category)));
    if (!t.price_usd) continue;
    auto& a = per_nft[t.nft_id];
    a.sum += *t.price_usd;
    ++a.n;
    a.cat = t.category;
  }
  std::map<std::string, std::vector<double>> means;
  for (const auto& [id, a] : per_nft) {
    const double m = a.sum / a.n;
    means[std::string(kTotalGroup)].push_back(m);
    means[std::string(to_string(a.cat))].push_back(m);
  }
  std::vector<PercentileRow> rows;
  for (const auto& g : groups) {
    PercentileRow row{g, 0, {}};
    auto it = means.find(g);
    if (it != means.end()) {
      auto& v = it->second;
      std::sort(v.begin(), v.end());
      row.n_nfts = v.size();
      for (int p : kPricePercentiles) row.percentiles[p] = quantile_lower(v, p / 100.0);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Sale timelines

struct Sale {
  Timestamp ts = 0;
  std::optional<double> price_usd;
  std::string buyer;
  std::string seller;
};

struct SaleTimeline {
  std::string nft_id;
  std::string collection;
  Category category = Category::Other;
  std::string url;
  std::vector<Sale> sales;  // chronological; sales[0] is the primary sale

  const Sale& primary() const { return sales.front(); }
  bool has_secondary() const { return sales.size() > 1; }
  std::size_t n_secondary() const { return sales.size() - 1; }

  /// price(i) / price(i-1); nullopt for the primary sale or missing/zero prices.
  std::optional<double> change_ratio(std::size_t i) const {
    if (i == 0 || i >= sales.size()) return std::nullopt;
    const auto& a = sales[i - 1].price_usd;
    const auto& b = sales[i].price_usd;
    if (!a || !b || !(*a > 0)) return std::nullopt;
    return *b / *a;
  }
};

/// Orders one NFT's sales by time; same-second sales tie-break on (price, buyer).
inline bool sale_order(const Sale& a, const Sale& b) {
  const double pa = a.price_usd.value_or(-1.0), pb = b.price_usd.value_or(-1.0);
  return std::tie(a.ts, pa, a.buyer, a.seller) < std::tie(b.ts, pb, b.buyer, b.seller);
}

/// One timeline per NFT, sorted by nft_id. NFT metadata comes from its
/// primary sale.
inline std::vector<SaleTimeline> sale_timelines(const std::vector<TradeRecord>& trades) {
  std::unordered_map<std::string_view, std::vector<std::size_t>> by_nft;
  for (std::size_t i = 0; i < trades.size(); ++i) by_nft[trades[i].nft_id].push_back(i);
  std::vector<SaleTimeline> out;
  out.reserve(by_nft.size());
  for (auto& [id, idx] : by_nft) {
    std::vector<std::pair<Sale, std::size_t>> sales;
    for (auto i : idx)
      sales.push_back({Sale{trades[i].ts, trades[i].price_usd, trades[i].buyer, trades[i].seller}, i});
    std::sort(sales.begin(), sales.end(),
              [](const auto& a, const auto& b) { return sale_order(a.first, b.first); });
    const auto& first = trades[sales.front().second];
    SaleTimeline tl{std::string(id), first.collection, first.category, first.url, {}};
    for (auto& s : sales) tl.sales.push_back(std::move(s.first));
    out.push_back(std::move(tl));
  }
  std::sort(out.begin(), out.end(),
            [](const SaleTimeline& a, const SaleTimeline& b) { return a.nft_id < b.nft_id; });
  return out;
}

struct SecondaryPriceRow {
  int year = 0;                     // year of the secondary sale
  std::size_t n_secondary = 0;      // secondary sales with both prices known
  std::size_t n_below_primary = 0;  // ... priced strictly below the primary sale
  double share_below() const { return n_secondary ? double(n_below_primary) / n_secondary : 0.0; }
};

inline std::vector<SecondaryPriceRow> secondary_vs_primary(const std::vector<SaleTimeline>& tls) {
  std::map<int, SecondaryPriceRow> rows;
  for (const auto& tl : tls) {
    const auto& p = tl.primary().price_usd;
    if (!p) continue;
    for (std::size_t i = 1; i < tl.sales.size(); ++i) {
      const auto& s = tl.sales[i];
      if (!s.price_usd) continue;
      auto& r = rows[utc_year(s.ts)];
      r.year = utc_year(s.ts);
      ++r.n_secondary;
      if (*s.price_usd < *p) ++r.n_below_primary;
    }
  }
  std::vector<SecondaryPriceRow> out;
  for (auto& [y, r] : rows) out.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// Resale curve

struct ResalePoint {
  int horizon_days = 0;
  std::size_t eligible = 0;
  std::size_t resold = 0;
  double fraction() const { return eligible ? double(resold) / eligible : 0.0; }
};

/// Fraction of NFTs whose first secondary sale happens within n days of the
/// primary sale. Only NFTs observable for the longest requested horizon
/// (primary sale at least that many days before `dataset_end`) form the
/// cohort, so every horizon is evaluated on the same NFTs and the curve is
/// non-decreasing.
inline std::vector<ResalePoint> resale_fraction_curve(const std::vector<SaleTimeline>& tls,
                                                      std::vector<int> horizons,
                                                      Timestamp dataset_end) {
  for (int h : horizons)
    if (h <= 0) throw ValidationError("resale horizons must be positive");
  std::sort(horizons.begin(), horizons.end());
  std::vector<ResalePoint> out;
  if (horizons.empty()) return out;
  const Timestamp span = static_cast<Timestamp>(horizons.back()) * kSecondsPerDay;
  std::vector<Timestamp> gaps;  // first-resale gap per cohort NFT, or max
  for (const auto& tl : tls) {
    if (tl.primary().ts + span > dataset_end) continue;
    gaps.push_back(tl.has_secondary() ? tl.sales[1].ts - tl.primary().ts
                                      : std::numeric_limits<Timestamp>::max());
  }
  for (int h : horizons) {
    ResalePoint p{h, gaps.size(), 0};
    const Timestamp lim = static_cast<Timestamp>(h) * kSecondsPerDay;
    for (auto g : gaps)
      if (g <= lim) ++p.resold;
    out.push_back(p);
  }
  return out;
}

inline Timestamp dataset_end(const std::vector<TradeRecord>& trades) {
  Timestamp end = 0;
  for (const auto& t : trades) end = std::max(end, t.ts);
  return end;
}

}  // namespace nftmarket::stats
