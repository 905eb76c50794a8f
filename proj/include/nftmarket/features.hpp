#pragma once

// Per-NFT predictors computed strictly from trades before the UTC day of the
// NFT's primary sale.

#include <unordered_set>

#include "nftmarket/market_stats.hpp"
#include "nftmarket/pagerank.hpp"

namespace nftmarket::predict {

inline constexpr std::size_t kVisualComponents = 5;

inline constexpr std::array<std::string_view, 11> kFeatureNames = {
    "k_buyer",  "k_seller",  "PR_buyer",  "PR_seller", "p_resale", "median_price",
    "vis_PCA1", "vis_PCA2",  "vis_PCA3",  "vis_PCA4",  "vis_PCA5"};

enum FeatureIndex : std::size_t {
  kKBuyer = 0, kKSeller, kPrBuyer, kPrSeller, kPResale, kMedianPrice, kVis1
};

struct FeatureRow {
  std::string nft_id;
  std::string collection;
  Category category = Category::Other;
  Timestamp t_s = 0;
  double k_buyer = 0, k_seller = 0;
  double pr_buyer = 0, pr_seller = 0;
  double p_resale = 0.5;
  std::optional<double> median_price;  // missing when the collection has no prior sale in the window
  std::optional<std::array<double, kVisualComponents>> vis_pca;

  /// Feature vector in kFeatureNames order; missing values are NaN.
  std::array<double, 11> values() const {
    std::array<double, 11> v{};
    v[kKBuyer] = k_buyer;
    v[kKSeller] = k_seller;
    v[kPrBuyer] = pr_buyer;
    v[kPrSeller] = pr_seller;
    v[kPResale] = p_resale;
    v[kMedianPrice] = median_price.value_or(std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < kVisualComponents; ++i)
      v[kVis1 + i] = vis_pca ? (*vis_pca)[i] : std::numeric_limits<double>::quiet_NaN();
    return v;
  }

  friend bool operator==(const FeatureRow&, const FeatureRow&) = default;
};

/// Smoothed prior probability of a secondary sale in a collection with n
/// earlier NFTs of which s were resold.
inline double p_resale(std::int64_t n, std::int64_t s) {
  if (n < 0 || s < 0 || s > n) throw ValidationError("p_resale needs 0 <= s <= n");
  if (n == 0) return 0.5;
  const double nd = static_cast<double>(n);
  return 0.5 / (nd + 1.0) + (nd / (nd + 1.0)) * (static_cast<double>(s) / nd);
}

/// Look-back / look-ahead windows. `All` means unbounded.
enum class Window { Week, Month, HalfYear, Year, TwoYears, All };

inline constexpr std::array<Window, 6> kAllWindows = {Window::Week, Window::Month, Window::HalfYear,
                                                      Window::Year, Window::TwoYears, Window::All};

inline std::string_view to_string(Window w) {
  switch (w) {
    case Window::Week: return "1w";
    case Window::Month: return "1m";
    case Window::HalfYear: return "6m";
    case Window::Year: return "1y";
    case Window::TwoYears: return "2y";
    case Window::All: return "all";
  }
  return "all";
}

inline std::optional<Window> parse_window(std::string_view s) {
  for (auto w : kAllWindows)
    if (to_string(w) == s) return w;
  return std::nullopt;
}

/// Window length in seconds; nullopt for All.
inline std::optional<Timestamp> window_seconds(Window w) {
  switch (w) {
    case Window::Week: return 7 * kSecondsPerDay;
    case Window::Month: return 30 * kSecondsPerDay;
    case Window::HalfYear: return 182 * kSecondsPerDay;
    case Window::Year: return 365 * kSecondsPerDay;
    case Window::TwoYears: return 730 * kSecondsPerDay;
    case Window::All: return std::nullopt;
  }
  return std::nullopt;
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw DegenerateError("median of empty sample");
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

/// Median USD price of the collection's sales in [t_s - window, start of
/// day(t_s)); nullopt when there is none.
inline std::optional<double> median_collection_price(const std::vector<TradeRecord>& trades,
                                                     const std::string& collection, Timestamp t_s,
                                                     Window window) {
  const Timestamp end = utc_day(t_s) * kSecondsPerDay;
  const auto len = window_seconds(window);
  std::vector<double> prices;
  for (const auto& t : trades) {
    if (t.collection != collection || !t.price_usd || t.ts >= end) continue;
    if (len && t.ts < t_s - *len) continue;
    prices.push_back(*t.price_usd);
  }
  if (prices.empty()) return std::nullopt;
  return median_of(std::move(prices));
}

/// Object id -> first five PCA scores.
using VisualScores = std::unordered_map<std::string, std::array<double, kVisualComponents>>;

/// Incremental market history. advance_to(d) absorbs every trade strictly
/// before day d; row_for() then reads only that history, so the same row comes
/// out whether the builder saw the full dataset or only its pre-day prefix.
class FeatureBuilder {
 public:
  FeatureBuilder(std::vector<TradeRecord> trades, Window median_window, const VisualScores* visual = nullptr,
                 PageRankOptions pr = {})
      : trades_(std::move(trades)), window_(median_window), visual_(visual), pr_opts_(pr) {
    std::stable_sort(trades_.begin(), trades_.end(),
                     [](const TradeRecord& a, const TradeRecord& b) { return a.ts < b.ts; });
  }

  /// Absorbs trades with utc_day(ts) < day. Days must not decrease.
  void advance_to(Day day) {
    if (day < current_day_) throw ValidationError("FeatureBuilder cannot move backwards in time");
    current_day_ = day;
    const Timestamp end = day * kSecondsPerDay;
    while (cursor_ < trades_.size() && trades_[cursor_].ts < end) absorb(trades_[cursor_++]);
  }

  FeatureRow row_for(const stats::SaleTimeline& tl) {
    const auto& primary = tl.primary();
    if (utc_day(primary.ts) != current_day_)
      advance_to(utc_day(primary.ts));
    FeatureRow r;
    r.nft_id = tl.nft_id;
    r.collection = tl.collection;
    r.category = tl.category;
    r.t_s = primary.ts;
    r.k_buyer = static_cast<double>(degree(primary.buyer));
    r.k_seller = static_cast<double>(degree(primary.seller));
    r.pr_buyer = pagerank_of(primary.buyer);
    r.pr_seller = pagerank_of(primary.seller);
    auto cs = collection_stats_.find(tl.collection);
    r.p_resale = cs == collection_stats_.end() ? 0.5 : p_resale(cs->second.n_primary, cs->second.n_resold);
    r.median_price = median_price(tl.collection, primary.ts);
    if (visual_ && !tl.url.empty()) {
      auto it = visual_->find(tl.url);
      if (it != visual_->end()) r.vis_pca = it->second;
    }
    return r;
  }

 private:
  struct NodeState {
    std::unordered_set<std::uint32_t> out, in;
  };
  struct CollectionStats {
    std::int64_t n_primary = 0;
    std::int64_t n_resold = 0;
  };

  std::uint32_t node_index(const std::string& id) {
    auto [it, inserted] = node_ids_.try_emplace(id, static_cast<std::uint32_t>(nodes_.size()));
    if (inserted) nodes_.emplace_back();
    return it->second;
  }

  void absorb(const TradeRecord& t) {
    if (t.buyer != t.seller) {
      const auto b = node_index(t.buyer), s = node_index(t.seller);
      nodes_[b].out.insert(s);
      nodes_[s].in.insert(b);
      ++edge_weights_[(std::uint64_t(b) << 32) | s];
      ++graph_version_;
    }
    auto& count = sales_seen_[t.nft_id];
    ++count;
    const auto& coll = first_collection_.try_emplace(t.nft_id, t.collection).first->second;
    if (count == 1) ++collection_stats_[coll].n_primary;
    if (count == 2) ++collection_stats_[coll].n_resold;
    if (t.price_usd) prices_[t.collection].push_back({t.ts, *t.price_usd});
  }

  std::size_t degree(const std::string& id) const {
    auto it = node_ids_.find(id);
    if (it == node_ids_.end()) return 0;
    return nodes_[it->second].out.size() + nodes_[it->second].in.size();
  }

  double pagerank_of(const std::string& id) {
    auto it = node_ids_.find(id);
    if (it == node_ids_.end()) return 0.0;
    if (pr_version_ != graph_version_ || pr_.empty()) {
      std::vector<net::Edge> edges;
      edges.reserve(edge_weights_.size());
      for (const auto& [key, w] : edge_weights_)
        edges.push_back({static_cast<std::uint32_t>(key >> 32), static_cast<std::uint32_t>(key & 0xffffffffu), w});
      pr_ = pagerank(nodes_.size(), edges, pr_opts_);
      pr_version_ = graph_version_;
    }
    return pr_[it->second];
  }

  std::optional<double> median_price(const std::string& collection, Timestamp t_s) {
    auto it = prices_.find(collection);
    if (it == prices_.end()) return std::nullopt;
    const auto& v = it->second;  // chronological
    const Timestamp end = current_day_ * kSecondsPerDay;
    const auto len = window_seconds(window_);
    auto by_ts = [](const std::pair<Timestamp, double>& p, Timestamp ts) { return p.first < ts; };
    const auto lo = len ? std::lower_bound(v.begin(), v.end(), t_s - *len, by_ts) : v.begin();
    const auto hi = std::lower_bound(v.begin(), v.end(), end, by_ts);
    if (lo >= hi) return std::nullopt;
    const std::tuple<std::string, std::size_t, std::size_t> key{collection, lo - v.begin(), hi - v.begin()};
    if (auto c = median_cache_.find(key); c != median_cache_.end()) return c->second;
    std::vector<double> prices;
    prices.reserve(static_cast<std::size_t>(hi - lo));
    for (auto p = lo; p != hi; ++p) prices.push_back(p->second);
    const double m = median_of(std::move(prices));
    median_cache_.emplace(key, m);
    return m;
  }

  std::vector<TradeRecord> trades_;
  Window window_;
  const VisualScores* visual_;
  PageRankOptions pr_opts_;
  std::size_t cursor_ = 0;
  Day current_day_ = std::numeric_limits<Day>::min();

  std::unordered_map<std::string, std::uint32_t> node_ids_;  // first-appearance order
  std::vector<NodeState> nodes_;
  std::map<std::uint64_t, std::int64_t> edge_weights_;
  std::uint64_t graph_version_ = 0, pr_version_ = 0;
  std::vector<double> pr_;

  std::unordered_map<std::string, std::int64_t> sales_seen_;
  std::unordered_map<std::string, std::string> first_collection_;
  std::unordered_map<std::string, CollectionStats> collection_stats_;
  std::unordered_map<std::string, std::vector<std::pair<Timestamp, double>>> prices_;
  std::map<std::tuple<std::string, std::size_t, std::size_t>, double> median_cache_;
};

/// Feature rows for every NFT, ordered by (t_s, nft_id).
inline std::vector<FeatureRow> build_feature_rows(const std::vector<TradeRecord>& trades,
                                                  const std::vector<stats::SaleTimeline>& timelines,
                                                  Window median_window, const VisualScores* visual = nullptr) {
  std::vector<const stats::SaleTimeline*> order;
  order.reserve(timelines.size());
  for (const auto& tl : timelines) order.push_back(&tl);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    return std::tie(a->primary().ts, a->nft_id) < std::tie(b->primary().ts, b->nft_id);
  });
  FeatureBuilder builder(trades, median_window, visual);
  std::vector<FeatureRow> rows;
  rows.reserve(order.size());
  for (const auto* tl : order) rows.push_back(builder.row_for(*tl));
  return rows;
}

inline void write_feature_rows(std::ostream& out, const std::vector<FeatureRow>& rows) {
  out << "nft_id,collection,category,t_s";
  for (auto n : kFeatureNames) out << ',' << n;
  out << '\n';
  for (const auto& r : rows) {
    out << csv_escape(r.nft_id) << ',' << csv_escape(r.collection) << ',' << to_string(r.category) << ','
        << r.t_s;
    for (double v : r.values()) out << ',' << (std::isnan(v) ? std::string() : format_double(v));
    out << '\n';
  }
}

}  // namespace nftmarket::predict
