#pragma once

// Trader and NFT networks, node-level measures, modularity, strongly
// connected components and the strength-preserving null model.

#include <random>
#include <set>
#include <unordered_set>

#include "nftmarket/graph.hpp"
#include "nftmarket/ingest.hpp"
#include "nftmarket/power_law.hpp"

namespace nftmarket::net {

// ---------------------------------------------------------------------------
// Specialization

struct Specialization {
  double top_share = 0.0;
  double top2_share = 0.0;
  std::string top_collection;
  std::size_t n_trades = 0;
};

namespace detail {

inline Specialization specialization_from_counts(const std::map<std::string, std::size_t>& counts) {
  std::vector<std::pair<std::size_t, std::string>> ranked;
  std::size_t total = 0;
  for (const auto& [c, n] : counts) {
    ranked.push_back({n, c});
    total += n;
  }
  // most trades first, ties by collection name
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  Specialization s;
  s.n_trades = total;
  if (total == 0) return s;
  s.top_collection = ranked[0].second;
  s.top_share = double(ranked[0].first) / total;
  s.top2_share = double(ranked[0].first + (ranked.size() > 1 ? ranked[1].first : 0)) / total;
  return s;
}

}  // namespace detail

/// Shares of a trader's transactions (as buyer or seller) in their most and
/// two most traded collections.
inline Specialization specialization(const std::vector<TradeRecord>& trades, const std::string& trader) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : trades)
    if (t.buyer == trader || t.seller == trader) ++counts[t.collection];
  if (counts.empty()) throw ValidationError("trader has no trades: " + trader);
  return detail::specialization_from_counts(counts);
}

/// Specialization of every trader at once.
inline std::map<std::string, Specialization> specialization_all(const std::vector<TradeRecord>& trades) {
  std::unordered_map<std::string_view, std::map<std::string, std::size_t>> counts;
  for (const auto& t : trades) {
    ++counts[t.buyer][t.collection];
    if (t.seller != t.buyer) ++counts[t.seller][t.collection];
  }
  std::map<std::string, Specialization> out;
  for (const auto& [trader, c] : counts)
    out.emplace(std::string(trader), detail::specialization_from_counts(c));
  return out;
}

// ---------------------------------------------------------------------------
// Construction

struct TraderNetwork {
  TradeGraph graph;
  std::size_t self_trades = 0;
};

/// Edge buyer -> seller weighted by the number of items bought; self-trades are
/// dropped and counted. Node metadata: top collection, active UTC days.
inline TraderNetwork build_trader_network(const std::vector<TradeRecord>& trades) {
  TraderNetwork res;
  std::map<std::pair<std::string_view, std::string_view>, std::int64_t> weights;
  for (const auto& t : trades) {
    if (t.buyer == t.seller) {
      ++res.self_trades;
      continue;
    }
    ++weights[{t.buyer, t.seller}];
  }
  std::vector<std::tuple<std::string, std::string, std::int64_t>> edges;
  edges.reserve(weights.size());
  for (const auto& [k, w] : weights) edges.emplace_back(std::string(k.first), std::string(k.second), w);
  res.graph = TradeGraph::from_labelled(edges);

  auto& g = res.graph;
  const auto spec = specialization_all(trades);
  std::unordered_map<std::string_view, std::set<Day>> days;
  for (const auto& t : trades) {
    if (t.buyer == t.seller) continue;
    days[t.buyer].insert(utc_day(t.ts));
    days[t.seller].insert(utc_day(t.ts));
  }
  g.community.resize(g.node_count());
  g.active_days.resize(g.node_count());
  for (NodeId n = 0; n < g.node_count(); ++n) {
    g.community[n] = spec.at(g.id(n)).top_collection;
    g.active_days[n] = static_cast<int>(days[g.id(n)].size());
  }
  return res;
}

struct NftNetworkOptions {
  bool clique_within_event = false;  // sensitivity variant: link simultaneous purchases too
};

/// Per buyer, purchases sharing a timestamp form one event; every NFT of event
/// e links to every NFT of event e+1. Repeated pairs accumulate weight; buyers
/// with a single event contribute nothing. Node metadata: collection and
/// category of the NFT's first sale.
inline TradeGraph build_nft_network(const std::vector<TradeRecord>& trades,
                                    NftNetworkOptions opts = {}) {
  std::unordered_map<std::string_view, std::vector<std::pair<Timestamp, std::string_view>>> by_buyer;
  for (const auto& t : trades) by_buyer[t.buyer].push_back({t.ts, t.nft_id});

  std::map<std::pair<std::string_view, std::string_view>, std::int64_t> weights;
  for (auto& [buyer, purchases] : by_buyer) {
    std::sort(purchases.begin(), purchases.end());
    purchases.erase(std::unique(purchases.begin(), purchases.end()), purchases.end());
    std::vector<std::vector<std::string_view>> events;
    for (std::size_t i = 0; i < purchases.size(); ++i) {
      if (i == 0 || purchases[i].first != purchases[i - 1].first) events.emplace_back();
      events.back().push_back(purchases[i].second);
    }
    if (events.size() < 2 && !opts.clique_within_event) continue;
    for (std::size_t e = 0; e + 1 < events.size(); ++e)
      for (auto from : events[e])
        for (auto to : events[e + 1]) ++weights[{from, to}];
    if (opts.clique_within_event)
      for (const auto& ev : events)
        for (auto a : ev)
          for (auto b : ev)
            if (a != b) ++weights[{a, b}];
  }

  std::vector<std::tuple<std::string, std::string, std::int64_t>> edges;
  edges.reserve(weights.size());
  for (const auto& [k, w] : weights) edges.emplace_back(std::string(k.first), std::string(k.second), w);
  TradeGraph g = TradeGraph::from_labelled(edges);

  std::unordered_map<std::string_view, const TradeRecord*> first_sale;
  for (const auto& t : trades) {
    auto [it, inserted] = first_sale.try_emplace(t.nft_id, &t);
    if (!inserted && t.ts < it->second->ts) it->second = &t;
  }
  g.community.resize(g.node_count());
  g.tag.resize(g.node_count());
  for (NodeId n = 0; n < g.node_count(); ++n) {
    const auto* t = first_sale.at(g.id(n));
    g.community[n] = t->collection;
    g.tag[n] = std::string(to_string(t->category));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Node measures

inline std::int64_t strength(const TradeGraph& g, std::string_view node) {
  auto n = g.find(node);
  if (!n) throw ValidationError("unknown node: " + std::string(node));
  return g.strength(*n);
}

/// Slope of log(strength) against log(active days) over nodes with both >= 1.
inline double strength_activity_slope(const TradeGraph& g, std::span<const int> active_days) {
  if (active_days.size() != g.node_count())
    throw ValidationError("activity vector does not match graph size");
  std::vector<double> x, y;
  for (NodeId n = 0; n < g.node_count(); ++n) {
    if (active_days[n] >= 1 && g.strength(n) >= 1) {
      x.push_back(std::log(static_cast<double>(active_days[n])));
      y.push_back(std::log(static_cast<double>(g.strength(n))));
    }
  }
  if (x.size() < 10) throw DegenerateError("strength-activity slope needs >= 10 active nodes");
  return stats::ols_slope(x, y);
}

inline double strength_activity_slope(const TradeGraph& g) {
  return strength_activity_slope(g, g.active_days);
}

/// Pearson correlation, over nodes with at least one out-neighbour, between
/// out-strength and the mean in-strength of the out-neighbours.
inline double assortativity(const TradeGraph& g) {
  std::vector<double> x, y;
  for (NodeId n = 0; n < g.node_count(); ++n) {
    auto out = g.out_edges(n);
    if (out.empty()) continue;
    double sum = 0;
    for (const auto& e : out) sum += static_cast<double>(g.in_strength(e.dst));
    x.push_back(static_cast<double>(g.out_strength(n)));
    y.push_back(sum / static_cast<double>(out.size()));
  }
  if (x.size() < 3) throw DegenerateError("assortativity needs >= 3 nodes with out-neighbours");
  const auto m = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / m;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / m;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0) || !(syy > 0)) throw DegenerateError("degenerate assortativity: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Partitions and modularity

struct Partition {
  std::vector<std::string> labels;  // sorted distinct community names
  std::vector<int> of;              // node -> index into labels
};

/// Partition from a node id -> community map; must cover every node.
inline Partition make_partition(const TradeGraph& g, const std::map<std::string, std::string>& assign) {
  Partition p;
  std::set<std::string> names;
  for (const auto& id : g.ids()) {
    auto it = assign.find(id);
    if (it == assign.end()) throw ValidationError("partition does not cover node " + id);
    names.insert(it->second);
  }
  p.labels.assign(names.begin(), names.end());
  p.of.reserve(g.node_count());
  for (const auto& id : g.ids()) {
    const auto& c = assign.at(id);
    p.of.push_back(static_cast<int>(std::lower_bound(p.labels.begin(), p.labels.end(), c) - p.labels.begin()));
  }
  return p;
}

/// Partition taken from the graph's `community` metadata.
inline Partition community_partition(const TradeGraph& g) {
  if (g.community.size() != g.node_count()) throw ValidationError("graph has no community metadata");
  std::map<std::string, std::string> assign;
  for (NodeId n = 0; n < g.node_count(); ++n) assign[g.id(n)] = g.community[n];
  return make_partition(g, assign);
}

inline void write_partition(std::ostream& out, const TradeGraph& g, const Partition& p) {
  out << "node,community\n";
  for (NodeId n = 0; n < g.node_count(); ++n)
    out << csv_escape(g.id(n)) << ',' << csv_escape(p.labels[p.of[n]]) << '\n';
}

/// Directed weighted modularity
///   Q = 1/W sum_ij [A_ij - s_i^out s_j^in / W] delta(c_i, c_j).
inline double modularity(const TradeGraph& g, const Partition& p) {
  if (g.total_weight() == 0) throw DegenerateError("modularity of an empty graph");
  if (p.of.size() != g.node_count()) throw ValidationError("partition size does not match graph");
  const auto W = static_cast<double>(g.total_weight());
  std::int64_t inside = 0;
  for (const auto& e : g.edges())
    if (p.of[e.src] == p.of[e.dst]) inside += e.weight;
  std::vector<double> out_c(p.labels.size(), 0.0), in_c(p.labels.size(), 0.0);
  for (NodeId n = 0; n < g.node_count(); ++n) {
    out_c[p.of[n]] += static_cast<double>(g.out_strength(n));
    in_c[p.of[n]] += static_cast<double>(g.in_strength(n));
  }
  double expected = 0;
  for (std::size_t c = 0; c < out_c.size(); ++c) expected += out_c[c] * in_c[c];
  return static_cast<double>(inside) / W - expected / (W * W);
}

// ---------------------------------------------------------------------------
// Strongly connected components (iterative Tarjan)

/// Components sorted by size (largest first), ties by smallest member; each
/// component's members ascending.
inline std::vector<std::vector<NodeId>> scc(const TradeGraph& g) {
  const auto n = g.node_count();
  constexpr std::uint32_t kUnvisited = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> index(n, kUnvisited), low(n, 0);
  std::vector<char> on_stack(n, 0);
  std::vector<NodeId> stack;
  std::vector<std::vector<NodeId>> comps;
  std::uint32_t counter = 0;

  struct Frame {
    NodeId v;
    std::size_t next;  // position within out_edges
  };
  std::vector<Frame> call;
  for (NodeId root = 0; root < n; ++root) {
    if (index[root] != kUnvisited) continue;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      auto& f = call.back();
      auto out = g.out_edges(f.v);
      if (f.next < out.size()) {
        const NodeId w = out[f.next++].dst;
        if (index[w] == kUnvisited) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      const NodeId v = f.v;
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
      if (low[v] == index[v]) {
        std::vector<NodeId> comp;
        NodeId w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp.push_back(w);
        } while (w != v);
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
      }
    }
  }
  std::sort(comps.begin(), comps.end(), [](const auto& a, const auto& b) {
    return a.size() != b.size() ? a.size() > b.size() : a.front() < b.front();
  });
  return comps;
}

/// Sizes of the two largest components as fractions of all nodes.
inline std::pair<double, double> top_scc_fractions(const TradeGraph& g) {
  if (g.node_count() == 0) return {0.0, 0.0};
  const auto comps = scc(g);
  const auto n = static_cast<double>(g.node_count());
  return {comps.size() > 0 ? comps[0].size() / n : 0.0, comps.size() > 1 ? comps[1].size() / n : 0.0};
}

// ---------------------------------------------------------------------------
// Null model

struct RandomizeResult {
  TradeGraph graph;
  std::size_t attempts = 0;
  std::size_t swaps = 0;
};

/// Target swaps on the weight-expanded edge multiset: total_weight() attempts,
/// each drawing two entries uniformly and swapping targets (a->b, c->d become
/// a->d, c->b) only when all four endpoints differ. Every node keeps its in-
/// and out-strength.
inline RandomizeResult randomize(const TradeGraph& g, std::uint64_t seed) {
  if (g.total_weight() < 2) throw DegenerateError("randomize needs at least two weighted edges");
  std::vector<Edge> pool;
  pool.reserve(static_cast<std::size_t>(g.total_weight()));
  for (const auto& e : g.edges())
    for (std::int64_t k = 0; k < e.weight; ++k) pool.push_back({e.src, e.dst, 1});

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  RandomizeResult res;
  const std::size_t attempts = pool.size();
  for (std::size_t k = 0; k < attempts; ++k) {
    const std::size_t i = pick(rng), j = pick(rng);
    ++res.attempts;
    const NodeId a = pool[i].src, b = pool[i].dst, c = pool[j].src, d = pool[j].dst;
    if (a == b || a == c || a == d || b == c || b == d || c == d) continue;
    pool[i].dst = d;
    pool[j].dst = b;
    ++res.swaps;
  }
  res.graph = TradeGraph::from_indexed(g.ids(), std::move(pool));
  res.graph.copy_metadata_from(g);
  return res;
}

/// Independent per-realization seed derived from (master seed, index).
inline std::uint64_t realization_seed(std::uint64_t master, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

struct NullModelResult {
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation of the realizations
  double sem = 0.0;     // standard error of the mean

  /// (observed - mean) / stddev; infinite when the null has no spread.
  double z_score(double observed) const {
    if (stddev > 0) return (observed - mean) / stddev;
    return observed == mean ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), observed - mean);
  }
};

inline NullModelResult summarize_null(std::vector<double> values) {
  NullModelResult r;
  r.values = std::move(values);
  const auto n = static_cast<double>(r.values.size());
  if (r.values.empty()) return r;
  r.mean = std::accumulate(r.values.begin(), r.values.end(), 0.0) / n;
  if (r.values.size() > 1) {
    double ss = 0;
    for (double v : r.values) ss += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(ss / (n - 1));
    r.sem = r.stddev / std::sqrt(n);
  }
  return r;
}

/// Modularity of `p` over n strength-preserving randomizations. Realizations
/// run in parallel with seeds derived from (seed, index).
inline NullModelResult null_modularity(const TradeGraph& g, const Partition& p, std::size_t n = 100,
                                       std::uint64_t seed = 0) {
  std::vector<double> values(n);
  parallel_for(n, [&](std::size_t i) {
    values[i] = modularity(randomize(g, realization_seed(seed, i)).graph, p);
  });
  return summarize_null(std::move(values));
}

}  // namespace nftmarket::net
