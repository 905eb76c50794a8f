#pragma once

#include <numeric>
#include <unordered_map>

#include "nftmarket/core.hpp"

namespace nftmarket::net {

using NodeId = std::uint32_t;

struct Edge {
  NodeId src = 0;
  NodeId dst = 0;
  std::int64_t weight = 1;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Directed graph with positive integer edge weights. Nodes are kept in
/// lexicographic id order and edges sorted by (src, dst), so two graphs built
/// from the same edge multiset compare equal regardless of input order.
class TradeGraph {
 public:
  TradeGraph() = default;

  /// Aggregates parallel edges (summing weights) over the given node ids.
  /// `ids` must be sorted and unique; edge endpoints index into it.
  static TradeGraph from_indexed(std::vector<std::string> ids, std::vector<Edge> edges) {
    TradeGraph g;
    g.ids_ = std::move(ids);
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
      return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
    });
    for (const auto& e : edges) {
      if (e.weight < 1) throw ValidationError("edge weights must be >= 1");
      if (!g.edges_.empty() && g.edges_.back().src == e.src && g.edges_.back().dst == e.dst)
        g.edges_.back().weight += e.weight;
      else
        g.edges_.push_back(e);
    }
    g.finalize();
    return g;
  }

  /// Builds from string-labelled edges; nodes are the edge endpoints plus
  /// `extra_nodes`.
  static TradeGraph from_labelled(
      const std::vector<std::tuple<std::string, std::string, std::int64_t>>& edges,
      const std::vector<std::string>& extra_nodes = {}) {
    std::vector<std::string> ids = extra_nodes;
    for (const auto& [s, d, w] : edges) {
      ids.push_back(s);
      ids.push_back(d);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::unordered_map<std::string_view, NodeId> index;
    for (NodeId i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
    std::vector<Edge> indexed;
    indexed.reserve(edges.size());
    for (const auto& [s, d, w] : edges) indexed.push_back({index.at(s), index.at(d), w});
    return from_indexed(std::move(ids), std::move(indexed));
  }

  std::size_t node_count() const { return ids_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  std::int64_t total_weight() const { return total_weight_; }

  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(NodeId n) const { return ids_[n]; }
  const std::vector<Edge>& edges() const { return edges_; }

  std::optional<NodeId> find(std::string_view id) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id,
                               [](const std::string& a, std::string_view b) { return a < b; });
    if (it == ids_.end() || *it != id) return std::nullopt;
    return static_cast<NodeId>(it - ids_.begin());
  }

  std::span<const Edge> out_edges(NodeId n) const {
    return {edges_.data() + out_offsets_[n], edges_.data() + out_offsets_[n + 1]};
  }
  std::size_t out_degree(NodeId n) const { return out_offsets_[n + 1] - out_offsets_[n]; }

  std::int64_t in_strength(NodeId n) const { return in_strength_[n]; }
  std::int64_t out_strength(NodeId n) const { return out_strength_[n]; }
  std::int64_t strength(NodeId n) const { return in_strength_[n] + out_strength_[n]; }
  const std::vector<std::int64_t>& in_strengths() const { return in_strength_; }
  const std::vector<std::int64_t>& out_strengths() const { return out_strength_; }

  // Optional per-node metadata, empty or node_count() long.
  std::vector<std::string> community;  // top collection (traders) / collection (NFTs)
  std::vector<int> active_days;
  std::vector<std::string> tag;  // category or chain label

  void copy_metadata_from(const TradeGraph& other) {
    community = other.community;
    active_days = other.active_days;
    tag = other.tag;
  }

  friend bool operator==(const TradeGraph& a, const TradeGraph& b) {
    return a.ids_ == b.ids_ && a.edges_ == b.edges_;
  }

 private:
  void finalize() {
    const auto n = ids_.size();
    out_offsets_.assign(n + 1, 0);
    in_strength_.assign(n, 0);
    out_strength_.assign(n, 0);
    total_weight_ = 0;
    for (const auto& e : edges_) {
      ++out_offsets_[e.src + 1];
      out_strength_[e.src] += e.weight;
      in_strength_[e.dst] += e.weight;
      total_weight_ += e.weight;
    }
    std::partial_sum(out_offsets_.begin(), out_offsets_.end(), out_offsets_.begin());
  }

  std::vector<std::string> ids_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> out_offsets_{0};
  std::vector<std::int64_t> in_strength_, out_strength_;
  std::int64_t total_weight_ = 0;
};

/// Edge-list export: `src,dst,weight`.
inline void write_edge_list(std::ostream& out, const TradeGraph& g) {
  out << "src,dst,weight\n";
  for (const auto& e : g.edges())
    out << csv_escape(g.id(e.src)) << ',' << csv_escape(g.id(e.dst)) << ',' << e.weight << '\n';
}

}  // namespace nftmarket::net
