#pragma once

#include "nftmarket/graph.hpp"

namespace nftmarket::predict {

struct PageRankOptions {
  double damping = 0.85;
  double tolerance = 1e-9;  // L1 change between iterates
  std::size_t max_iterations = 1000;
};

/// Weighted PageRank by power iteration over n nodes: transitions follow edge
/// weights normalized by out-strength, teleport is uniform and the mass of
/// dangling nodes is spread uniformly. Scores sum to 1.
inline std::vector<double> pagerank(std::size_t n, std::span<const net::Edge> edges,
                                    const PageRankOptions& opts = {}) {
  if (n == 0) throw DegenerateError("pagerank of an empty graph");
  std::vector<double> out_w(n, 0.0);
  for (const auto& e : edges) out_w[e.src] += static_cast<double>(e.weight);
  std::vector<double> x(n, 1.0 / double(n)), next(n);
  const double teleport = (1.0 - opts.damping) / double(n);
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    double dangling = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (out_w[i] == 0) dangling += x[i];
    std::fill(next.begin(), next.end(), teleport + opts.damping * dangling / double(n));
    for (const auto& e : edges)
      next[e.dst] += opts.damping * x[e.src] * static_cast<double>(e.weight) / out_w[e.src];
    double sum = 0;
    for (double v : next) sum += v;
    double change = 0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] /= sum;
      change += std::abs(next[i] - x[i]);
    }
    x.swap(next);
    if (change < opts.tolerance) break;
  }
  return x;
}

inline std::vector<double> pagerank(const net::TradeGraph& g, const PageRankOptions& opts = {}) {
  return pagerank(g.node_count(), g.edges(), opts);
}

/// Distinct in-neighbours plus distinct out-neighbours; 0 for absent nodes.
inline std::size_t degree_centrality(const net::TradeGraph& g, std::string_view node) {
  auto n = g.find(node);
  if (!n) return 0;
  std::size_t in = 0;
  for (const auto& e : g.edges())
    if (e.dst == *n) ++in;
  return in + g.out_degree(*n);
}

}  // namespace nftmarket::predict
