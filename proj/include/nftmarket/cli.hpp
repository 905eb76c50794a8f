#pragma once

// Command-line pipeline: synth, ingest, stats, network, visual, predict and
// report subcommands over one output directory.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <filesystem>

#include "nftmarket/experiments.hpp"
#include "nftmarket/networks.hpp"
#include "nftmarket/power_law.hpp"
#include "nftmarket/synth.hpp"
#include "nftmarket/visual.hpp"

namespace nftmarket::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline constexpr std::string_view kToolName = "nftmarket";
inline constexpr std::string_view kVersion = "1.0.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitUsage = 64;

inline constexpr std::array<std::string_view, 7> kSubcommands = {"synth",   "ingest",  "stats", "network",
                                                                  "visual", "predict", "report"};

// ---------------------------------------------------------------------------
// Hashing

inline std::string to_hex(const unsigned char* p, std::size_t n) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  s.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    s += digits[p[i] >> 4];
    s += digits[p[i] & 0xf];
  }
  return s;
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_, data, n) != 1) throw Error("SHA-256 update failed");
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, md, &len) != 1) throw Error("SHA-256 final failed");
    return to_hex(md, len);
  }

 private:
  EVP_MD_CTX* ctx_;
};

inline std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex();
}

inline std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + p.string());
  Sha256 h;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

// ---------------------------------------------------------------------------
// Run configuration

/// Effective settings: command-line flags over the config file over defaults.
/// Input paths default to files inside the output directory, which is where
/// `synth` writes them.
struct RunConfig {
  fs::path out_dir = "out";
  std::uint64_t seed = 0;
  fs::path trades, rates, categories, embeddings, store;
  bool trades_explicit = false, rates_explicit = false, categories_explicit = false, embeddings_explicit = false;
  KeyValueConfig kv;

  /// Hash over the sorted config entries and the seed.
  std::string config_hash() const {
    std::vector<std::pair<std::string, std::string>> e = kv.entries();
    std::stable_sort(e.begin(), e.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string s = "seed=" + std::to_string(seed) + "\n";
    for (const auto& [k, v] : e) s += k + "=" + v + "\n";
    return sha256_hex(s);
  }
};

struct Flags {
  std::string config, out, trades, rates, categories, embeddings, store;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;  // key=value overrides
};

inline RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) {
    if (!fs::exists(f.config)) throw ValidationError("config file not found: " + f.config);
    c.kv = KeyValueConfig::load(f.config);
  }
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got: " + s);
    c.kv.set(std::string(trim(s.substr(0, eq))), std::string(trim(s.substr(eq + 1))));
  }
  c.out_dir = !f.out.empty() ? fs::path(f.out) : fs::path(c.kv.get_or("out", "out"));
  if (f.seed) {
    c.seed = *f.seed;
  } else {
    const auto s = c.kv.get_int("seed", 0);
    if (s < 0) throw ValidationError("seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  auto path = [&](const std::string& flag, const char* key, const char* fallback, bool& expl) {
    if (!flag.empty()) {
      expl = true;
      return fs::path(flag);
    }
    if (auto v = c.kv.get(key)) {
      expl = true;
      return fs::path(*v);
    }
    return c.out_dir / fallback;
  };
  bool store_expl = false;
  c.trades = path(f.trades, "trades", "trades.csv", c.trades_explicit);
  c.rates = path(f.rates, "rates", "rates.csv", c.rates_explicit);
  c.categories = path(f.categories, "categories", "categories.cfg", c.categories_explicit);
  c.embeddings = path(f.embeddings, "embeddings", "embeddings.emb", c.embeddings_explicit);
  c.store = path(f.store, "store", "trades_clean.csv", store_expl);
  return c;
}

// ---------------------------------------------------------------------------
// File helpers

template <class Fn>
void write_file(const fs::path& p, Fn&& fn, std::ios::openmode mode = std::ios::out) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, mode | std::ios::trunc);
  if (!f) throw Error("cannot write " + p.string());
  fn(f);
  if (!f) throw Error("failed writing " + p.string());
}

inline void write_json(const fs::path& p, const json& j) {
  write_file(p, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
}

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline void require_file(const fs::path& p, std::string_view what) {
  if (!fs::exists(p)) throw ValidationError(std::string(what) + " not found: " + p.string());
}

// ---------------------------------------------------------------------------
// Shared loading

inline ingest::IngestConfig load_categories(const RunConfig& c) {
  if (fs::exists(c.categories)) return ingest::load_ingest_config(KeyValueConfig::load(c.categories.string()));
  if (c.categories_explicit) require_file(c.categories, "category map");
  log_warn("no category map at " + c.categories.string() + "; every collection is Other");
  return {};
}

inline ingest::ExchangeRateTable load_rates(const RunConfig& c) {
  if (fs::exists(c.rates)) {
    std::ifstream in(c.rates);
    return ingest::ExchangeRateTable::parse_csv(in);
  }
  if (c.rates_explicit) require_file(c.rates, "rates file");
  log_warn("no rates file at " + c.rates.string() + "; USD prices will be missing");
  return {};
}

inline std::vector<TradeRecord> ingest_trades(const RunConfig& c, ingest::IngestSummary* summary) {
  require_file(c.trades, "trades file");
  std::ifstream in(c.trades, std::ios::binary);
  if (!in) throw ValidationError("cannot open trades file: " + c.trades.string());
  const bool strict = c.kv.get_or("ingest.strict", "false") == "true";
  auto parsed = ingest::parse_trades(in, ingest::format_for_path(c.trades.string()), {strict});
  auto cleaned = ingest::clean(parsed.trades, load_rates(c), load_categories(c), summary);
  if (summary) {
    summary->rows = parsed.rows;
    summary->dropped_empty = parsed.dropped_empty;
    summary->malformed = parsed.malformed;
  }
  return cleaned;
}

/// The canonical store when present, otherwise the raw trades cleaned in memory.
inline std::vector<TradeRecord> load_trades(const RunConfig& c) {
  if (fs::exists(c.store)) {
    std::ifstream in(c.store, std::ios::binary);
    return ingest::read_store(in);
  }
  log_info("no trade store at " + c.store.string() + "; cleaning " + c.trades.string() + " in memory");
  return ingest_trades(c, nullptr);
}

// ---------------------------------------------------------------------------
// Subcommands

inline void cmd_synth(const RunConfig& c) {
  auto cfg = synth::load_synth_config(c.kv);
  cfg.seed = c.seed;
  const auto market = synth::generate_market(cfg);
  const auto files = synth::write_market(c.out_dir, cfg, market);
  log_info("synth: " + std::to_string(market.trades.size()) + " trades, " +
           std::to_string(market.collections.size()) + " collections, " + std::to_string(market.embeddings.size()) +
           " embeddings -> " + c.out_dir.string());
}

inline void cmd_ingest(const RunConfig& c) {
  ingest::IngestSummary s;
  const auto trades = ingest_trades(c, &s);
  write_file(c.store, [&](std::ostream& o) { ingest::write_store(o, trades); });
  json j;
  j["seed"] = c.seed;
  j["input"] = c.trades.filename().string();
  j["rows"] = s.rows;
  j["dropped_empty"] = s.dropped_empty;
  j["malformed"] = s.malformed;
  j["duplicates"] = s.duplicates;
  j["missing_rate"] = s.missing_rate;
  j["kept"] = s.kept;
  write_json(c.out_dir / "ingest_summary.json", j);
  log_info("ingest: kept " + std::to_string(s.kept) + " of " + std::to_string(s.rows) + " rows");
}

inline json fit_json(const std::vector<double>& samples, std::optional<double> xmin) {
  try {
    stats::PowerLawOptions o;
    o.xmin = xmin;
    const auto f = stats::fit_power_law(samples, o);
    return {{"exponent", f.exponent}, {"xmin", f.xmin},       {"n_tail", f.n_tail},
            {"loglik", f.loglik},     {"ks_distance", f.ks_distance}, {"discrete", f.discrete}};
  } catch (const DegenerateError& e) {
    return {{"error", e.what()}};
  }
}

inline void cmd_stats(const RunConfig& c) {
  const auto trades = load_trades(c);
  const int window = static_cast<int>(c.kv.get_int("stats.window_days", 30));
  const double min_shown = c.kv.get_double("stats.min_volume_shown", 1000.0);
  const auto series = stats::rolling_series(trades, window);
  write_file(c.out_dir / "stats_daily.csv", [&](std::ostream& o) { stats::write_series_csv(o, series, min_shown); });

  write_file(c.out_dir / "stats_percentiles.csv", [&](std::ostream& o) {
    o << "group,n_nfts";
    for (int p : stats::kPricePercentiles) o << ",p" << p;
    o << '\n';
    for (const auto& r : stats::price_percentiles(trades)) {
      o << csv_escape(r.group) << ',' << r.n_nfts;
      for (int p : stats::kPricePercentiles) {
        auto it = r.percentiles.find(p);
        o << ',' << (it == r.percentiles.end() ? "" : format_double(it->second));
      }
      o << '\n';
    }
  });

  const auto tls = stats::sale_timelines(trades);
  write_file(c.out_dir / "stats_secondary_prices.csv", [&](std::ostream& o) {
    o << "year,n_secondary,n_below_primary,share_below\n";
    for (const auto& r : stats::secondary_vs_primary(tls))
      o << r.year << ',' << r.n_secondary << ',' << r.n_below_primary << ',' << format_double(r.share_below()) << '\n';
  });
  write_file(c.out_dir / "stats_sale_changes.csv", [&](std::ostream& o) {
    o << "nft_id,sale_index,date,price_usd,change_ratio\n";
    for (const auto& tl : tls)
      for (std::size_t i = 1; i < tl.sales.size(); ++i)
        o << csv_escape(tl.nft_id) << ',' << i << ',' << format_date(utc_day(tl.sales[i].ts)) << ','
          << predict::opt_double(tl.sales[i].price_usd) << ',' << predict::opt_double(tl.change_ratio(i)) << '\n';
  });
  const auto end = stats::dataset_end(trades);
  std::vector<int> horizons;
  for (const auto& h : c.kv.get_list("stats.resale_horizons")) {
    auto v = parse_int(h);
    if (!v || *v <= 0) throw ValidationError("stats.resale_horizons must be positive integers: " + h);
    horizons.push_back(static_cast<int>(*v));
  }
  if (horizons.empty()) horizons = {1, 7, 30, 90, 182, 365};
  const auto curve = stats::resale_fraction_curve(tls, horizons, end);
  write_file(c.out_dir / "stats_resale_curve.csv", [&](std::ostream& o) {
    o << "horizon_days,eligible,resold,fraction\n";
    for (const auto& p : curve)
      o << p.horizon_days << ',' << p.eligible << ',' << p.resold << ',' << format_double(p.fraction()) << '\n';
  });

  std::vector<double> sales_per_nft;
  std::size_t n_resold = 0;
  for (const auto& tl : tls) {
    sales_per_nft.push_back(static_cast<double>(tl.sales.size()));
    n_resold += tl.has_secondary();
  }
  std::map<std::string, std::set<std::string_view>> nfts_per_collection;
  std::set<std::string_view> traders;
  for (const auto& t : trades) {
    nfts_per_collection[t.collection].insert(t.nft_id);
    traders.insert(t.buyer);
    traders.insert(t.seller);
  }
  std::vector<double> sizes;
  for (const auto& [coll, s] : nfts_per_collection) sizes.push_back(static_cast<double>(s.size()));

  json j;
  j["seed"] = c.seed;
  j["n_trades"] = trades.size();
  j["n_nfts"] = tls.size();
  j["n_nfts_resold"] = n_resold;
  j["n_collections"] = nfts_per_collection.size();
  j["n_traders"] = traders.size();
  j["first_date"] = trades.empty() ? json(nullptr) : json(format_date(utc_day(trades.front().ts)));
  j["last_date"] = trades.empty() ? json(nullptr) : json(format_date(utc_day(end)));
  j["window_days"] = window;
  j["sales_per_nft_fit"] = fit_json(sales_per_nft, c.kv.get_double("stats.sales_xmin", 10.0));
  j["sales_per_nft_fit_ks"] = fit_json(sales_per_nft, std::nullopt);
  j["collection_size_fit"] = fit_json(sizes, std::nullopt);
  write_json(c.out_dir / "stats_summary.json", j);
  log_info("stats: " + std::to_string(tls.size()) + " NFTs over " + std::to_string(series.n_days) + " days");
}

template <class Fn>
json guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const DegenerateError& e) {
    return {{"error", e.what()}};
  }
}

inline json null_json(const net::TradeGraph& g, const net::Partition& p, std::size_t n, std::uint64_t seed) {
  return guarded([&]() -> json {
    const double q = net::modularity(g, p);
    const auto null = net::null_modularity(g, p, n, seed);
    return {{"Q", q},
            {"null_n", null.values.size()},
            {"null_mean", null.mean},
            {"null_sem", null.sem},
            {"null_std", null.stddev},
            {"z_score", null.z_score(q)}};
  });
}

inline void cmd_network(const RunConfig& c) {
  const auto trades = load_trades(c);
  const auto null_n = static_cast<std::size_t>(c.kv.get_int("network.null_n", 100));
  const auto tn = net::build_trader_network(trades);
  const auto& g = tn.graph;
  const auto part = net::community_partition(g);
  const auto spec = net::specialization_all(trades);
  write_file(c.out_dir / "trader_edges.csv", [&](std::ostream& o) { net::write_edge_list(o, g); });
  write_file(c.out_dir / "trader_partition.csv", [&](std::ostream& o) { net::write_partition(o, g, part); });
  write_file(c.out_dir / "trader_nodes.csv", [&](std::ostream& o) {
    o << "node,strength,out_strength,in_strength,active_days,top_collection,top_share,top2_share\n";
    for (net::NodeId n = 0; n < g.node_count(); ++n) {
      const auto& s = spec.at(g.id(n));
      o << csv_escape(g.id(n)) << ',' << g.strength(n) << ',' << g.out_strength(n) << ',' << g.in_strength(n) << ','
        << g.active_days[n] << ',' << csv_escape(s.top_collection) << ',' << format_double(s.top_share) << ','
        << format_double(s.top2_share) << '\n';
    }
  });

  const net::NftNetworkOptions nopt{c.kv.get_or("network.clique_within_event", "false") == "true"};
  const auto ng = net::build_nft_network(trades, nopt);
  write_file(c.out_dir / "nft_edges.csv", [&](std::ostream& o) { net::write_edge_list(o, ng); });

  auto strengths = [](const net::TradeGraph& gr) {
    std::vector<double> s;
    for (net::NodeId n = 0; n < gr.node_count(); ++n) s.push_back(static_cast<double>(gr.strength(n)));
    return s;
  };
  json j;
  j["seed"] = c.seed;
  json tj;
  tj["nodes"] = g.node_count();
  tj["edges"] = g.edge_count();
  tj["total_weight"] = g.total_weight();
  tj["self_trades"] = tn.self_trades;
  tj["assortativity"] = guarded([&]() -> json { return net::assortativity(g); });
  tj["modularity"] = null_json(g, part, null_n, c.seed);
  const auto [s1, s2] = net::top_scc_fractions(g);
  tj["scc_top_fractions"] = {s1, s2};
  tj["strength_fit"] = fit_json(strengths(g), std::nullopt);
  tj["strength_activity_slope"] = guarded([&]() -> json { return net::strength_activity_slope(g); });
  double mean_top = 0;
  for (const auto& [id, s] : spec) mean_top += s.top_share;
  tj["mean_top_share"] = spec.empty() ? 0.0 : mean_top / double(spec.size());
  j["trader_network"] = tj;

  json nj;
  nj["nodes"] = ng.node_count();
  nj["edges"] = ng.edge_count();
  nj["total_weight"] = ng.total_weight();
  nj["clique_within_event"] = nopt.clique_within_event;
  if (ng.node_count() > 0) {
    const auto npart = net::community_partition(ng);
    write_file(c.out_dir / "nft_partition.csv", [&](std::ostream& o) { net::write_partition(o, ng, npart); });
    nj["assortativity"] = guarded([&]() -> json { return net::assortativity(ng); });
    nj["modularity"] = null_json(ng, npart, null_n, c.seed + 1);
    const auto [n1, n2] = net::top_scc_fractions(ng);
    nj["scc_top_fractions"] = {n1, n2};
    nj["strength_fit"] = fit_json(strengths(ng), std::nullopt);
  }
  j["nft_network"] = nj;
  write_json(c.out_dir / "network_metrics.json", j);
  log_info("network: " + std::to_string(g.node_count()) + " traders, " + std::to_string(ng.node_count()) + " NFTs");
}

/// Object id -> (collection, category) from the first sale that references it.
inline std::map<std::string, std::pair<std::string, Category>> object_groups(const std::vector<TradeRecord>& trades) {
  std::map<std::string, std::pair<std::string, Category>> out;
  for (const auto& t : trades)
    if (!t.url.empty()) out.try_emplace(t.url, t.collection, t.category);
  return out;
}

inline visual::PcaOptions pca_options(const RunConfig& c) {
  visual::PcaOptions o;
  o.k = static_cast<std::size_t>(c.kv.get_int("visual.pca_k", 5));
  o.seed = c.seed;
  return o;
}

inline void cmd_visual(const RunConfig& c) {
  require_file(c.embeddings, "embedding file");
  const auto emb = visual::load_embeddings(c.embeddings.string());
  const auto trades = load_trades(c);
  const auto groups = object_groups(trades);
  const auto cap = static_cast<std::size_t>(c.kv.get_int("visual.max_pairs_per_cell", 100000));

  const auto model = visual::fit_pca(emb, pca_options(c));
  write_file(c.out_dir / "pca_model.pca", [&](std::ostream& o) { visual::save_pca(o, model); }, std::ios::binary);
  const auto scores = visual::project_all(model, emb);

  std::map<std::string, std::string> by_coll, by_cat;
  std::vector<std::string> coll_labels, cat_labels;
  Eigen::MatrixXd labelled(0, scores.cols());
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    auto it = groups.find(emb.ids()[i]);
    if (it == groups.end()) continue;
    by_coll[emb.ids()[i]] = it->second.first;
    by_cat[emb.ids()[i]] = std::string(to_string(it->second.second));
    coll_labels.push_back(it->second.first);
    cat_labels.push_back(std::string(to_string(it->second.second)));
    rows.push_back(static_cast<Eigen::Index>(i));
  }
  labelled.resize(static_cast<Eigen::Index>(rows.size()), scores.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) labelled.row(static_cast<Eigen::Index>(r)) = scores.row(rows[r]);

  write_file(c.out_dir / "pca_scores.csv", [&](std::ostream& o) {
    o << "object_id,collection,category";
    for (Eigen::Index k = 0; k < scores.cols(); ++k) o << ",pc" << (k + 1);
    o << '\n';
    for (std::size_t i = 0; i < emb.size(); ++i) {
      auto it = groups.find(emb.ids()[i]);
      o << csv_escape(emb.ids()[i]) << ',' << (it == groups.end() ? "" : csv_escape(it->second.first)) << ','
        << (it == groups.end() ? "" : std::string(to_string(it->second.second)));
      for (Eigen::Index k = 0; k < scores.cols(); ++k) o << ',' << format_double(scores(static_cast<Eigen::Index>(i), k));
      o << '\n';
    }
  });
  const auto dm = visual::group_distance_matrix(emb, by_coll, cap, c.seed);
  write_file(c.out_dir / "distance_matrix.csv", [&](std::ostream& o) { visual::write_distance_matrix(o, dm); });
  const auto dc = visual::group_distance_matrix(emb, by_cat, cap, c.seed);
  write_file(c.out_dir / "distance_matrix_category.csv", [&](std::ostream& o) { visual::write_distance_matrix(o, dc); });

  auto cd_summary = [](const visual::DistanceSummary& s) {
    double intra = 0, inter = 0;
    std::size_t ni = 0, ne = 0;
    for (std::size_t a = 0; a < s.labels.size(); ++a)
      for (std::size_t b = a; b < s.labels.size(); ++b) {
        const auto& cell = s.at(a, b);
        if (!cell.defined) continue;
        (a == b ? intra : inter) += cell.mean;
        ++(a == b ? ni : ne);
      }
    return json{{"mean_intra_cd", ni ? json(intra / double(ni)) : json(nullptr)},
                {"mean_inter_cd", ne ? json(inter / double(ne)) : json(nullptr)}};
  };
  json j;
  j["seed"] = c.seed;
  j["n_objects"] = emb.size();
  j["n_labelled"] = rows.size();
  j["explained_ratio"] = model.explained_ratio;
  j["eigenvalues"] = model.eigenvalues;
  j["pca_iterations"] = model.iterations;
  j["collection"] = cd_summary(dm);
  j["category"] = cd_summary(dc);
  j["collection"]["inter_intra_ratio"] =
      guarded([&]() -> json { return visual::inter_intra_ratio(labelled, coll_labels, cap, c.seed); });
  j["category"]["inter_intra_ratio"] =
      guarded([&]() -> json { return visual::inter_intra_ratio(labelled, cat_labels, cap, c.seed); });
  write_json(c.out_dir / "inter_intra.json", j);
  log_info("visual: " + std::to_string(emb.size()) + " objects, " + std::to_string(model.k()) + " components");
}

inline predict::Window window_key(const RunConfig& c, const char* key, predict::Window fallback) {
  auto v = c.kv.get(key);
  if (!v) return fallback;
  auto w = predict::parse_window(*v);
  if (!w) throw ValidationError(std::string(key) + ": unknown window " + *v);
  return *w;
}

inline predict::ExperimentConfig experiment_config(const RunConfig& c) {
  predict::ExperimentConfig e;
  e.seed = c.seed;
  if (auto t = c.kv.get("predict.target")) {
    auto m = predict::parse_target_mode(*t);
    if (!m) throw ValidationError("predict.target must be primary or secondary: " + *t);
    e.target_mode = *m;
  }
  if (c.kv.contains("predict.windows")) {
    e.windows.clear();
    for (const auto& w : c.kv.get_list("predict.windows")) {
      auto pw = predict::parse_window(trim(w));
      if (!pw) throw ValidationError("predict.windows: unknown window " + w);
      e.windows.push_back(*pw);
    }
  }
  if (c.kv.contains("predict.feature_sets")) {
    e.feature_sets.clear();
    for (const auto& s : c.kv.get_list("predict.feature_sets")) {
      predict::parse_feature_set(trim(s));
      e.feature_sets.emplace_back(trim(s));
    }
  }
  if (c.kv.contains("predict.categories")) {
    e.categories.clear();
    for (const auto& s : c.kv.get_list("predict.categories")) {
      const auto name = trim(s);
      if (name == "All") {
        e.categories.push_back(std::nullopt);
        continue;
      }
      auto cat = parse_category(name);
      if (!cat) throw ValidationError("predict.categories: unknown category " + s);
      e.categories.push_back(*cat);
    }
  }
  e.median_window = window_key(c, "predict.median_window", e.median_window);
  e.table_window = window_key(c, "predict.table_window", e.table_window);
  e.adaboost.n_estimators = static_cast<std::size_t>(c.kv.get_int("predict.n_estimators", 100));
  e.adaboost.learning_rate = c.kv.get_double("predict.learning_rate", 1.0);
  return e;
}

inline void cmd_predict(const RunConfig& c) {
  const auto trades = load_trades(c);
  const auto tls = stats::sale_timelines(trades);
  const auto cfg = experiment_config(c);

  predict::VisualScores visual;
  if (fs::exists(c.embeddings)) {
    const auto emb = visual::load_embeddings(c.embeddings.string());
    visual::PcaModel model;
    const auto model_path = c.out_dir / "pca_model.pca";
    if (fs::exists(model_path)) {
      std::ifstream in(model_path, std::ios::binary);
      model = visual::load_pca(in);
    } else {
      auto o = pca_options(c);
      o.k = predict::kVisualComponents;
      model = visual::fit_pca(emb, o);
    }
    const auto scores = visual::project_all(model, emb);
    for (std::size_t i = 0; i < emb.size(); ++i) {
      std::array<double, predict::kVisualComponents> v{};
      for (Eigen::Index k = 0; k < std::min<Eigen::Index>(scores.cols(), v.size()); ++k)
        v[static_cast<std::size_t>(k)] = scores(static_cast<Eigen::Index>(i), k);
      visual.emplace(emb.ids()[i], v);
    }
  } else if (c.embeddings_explicit) {
    require_file(c.embeddings, "embedding file");
  } else {
    log_warn("no embedding file; visual features are missing");
  }

  const auto rows = predict::build_feature_rows(trades, tls, cfg.median_window, visual.empty() ? nullptr : &visual);
  write_file(c.out_dir / "features.csv", [&](std::ostream& o) { predict::write_feature_rows(o, rows); });
  const auto res = predict::run_experiments(rows, tls, stats::dataset_end(trades), cfg);
  write_file(c.out_dir / "regression_grid.csv", [&](std::ostream& o) { predict::write_regression_grid(o, res.regression); });
  write_file(c.out_dir / "classifier_grid.csv",
             [&](std::ostream& o) { predict::write_classifier_grid(o, res.classification); });
  write_file(c.out_dir / "coefficients_table.csv",
             [&](std::ostream& o) { predict::write_coefficient_table(o, res.table); });

  json j;
  j["seed"] = c.seed;
  j["n_feature_rows"] = rows.size();
  j["target"] = std::string(predict::to_string(cfg.target_mode));
  j["median_window"] = std::string(predict::to_string(cfg.median_window));
  j["table_window"] = std::string(predict::to_string(cfg.table_window));
  auto& models = j["table_models"] = json::array();
  for (const auto& m : res.table) {
    json mj{{"feature_set", m.feature_set}, {"status", m.status}};
    if (m.report) {
      mj["r2"] = m.report->r2;
      mj["r2_adj"] = m.report->r2_adj;
      mj["n_samples"] = m.report->n_samples;
      mj["n_collections"] = m.report->n_collections;
    }
    models.push_back(mj);
  }
  std::size_t ok_reg = 0, ok_cls = 0;
  for (const auto& r : res.regression) ok_reg += r.report.has_value();
  for (const auto& r : res.classification) ok_cls += r.report.has_value();
  j["regression_cells"] = {{"total", res.regression.size()}, {"fitted", ok_reg}};
  j["classifier_cells"] = {{"total", res.classification.size()}, {"fitted", ok_cls}};
  write_json(c.out_dir / "predict_summary.json", j);
  log_info("predict: " + std::to_string(rows.size()) + " feature rows, " + std::to_string(ok_reg) + "/" +
           std::to_string(res.regression.size()) + " regressions fitted");
}

/// Copies every top-level CSV/JSON artifact of the output directory (inputs
/// excluded) into report/ and writes report/manifest.json listing the inputs
/// and artifacts with SHA-256 hashes, the config hash, tool version and seed.
inline void cmd_report(const RunConfig& c) {
  if (!fs::is_directory(c.out_dir)) throw ValidationError("output directory not found: " + c.out_dir.string());
  const fs::path report = c.out_dir / "report";
  fs::create_directories(report);

  std::vector<fs::path> inputs;
  for (const auto& p : {c.trades, c.rates, c.categories, c.embeddings})
    if (fs::exists(p)) inputs.push_back(p);
  auto is_input = [&](const fs::path& p) {
    return std::any_of(inputs.begin(), inputs.end(), [&](const fs::path& q) { return fs::equivalent(p, q); });
  };
  std::vector<fs::path> artifacts;
  for (const auto& e : fs::directory_iterator(c.out_dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension();
    if ((ext == ".csv" || ext == ".json") && !is_input(e.path())) artifacts.push_back(e.path());
  }
  std::sort(artifacts.begin(), artifacts.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  for (const auto& e : fs::directory_iterator(report))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") fs::remove(e.path());

  json j;
  j["tool"] = kToolName;
  j["version"] = kVersion;
  j["seed"] = c.seed;
  j["config_hash"] = c.config_hash();
  auto& in = j["inputs"] = json::array();
  for (const auto& p : inputs)
    in.push_back({{"file", p.filename().string()}, {"sha256", sha256_file(p)}, {"bytes", fs::file_size(p)}});
  auto& arts = j["artifacts"] = json::array();
  for (const auto& p : artifacts) {
    fs::copy_file(p, report / p.filename(), fs::copy_options::overwrite_existing);
    arts.push_back({{"file", p.filename().string()}, {"sha256", sha256_file(p)}, {"bytes", fs::file_size(p)}});
  }
  write_json(report / "manifest.json", j);
  log_info("report: " + std::to_string(artifacts.size()) + " artifacts -> " + report.string());
}

// ---------------------------------------------------------------------------
// Entry point

inline std::string usage() {
  std::string s = "usage: nftmarket <subcommand> [--config PATH] [--seed N] [--out DIR] [options]\nsubcommands:";
  for (auto sc : kSubcommands) s += " " + std::string(sc);
  return s + "\nrun `nftmarket <subcommand> --help` for options\n";
}

/// Runs one subcommand; args excludes the program name. Returns the exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    (args.empty() ? err : out) << usage();
    return args.empty() ? kExitUsage : kExitOk;
  }
  if (args[0] == "--version") {
    out << kToolName << ' ' << kVersion << '\n';
    return kExitOk;
  }
  const std::string sub = args[0];
  if (std::find(kSubcommands.begin(), kSubcommands.end(), sub) == kSubcommands.end()) {
    err << "unknown subcommand: " << sub << '\n' << usage();
    return kExitUsage;
  }

  CLI::App app{"NFT market analytics: " + sub, std::string(kToolName) + " " + sub};
  Flags f;
  std::uint64_t seed = 0;
  app.add_option("--config", f.config, "key=value config file");
  auto* seed_opt = app.add_option("--seed", seed, "random seed, recorded in every output");
  app.add_option("--out", f.out, "output directory (default: out)");
  app.add_option("--trades", f.trades, "raw trades CSV/JSONL (default: <out>/trades.csv)");
  app.add_option("--rates", f.rates, "exchange rates CSV (default: <out>/rates.csv)");
  app.add_option("--categories", f.categories, "category map and naming rules (default: <out>/categories.cfg)");
  app.add_option("--embeddings", f.embeddings, "EMB1 embedding file (default: <out>/embeddings.emb)");
  app.add_option("--store", f.store, "canonical trade store (default: <out>/trades_clean.csv)");
  app.add_option("--set", f.sets, "config override key=value (repeatable)");

  std::vector<std::string> rest(args.begin() + 1, args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "[ERROR] " << e.what() << '\n';
    return kExitValidation;
  }
  if (seed_opt->count()) f.seed = seed;

  try {
    const auto cfg = resolve(f);
    if (sub == "synth") cmd_synth(cfg);
    else if (sub == "ingest") cmd_ingest(cfg);
    else if (sub == "stats") cmd_stats(cfg);
    else if (sub == "network") cmd_network(cfg);
    else if (sub == "visual") cmd_visual(cfg);
    else if (sub == "predict") cmd_predict(cfg);
    else cmd_report(cfg);
  } catch (const ValidationError& e) {
    err << "[ERROR] " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "[ERROR] " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace nftmarket::cli
