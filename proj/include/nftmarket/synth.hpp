#pragma once

// Synthetic NFT markets with planted, known statistics: power-law collection
// sizes, sales per NFT and trader activity, home-collection specialization,
// log-normal prices and clustered image embeddings.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <random>

#include "nftmarket/ingest.hpp"
#include "nftmarket/visual.hpp"

namespace nftmarket::synth {

/// Integers in [xmin, xmax] with P(x) proportional to x^exponent, sampled by
/// inverse CDF over a precomputed cumulative table.
class DiscretePowerLaw {
 public:
  DiscretePowerLaw(double exponent, std::int64_t xmin, std::int64_t xmax)
      : exponent_(exponent), xmin_(xmin) {
    if (!(exponent < -1.0)) throw ValidationError("power-law exponent must be < -1");
    if (xmin < 1 || xmax < xmin) throw ValidationError("power-law support must satisfy 1 <= xmin <= xmax");
    cdf_.resize(static_cast<std::size_t>(xmax - xmin + 1));
    double acc = 0;
    for (std::size_t i = 0; i < cdf_.size(); ++i) {
      acc += std::pow(static_cast<double>(xmin + static_cast<std::int64_t>(i)), exponent);
      cdf_[i] = acc;
    }
    for (auto& c : cdf_) c /= acc;
    cdf_.back() = 1.0;
  }

  template <class Rng>
  std::int64_t operator()(Rng& rng) const {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return xmin_ + static_cast<std::int64_t>(std::min<std::size_t>(it - cdf_.begin(), cdf_.size() - 1));
  }

  double exponent() const { return exponent_; }
  std::int64_t xmin() const { return xmin_; }
  std::int64_t xmax() const { return xmin_ + static_cast<std::int64_t>(cdf_.size()) - 1; }

 private:
  double exponent_;
  std::int64_t xmin_;
  std::vector<double> cdf_;
};

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t target_trades = 100000;  // collections are drawn until this many sales exist
  std::size_t n_traders = 20000;
  double size_exponent = -1.5;     // NFTs per collection
  std::int64_t size_xmax = 10000;
  double sales_exponent = -1.4;    // sales per NFT, including the primary sale
  std::int64_t sales_xmax = 100;
  double trader_exponent = -1.85;  // trader activity weights
  std::int64_t trader_xmax = 10000;
  double theta = 0.5;              // probability a participant is drawn from the collection's home traders
  double price_log_mean_lo = std::log(5.0);
  double price_log_mean_hi = std::log(500.0);
  double price_log_sd = 1.0;
  int start_day = 17532;  // 2018-01-01
  int span_days = 365;
  double resale_gap_days = 14.0;  // mean of the geometric gap between consecutive sales
  double dup_rate = 0.0;          // fraction of trades also reported by a lower-priority source
  std::size_t objects_per_collection = 8;  // NFTs per collection that get an embedding
  std::uint32_t embedding_dim = visual::kEmbeddingDim;
  double embedding_spread = 0.3;
  double embedding_active_fraction = 0.1;  // share of dimensions a cluster center occupies

  void validate() const {
    auto bad = [](const std::string& m) { return ValidationError("invalid synth config: " + m); };
    if (!(size_exponent < -1 && sales_exponent < -1 && trader_exponent < -1)) throw bad("exponents must be < -1");
    if (!(theta >= 0 && theta <= 1)) throw bad("theta must be in [0, 1]");
    if (target_trades == 0) throw bad("target_trades must be positive");
    if (span_days <= 0) throw bad("span_days must be positive");
    if (!(resale_gap_days >= 1)) throw bad("resale_gap_days must be >= 1");
    if (!(dup_rate >= 0 && dup_rate <= 1)) throw bad("dup_rate must be in [0, 1]");
    if (embedding_dim == 0) throw bad("embedding_dim must be positive");
    if (!(price_log_sd >= 0) || price_log_mean_hi < price_log_mean_lo) throw bad("price parameters");
  }
};

/// Reads `synth.<field>` keys over the defaults.
inline SynthConfig load_synth_config(const KeyValueConfig& kv, SynthConfig base = {}) {
  auto d = [&](const char* key, double& v) { v = kv.get_double(std::string("synth.") + key, v); };
  auto i = [&](const char* key, auto& v) {
    v = static_cast<std::remove_reference_t<decltype(v)>>(
        kv.get_int(std::string("synth.") + key, static_cast<std::int64_t>(v)));
  };
  i("target_trades", base.target_trades);
  i("n_traders", base.n_traders);
  d("size_exponent", base.size_exponent);
  i("size_xmax", base.size_xmax);
  d("sales_exponent", base.sales_exponent);
  i("sales_xmax", base.sales_xmax);
  d("trader_exponent", base.trader_exponent);
  i("trader_xmax", base.trader_xmax);
  d("theta", base.theta);
  d("price_log_mean_lo", base.price_log_mean_lo);
  d("price_log_mean_hi", base.price_log_mean_hi);
  d("price_log_sd", base.price_log_sd);
  i("start_day", base.start_day);
  i("span_days", base.span_days);
  d("resale_gap_days", base.resale_gap_days);
  d("dup_rate", base.dup_rate);
  i("objects_per_collection", base.objects_per_collection);
  i("embedding_dim", base.embedding_dim);
  d("embedding_spread", base.embedding_spread);
  d("embedding_active_fraction", base.embedding_active_fraction);
  return base;
}

struct CollectionTruth {
  std::string name;
  Category category = Category::Other;
  std::int64_t size = 0;
  double price_log_mean = 0;
  std::string currency;
  std::size_t n_sales = 0;
};

struct Market {
  std::vector<RawTrade> trades;  // chronological
  ingest::ExchangeRateTable rates;
  ingest::IngestConfig ingest_config;
  visual::EmbeddingMatrix embeddings{visual::kEmbeddingDim};
  std::vector<CollectionTruth> collections;
  std::vector<std::string> traders;
  std::vector<std::size_t> home;  // trader index -> collection index
  std::vector<std::int64_t> trader_weight;
  std::vector<std::int64_t> sales_per_nft;

  std::map<std::string, std::string> home_of() const {
    std::map<std::string, std::string> out;
    for (std::size_t i = 0; i < traders.size(); ++i) out.emplace(traders[i], collections[home[i]].name);
    return out;
  }
};

namespace detail {

/// Unique, normalization-stable name for index i: consonant-vowel syllables.
inline std::string syllable_name(std::size_t i) {
  static constexpr std::string_view cons = "bdfgklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  const std::size_t base = cons.size() * vowels.size();
  std::string s;
  std::size_t v = i + base;  // at least two syllables
  while (v > 0) {
    const auto syl = v % base;
    s += cons[syl / vowels.size()];
    s += vowels[syl % vowels.size()];
    v /= base;
  }
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::string hex_id(std::string_view prefix, std::uint64_t salt, std::uint64_t i) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(splitmix64(i ^ salt)));
  return std::string(prefix) + buf;
}

/// Weighted choice over a cumulative weight table.
template <class Rng>
std::size_t pick(const std::vector<double>& cum, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, cum.back())(rng);
  const auto it = std::upper_bound(cum.begin(), cum.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), cum.size() - 1);
}

}  // namespace detail

/// Deterministic given cfg.seed. Collection sizes and sales per NFT come from
/// discrete power laws; every collection has home traders, and each trade
/// participant is drawn from the home traders with probability theta and from
/// all traders otherwise, weighted by activity. The seller of a secondary sale
/// is the previous owner.
inline Market generate_market(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  Market m;
  m.embeddings = visual::EmbeddingMatrix(cfg.embedding_dim);

  const DiscretePowerLaw size_law(cfg.size_exponent, 1, cfg.size_xmax);
  const DiscretePowerLaw sales_law(cfg.sales_exponent, 1, cfg.sales_xmax);
  const DiscretePowerLaw trader_law(cfg.trader_exponent, 1, cfg.trader_xmax);

  // collections and per-NFT sale counts, until the target is reached
  struct Nft {
    std::size_t collection;
    std::int64_t n_sales;
  };
  std::vector<Nft> nfts;
  std::size_t total = 0;
  static constexpr std::array<const char*, 2> currencies = {"ETH", "WAX"};
  static constexpr std::array<Category, 5> cats = {Category::Art, Category::Collectible, Category::Games,
                                                   Category::Metaverse, Category::Utility};
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  while (total < cfg.target_trades) {
    CollectionTruth c;
    c.name = detail::syllable_name(m.collections.size());
    c.category = cats[static_cast<std::size_t>(unif(rng) * cats.size()) % cats.size()];
    c.size = size_law(rng);
    c.price_log_mean = cfg.price_log_mean_lo + unif(rng) * (cfg.price_log_mean_hi - cfg.price_log_mean_lo);
    c.currency = currencies[unif(rng) < 0.8 ? 0 : 1];
    for (std::int64_t k = 0; k < c.size && total < cfg.target_trades; ++k) {
      auto s = std::min<std::int64_t>(sales_law(rng), static_cast<std::int64_t>(cfg.target_trades - total));
      nfts.push_back({m.collections.size(), s});
      m.sales_per_nft.push_back(s);
      total += static_cast<std::size_t>(s);
    }
    c.size = static_cast<std::int64_t>(std::count_if(nfts.begin(), nfts.end(), [&](const Nft& n) {
      return n.collection == m.collections.size();
    }));
    m.ingest_config.categories.set(c.name, c.category);
    m.collections.push_back(std::move(c));
  }
  const std::size_t n_coll = m.collections.size();
  if (cfg.n_traders < 2 * n_coll)
    throw ValidationError("infeasible synth config: " + std::to_string(n_coll) + " collections need at least " +
                          std::to_string(2 * n_coll) + " traders");

  // traders: the first 2 * n_coll cover every collection twice, the rest get random homes
  m.traders.resize(cfg.n_traders);
  m.home.resize(cfg.n_traders);
  m.trader_weight.resize(cfg.n_traders);
  std::vector<std::vector<double>> home_cum(n_coll);
  std::vector<std::vector<std::size_t>> home_members(n_coll);
  std::vector<double> global_cum;
  const std::uint64_t salt = detail::splitmix64(cfg.seed);
  for (std::size_t i = 0; i < cfg.n_traders; ++i) {
    m.traders[i] = detail::hex_id("0x", salt, i);
    m.home[i] = i < 2 * n_coll ? i % n_coll : static_cast<std::size_t>(unif(rng) * double(n_coll)) % n_coll;
    m.trader_weight[i] = trader_law(rng);
    const auto w = static_cast<double>(m.trader_weight[i]);
    global_cum.push_back((global_cum.empty() ? 0.0 : global_cum.back()) + w);
    auto& hc = home_cum[m.home[i]];
    hc.push_back((hc.empty() ? 0.0 : hc.back()) + w);
    home_members[m.home[i]].push_back(i);
  }
  auto draw_trader = [&](std::size_t coll, std::optional<std::size_t> exclude) {
    for (int attempt = 0;; ++attempt) {
      const bool home = unif(rng) < cfg.theta;
      const std::size_t t = home ? home_members[coll][detail::pick(home_cum[coll], rng)] : detail::pick(global_cum, rng);
      if (!exclude || t != *exclude) return t;
      if (attempt > 1000) throw Error("could not draw a distinct counterparty");
    }
  };

  // embedding cluster centers: sparse non-negative directions
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<float>> centers(n_coll, std::vector<float>(cfg.embedding_dim, 0.0f));
  for (auto& c : centers)
    for (auto& v : c)
      if (unif(rng) < cfg.embedding_active_fraction) v = static_cast<float>(1.0 + std::abs(gauss(rng)));

  // sales
  const Timestamp start = static_cast<Timestamp>(cfg.start_day) * kSecondsPerDay;
  const Timestamp span = static_cast<Timestamp>(cfg.span_days) * kSecondsPerDay;
  std::geometric_distribution<int> gap_days(1.0 / cfg.resale_gap_days);
  std::uniform_int_distribution<Timestamp> in_span(0, span - 1), in_day(0, kSecondsPerDay - 1);
  std::vector<std::size_t> embedded(n_coll, 0);
  Timestamp last_ts = start;
  struct Pending {
    RawTrade t;
    double usd;
  };
  std::vector<Pending> pending;
  pending.reserve(total);
  for (std::size_t k = 0; k < nfts.size(); ++k) {
    const auto& nft = nfts[k];
    auto& coll = m.collections[nft.collection];
    coll.n_sales += static_cast<std::size_t>(nft.n_sales);
    const std::string nft_id = detail::hex_id("nft", salt ^ 0x5eedULL, k);
    const std::string url = "https://objects.example/" + nft_id + ".png";
    if (embedded[nft.collection] < cfg.objects_per_collection) {
      ++embedded[nft.collection];
      std::vector<float> v(cfg.embedding_dim);
      const auto& c = centers[nft.collection];
      for (std::size_t d = 0; d < v.size(); ++d)
        v[d] = std::max(0.0f, c[d] + static_cast<float>(cfg.embedding_spread * gauss(rng)));
      if (std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; })) v[0] = 1.0f;
      m.embeddings.add(url, v);
    }
    const double quality = 0.5 * gauss(rng);
    Timestamp ts = start + in_span(rng);
    std::size_t owner = draw_trader(nft.collection, std::nullopt);
    for (std::int64_t s = 0; s < nft.n_sales; ++s) {
      if (s > 0) ts += static_cast<Timestamp>(gap_days(rng)) * kSecondsPerDay + in_day(rng) + 1;
      const std::size_t buyer = draw_trader(nft.collection, owner);
      const double usd = std::exp(coll.price_log_mean + quality + cfg.price_log_sd * gauss(rng));
      RawTrade t;
      t.buyer = m.traders[buyer];
      t.seller = m.traders[owner];
      t.ts = ts;
      t.collection_raw = coll.name;
      t.nft_id = nft_id;
      t.url = url;
      t.currency = coll.currency;
      t.source = coll.currency == "WAX" ? Source::Atomic : Source::OpenSea;
      pending.push_back({std::move(t), usd});
      last_ts = std::max(last_ts, ts);
      owner = buyer;
    }
  }

  // daily exchange rates as multiplicative random walks
  const Day first_day = cfg.start_day, last_day = utc_day(last_ts);
  std::map<std::string, std::vector<double>> rate_series;
  for (const char* cur : currencies) {
    double r = std::string_view(cur) == "ETH" ? 1000.0 : 0.1;
    auto& series = rate_series[cur];
    for (Day d = first_day; d <= last_day; ++d) {
      series.push_back(r);
      m.rates.add({d, cur, r});
      r *= std::exp(0.03 * gauss(rng));
    }
  }
  for (auto& p : pending) {
    p.t.amount = p.usd / rate_series.at(p.t.currency)[static_cast<std::size_t>(utc_day(p.t.ts) - first_day)];
    m.trades.push_back(p.t);
    if (cfg.dup_rate > 0 && unif(rng) < cfg.dup_rate) {
      RawTrade dup = p.t;
      dup.source = Source::Other;
      m.trades.push_back(std::move(dup));
    }
  }
  std::stable_sort(m.trades.begin(), m.trades.end(),
                   [](const RawTrade& a, const RawTrade& b) { return a.ts < b.ts; });
  return m;
}

inline nlohmann::ordered_json truth_json(const SynthConfig& cfg, const Market& m) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["config"] = {{"target_trades", cfg.target_trades},   {"n_traders", cfg.n_traders},
                 {"size_exponent", cfg.size_exponent},   {"size_xmax", cfg.size_xmax},
                 {"sales_exponent", cfg.sales_exponent}, {"sales_xmax", cfg.sales_xmax},
                 {"trader_exponent", cfg.trader_exponent}, {"trader_xmax", cfg.trader_xmax},
                 {"theta", cfg.theta},                   {"span_days", cfg.span_days},
                 {"resale_gap_days", cfg.resale_gap_days}, {"dup_rate", cfg.dup_rate},
                 {"embedding_dim", cfg.embedding_dim},   {"embedding_spread", cfg.embedding_spread}};
  j["n_trades"] = m.trades.size();
  j["n_nfts"] = m.sales_per_nft.size();
  j["n_collections"] = m.collections.size();
  j["n_embeddings"] = m.embeddings.size();
  auto& cs = j["collections"] = nlohmann::ordered_json::array();
  for (const auto& c : m.collections)
    cs.push_back({{"name", c.name},
                  {"category", std::string(to_string(c.category))},
                  {"size", c.size},
                  {"n_sales", c.n_sales},
                  {"currency", c.currency},
                  {"price_log_mean", c.price_log_mean}});
  return j;
}

/// Writes trades.csv, rates.csv, categories.cfg, embeddings.emb,
/// synth_homes.csv (trader,home_collection) and synth_truth.json into dir.
inline std::vector<std::filesystem::path> write_market(const std::filesystem::path& dir, const SynthConfig& cfg,
                                                       const Market& m) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto open = [&](const char* name, std::ios::openmode mode = std::ios::out) {
    written.push_back(dir / name);
    std::ofstream f(written.back(), mode | std::ios::trunc);
    if (!f) throw Error("cannot write " + written.back().string());
    return f;
  };
  {
    auto f = open("trades.csv");
    ingest::write_trades_csv(f, m.trades);
  }
  {
    auto f = open("rates.csv");
    m.rates.write_csv(f);
  }
  {
    auto f = open("categories.cfg");
    ingest::write_ingest_config(f, m.ingest_config);
  }
  {
    auto f = open("embeddings.emb", std::ios::out | std::ios::binary);
    visual::write_container(f, m.embeddings);
  }
  {
    auto f = open("synth_homes.csv");
    f << "trader,home_collection\n";
    for (std::size_t i = 0; i < m.traders.size(); ++i) f << m.traders[i] << ',' << m.collections[m.home[i]].name << '\n';
  }
  {
    auto f = open("synth_truth.json");
    f << truth_json(cfg, m).dump(2) << '\n';
  }
  return written;
}

}  // namespace nftmarket::synth
