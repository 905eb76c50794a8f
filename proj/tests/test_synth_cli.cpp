#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "nftmarket/cli.hpp"

using namespace nftmarket;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("nftmarket_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

synth::SynthConfig small_config(std::uint64_t seed, double theta = 0.5) {
  synth::SynthConfig c;
  c.seed = seed;
  c.target_trades = 6000;
  c.n_traders = 3000;
  c.size_xmax = 400;
  c.theta = theta;
  c.embedding_dim = 32;
  return c;
}

std::vector<TradeRecord> cleaned(const synth::Market& m) {
  return ingest::clean(m.trades, m.rates, m.ingest_config);
}

double home_modularity(const synth::Market& m) {
  const auto g = net::build_trader_network(cleaned(m)).graph;
  return net::modularity(g, net::make_partition(g, m.home_of()));
}

int run_cli(std::vector<std::string> args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int rc = cli::run(args, out, err);
  if (err_text) *err_text = err.str();
  return rc;
}

}  // namespace

TEST(DiscretePowerLaw, FrequenciesMatchPmf) {
  synth::DiscretePowerLaw d(-2.0, 1, 4);
  const double z = 1 + 1 / 4.0 + 1 / 9.0 + 1 / 16.0;
  std::mt19937_64 rng(1);
  std::map<std::int64_t, int> hist;
  const int n = 200000;
  for (int i = 0; i < n; ++i) ++hist[d(rng)];
  for (std::int64_t k = 1; k <= 4; ++k) {
    const double p = 1.0 / double(k * k) / z;
    EXPECT_NEAR(hist[k] / double(n), p, 4 * std::sqrt(p * (1 - p) / n)) << k;
  }
  EXPECT_EQ(hist.size(), 4u);
  EXPECT_THROW(synth::DiscretePowerLaw(-1.0, 1, 10), ValidationError);
  EXPECT_THROW(synth::DiscretePowerLaw(-2.0, 5, 4), ValidationError);
}

TEST(Synth, ConfigValidation) {
  auto c = small_config(1);
  c.theta = 1.5;
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_config(1);
  c.n_traders = 4;
  EXPECT_THROW(synth::generate_market(c), ValidationError);
  std::istringstream in("synth.theta = 0.25\nsynth.n_traders = 77\n");
  auto loaded = synth::load_synth_config(KeyValueConfig::parse(in));
  EXPECT_EQ(loaded.theta, 0.25);
  EXPECT_EQ(loaded.n_traders, 77u);
}

TEST(Synth, SameSeedSameFiles) {
  const auto cfg = small_config(11);
  const auto a = scratch("synth_a"), b = scratch("synth_b");
  const auto files = synth::write_market(a, cfg, synth::generate_market(cfg));
  synth::write_market(b, cfg, synth::generate_market(cfg));
  ASSERT_FALSE(files.empty());
  for (const auto& f : files) EXPECT_EQ(slurp(f), slurp(b / f.filename())) << f;
  const auto other = synth::generate_market(small_config(12));
  EXPECT_NE(other.trades, synth::generate_market(cfg).trades);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Synth, IngestsWithoutDrops) {
  auto cfg = small_config(3);
  const auto m = synth::generate_market(cfg);
  EXPECT_GE(m.trades.size(), cfg.target_trades);
  std::stringstream buf;
  ingest::write_trades_csv(buf, m.trades);
  auto parsed = ingest::parse_trades(buf, ingest::TradeFormat::Csv, {true});
  EXPECT_EQ(parsed.dropped(), 0u);
  EXPECT_EQ(parsed.trades.size(), m.trades.size());
  ingest::IngestSummary s;
  auto recs = ingest::clean(parsed.trades, m.rates, m.ingest_config, &s);
  EXPECT_EQ(s.missing_rate, 0u);
  EXPECT_EQ(s.duplicates, 0u);
  // every collection name survives normalization unchanged
  for (const auto& r : recs) EXPECT_EQ(r.collection, r.collection_raw);
}

TEST(Synth, DuplicatesAreRemovedByIngest) {
  auto cfg = small_config(4);
  cfg.dup_rate = 0.1;
  const auto m = synth::generate_market(cfg);
  ingest::IngestSummary s;
  auto recs = ingest::clean(m.trades, m.rates, m.ingest_config, &s);
  EXPECT_GT(s.duplicates, 0u);
  for (const auto& r : recs) EXPECT_NE(r.source, Source::Other);
}

TEST(Synth, FullHomeBiasGivesFullSpecialization) {
  const auto m = synth::generate_market(small_config(5, 1.0));
  for (const auto& [trader, s] : net::specialization_all(cleaned(m))) {
    EXPECT_EQ(s.top_share, 1.0) << trader;
  }
}

TEST(Synth, ModularityGrowsWithHomeBias) {
  const double q2 = home_modularity(synth::generate_market(small_config(6, 0.2)));
  const double q5 = home_modularity(synth::generate_market(small_config(6, 0.5)));
  const double q9 = home_modularity(synth::generate_market(small_config(6, 0.9)));
  EXPECT_LT(q2, q5);
  EXPECT_LT(q5, q9);
}

TEST(Synth, EmbeddingsClusterByCollection) {
  const auto m = synth::generate_market(small_config(8));
  ASSERT_GT(m.embeddings.size(), 0u);
  std::map<std::string, std::string> groups;
  for (const auto& t : m.trades) groups.emplace(t.url, t.collection_raw);
  auto s = visual::group_distance_matrix(m.embeddings, groups);
  double intra = 0, inter = 0;
  std::size_t ni = 0, nx = 0;
  for (std::size_t a = 0; a < s.labels.size(); ++a)
    for (std::size_t b = 0; b < s.labels.size(); ++b) {
      const auto& c = s.at(a, b);
      if (!c.defined) continue;
      (a == b ? intra : inter) += c.mean;
      ++(a == b ? ni : nx);
    }
  ASSERT_GT(ni, 0u);
  EXPECT_LT(intra / double(ni), inter / double(nx));
  EXPECT_EQ(m.embeddings.negative_components(), 0u);
}

TEST(Hash, Sha256KnownVector) {
  EXPECT_EQ(cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Cli, UsageAndUnknownSubcommand) {
  EXPECT_EQ(run_cli({}), cli::kExitUsage);
  EXPECT_EQ(run_cli({"frobnicate"}), cli::kExitUsage);
  EXPECT_EQ(run_cli({"--version"}), cli::kExitOk);
  EXPECT_EQ(run_cli({"stats", "--no-such-flag"}), cli::kExitValidation);
}

TEST(Cli, MissingTradesFileNamesThePath) {
  const auto dir = scratch("cli_missing");
  const auto missing = (dir / "nope.csv").string();
  std::string err;
  EXPECT_EQ(run_cli({"ingest", "--out", dir.string(), "--trades", missing}, &err), cli::kExitValidation);
  EXPECT_NE(err.find(missing), std::string::npos) << err;
  EXPECT_EQ(run_cli({"report", "--out", (dir / "absent").string()}), cli::kExitValidation);
  fs::remove_all(dir);
}

TEST(Cli, PipelineReportIsReproducible) {
  const auto dir = scratch("cli_pipeline");
  const std::vector<std::string> common = {"--out", dir.string(), "--seed", "3", "--set", "synth.target_trades=4000",
                                           "--set", "synth.n_traders=2000", "--set", "synth.size_xmax=300",
                                           "--set", "synth.embedding_dim=24", "--set", "network.null_n=5",
                                           "--set", "predict.windows=1w,1m", "--set", "predict.n_estimators=5"};
  auto with = [&](std::string sub) {
    std::vector<std::string> a{std::move(sub)};
    a.insert(a.end(), common.begin(), common.end());
    return a;
  };
  for (const char* sub : {"synth", "ingest", "stats", "network", "visual", "predict", "report"}) {
    std::string err;
    ASSERT_EQ(run_cli(with(sub), &err), cli::kExitOk) << sub << ": " << err;
  }
  const auto first = slurp(dir / "report" / "manifest.json");
  ASSERT_EQ(run_cli(with("report")), cli::kExitOk);
  EXPECT_EQ(first, slurp(dir / "report" / "manifest.json"));

  const auto manifest = nlohmann::json::parse(first);
  EXPECT_EQ(manifest["seed"], 3);
  EXPECT_EQ(manifest["tool"], "nftmarket");
  std::set<std::string> files;
  for (const auto& a : manifest["artifacts"]) {
    files.insert(a["file"].get<std::string>());
    EXPECT_EQ(a["sha256"], cli::sha256_file(dir / "report" / a["file"].get<std::string>()));
  }
  for (const char* f : {"trades_clean.csv", "stats_daily.csv", "network_metrics.json", "regression_grid.csv",
                        "classifier_grid.csv", "coefficients_table.csv", "inter_intra.json"})
    EXPECT_TRUE(files.count(f)) << f;
  EXPECT_FALSE(files.count("trades.csv"));
  fs::remove_all(dir);
}
