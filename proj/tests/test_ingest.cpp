#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "nftmarket/ingest.hpp"

using namespace nftmarket;
using namespace nftmarket::ingest;

namespace {

const std::string kHeader = "buyer,seller,ts,collection,nft_id,url,currency,amount,source\n";

ParseResult parse_csv(const std::string& body, ParseOptions opts = {}) {
  std::istringstream in(kHeader + body);
  return parse_trades(in, TradeFormat::Csv, opts);
}

RawTrade trade(std::string nft, Timestamp ts, std::string buyer, std::string seller, Source src) {
  RawTrade t;
  t.nft_id = std::move(nft);
  t.ts = ts;
  t.buyer = std::move(buyer);
  t.seller = std::move(seller);
  t.source = src;
  t.collection_raw = "Coll";
  t.currency = "ETH";
  t.amount = 1;
  return t;
}

}  // namespace

TEST(Text, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5}) {
    EXPECT_EQ(*parse_double(format_double(v)), v);
  }
  EXPECT_EQ(format_double(3.0), "3");
}

TEST(Text, CsvLineQuoting) {
  auto cols = split_csv_line(R"(a,"b,c","d""e",)");
  ASSERT_TRUE(cols);
  EXPECT_EQ(*cols, (std::vector<std::string>{"a", "b,c", "d\"e", ""}));
  EXPECT_FALSE(split_csv_line(R"(a,"unterminated)"));
  EXPECT_EQ(csv_escape("x,y"), "\"x,y\"");
}

TEST(Dates, UtcDayFloorsNegativeTimes) {
  EXPECT_EQ(utc_day(0), 0);
  EXPECT_EQ(utc_day(86399), 0);
  EXPECT_EQ(utc_day(86400), 1);
  EXPECT_EQ(utc_day(-1), -1);
  EXPECT_EQ(format_date(17532), "2018-01-01");
  EXPECT_EQ(*parse_date("2018-01-01"), 17532);
  EXPECT_FALSE(parse_date("2018-13-01"));
}

TEST(Config, KeyValueParsing) {
  std::istringstream in("# c\nx = 1\nlist = a, b\nlist = c\ncategory.Foo = Art\n");
  auto cfg = KeyValueConfig::parse(in);
  EXPECT_EQ(cfg.get_int("x", 0), 1);
  EXPECT_EQ(cfg.get_list("list"), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(cfg.with_prefix("category.").at("Foo"), "Art");
  std::istringstream bad("novalue\n");
  EXPECT_THROW(KeyValueConfig::parse(bad), ValidationError);
}

TEST(ParseTrades, ThreeValidRowsInOrder) {
  auto r = parse_csv(
      "a,b,10,C,n1,,ETH,1,OpenSea\n"
      "c,d,11,C,n2,http://x,ETH,2.5,Atomic\n"
      "e,f,12,C,n3,,WAX,0,Other\n");
  ASSERT_EQ(r.trades.size(), 3u);
  EXPECT_EQ(r.trades[0].nft_id, "n1");
  EXPECT_EQ(r.trades[1].url, "http://x");
  EXPECT_EQ(r.trades[2].amount, 0.0);
  EXPECT_EQ(r.dropped(), 0u);
}

TEST(ParseTrades, MissingSellerIsDroppedAndCounted) {
  auto r = parse_csv("a,,10,C,n1,,ETH,1,OpenSea\na,b,10,C,n1,,ETH,1,OpenSea\n");
  EXPECT_EQ(r.trades.size(), 1u);
  EXPECT_EQ(r.dropped_empty, 1u);
}

TEST(ParseTrades, EmptyStream) {
  std::istringstream in("");
  auto r = parse_trades(in, TradeFormat::Csv);
  EXPECT_TRUE(r.trades.empty());
  EXPECT_EQ(r.dropped(), 0u);
}

TEST(ParseTrades, MalformedRowsCountedOrFatalInStrictMode) {
  const std::string body = "a,b,10,C,n1,,ETH,1,OpenSea\na,b,-5,C,n1,,ETH,1,OpenSea\na,b,10,C,n1,,ETH,x,Nowhere\n";
  auto r = parse_csv(body);
  EXPECT_EQ(r.trades.size(), 1u);
  EXPECT_EQ(r.malformed, 2u);
  try {
    parse_csv(body, {true});
    FAIL() << "strict mode should throw";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(ParseTrades, BadHeaderRejected) {
  std::istringstream in("buyer,seller\n");
  EXPECT_THROW(parse_trades(in, TradeFormat::Csv), ValidationError);
}

TEST(ParseTrades, JsonlMatchesCsv) {
  std::istringstream in(
      R"({"buyer":"a","seller":"b","ts":10,"collection":"C","nft_id":"n1","currency":"ETH","amount":1.5,"source":"OpenSea"})"
      "\n{not json}\n");
  auto r = parse_trades(in, TradeFormat::Jsonl);
  ASSERT_EQ(r.trades.size(), 1u);
  EXPECT_EQ(r.trades[0].amount, 1.5);
  EXPECT_EQ(r.trades[0].url, "");
  EXPECT_EQ(r.malformed, 1u);
  auto c = parse_csv("a,b,10,C,n1,,ETH,1.5,OpenSea\n");
  EXPECT_EQ(c.trades[0], r.trades[0]);
}

TEST(ParseTrades, CsvWriteReadRoundTrip) {
  std::vector<RawTrade> v = {trade("n,1", 5, "a", "b", Source::Decentraland), trade("n2", 6, "c", "d\"q", Source::Other)};
  v[0].url = "u";
  v[1].amount = 0.1 + 0.2;
  std::ostringstream out;
  write_trades_csv(out, v);
  std::istringstream in(out.str());
  auto r = parse_trades(in, TradeFormat::Csv, {true});
  EXPECT_EQ(r.trades, v);
}

TEST(Normalize, StatedExamples) {
  EXPECT_EQ(normalize_collection("cryptokitties-123"), "Cryptokitties");
  EXPECT_EQ(normalize_collection("aavegotchiwearables"), "Aavegotchi");
  EXPECT_EQ(normalize_collection("xxxxx777"), "Miscellanea");
  EXPECT_EQ(normalize_collection("1234"), "Miscellanea");
  EXPECT_EQ(normalize_collection("Untitled #4"), "Miscellanea");
  EXPECT_EQ(normalize_collection("SoRaRe"), "Sorare");
}

TEST(Normalize, OutputIsCapitalizedLettersOnly) {
  std::mt19937 rng(3);
  const std::string alphabet = "aAbB09 -_#xX!";
  for (int i = 0; i < 500; ++i) {
    std::string raw;
    for (int k = 0; k < 12; ++k) raw += alphabet[rng() % alphabet.size()];
    const auto s = normalize_collection(raw);
    ASSERT_FALSE(s.empty());
    EXPECT_TRUE(std::isupper(static_cast<unsigned char>(s[0]))) << raw;
    for (std::size_t k = 1; k < s.size(); ++k) EXPECT_TRUE(std::islower(static_cast<unsigned char>(s[k]))) << raw;
  }
}

TEST(Categorize, MapAndDefault) {
  CategoryMap m{{"Cryptokitties", Category::Art}, {"Decentraland", Category::Metaverse}};
  EXPECT_EQ(categorize("Cryptokitties", m), Category::Art);
  EXPECT_EQ(categorize("Decentraland", m), Category::Metaverse);
  EXPECT_EQ(categorize("Unknowncoll", m), Category::Other);
}

TEST(Categorize, ConfigFileRoundTrip) {
  IngestConfig cfg;
  cfg.categories.set("Foo", Category::Games);
  cfg.rules.merge_prefixes = {"Sorare"};
  std::ostringstream out;
  write_ingest_config(out, cfg);
  std::istringstream in(out.str());
  auto back = load_ingest_config(KeyValueConfig::parse(in));
  EXPECT_EQ(back.categories("Foo"), Category::Games);
  EXPECT_EQ(back.rules.merge_prefixes, cfg.rules.merge_prefixes);
  std::istringstream bad("category.Foo = Sports\n");
  EXPECT_THROW(load_ingest_config(KeyValueConfig::parse(bad)), ValidationError);
}

TEST(Deduplicate, PriorityAndDistinctKeys) {
  auto os = trade("n", 10, "a", "b", Source::OpenSea);
  auto nf = trade("n", 10, "a", "b", Source::NonFungible);
  auto later = trade("n", 11, "a", "b", Source::OpenSea);
  auto out = deduplicate({os, nf, later});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].source, Source::NonFungible);
  EXPECT_EQ(out[1].ts, 11);
  EXPECT_EQ(deduplicate({os}), std::vector<RawTrade>{os});
}

TEST(Deduplicate, Idempotent) {
  std::mt19937 rng(11);
  std::vector<RawTrade> v;
  for (int i = 0; i < 300; ++i)
    v.push_back(trade("n" + std::to_string(rng() % 20), rng() % 5, "a", "b" + std::to_string(rng() % 2),
                      kAllSources[rng() % kAllSources.size()]));
  const auto once = deduplicate(v);
  EXPECT_EQ(deduplicate(once), once);
}

TEST(ToUsd, RatesByUtcDay) {
  ExchangeRateTable rates;
  rates.add({0, "ETH", 2000});
  rates.add({0, "WAX", 0.1});
  auto t = trade("n", 100, "a", "b", Source::OpenSea);
  t.amount = 2;
  EXPECT_EQ(*to_usd(t, rates), 4000);
  t.currency = "WAX";
  t.amount = 0;
  EXPECT_EQ(*to_usd(t, rates), 0);
  t.currency = "ETH";
  t.ts = kSecondsPerDay + 1;
  EXPECT_FALSE(to_usd(t, rates));
  EXPECT_THROW(rates.add({1, "ETH", 0}), ValidationError);
}

TEST(Clean, StoreRoundTripAndDeterminism) {
  ExchangeRateTable rates;
  rates.add({0, "ETH", 3});
  IngestConfig cfg;
  cfg.categories.set("Coll", Category::Art);
  std::vector<RawTrade> raw = {trade("n2", 50, "a", "b", Source::OpenSea), trade("n1", 50, "c", "d", Source::OpenSea),
                               trade("n1", 50, "c", "d", Source::NonFungible),
                               trade("n3", 2 * kSecondsPerDay, "e", "f", Source::Atomic)};
  IngestSummary s;
  auto cleaned = clean(raw, rates, cfg, &s);
  EXPECT_EQ(s.duplicates, 1u);
  EXPECT_EQ(s.missing_rate, 1u);
  ASSERT_EQ(cleaned.size(), 3u);
  EXPECT_EQ(cleaned[0].nft_id, "n1");
  EXPECT_EQ(cleaned[0].source, Source::NonFungible);
  EXPECT_EQ(cleaned[0].category, Category::Art);
  EXPECT_EQ(*cleaned[0].price_usd, 3);
  std::ostringstream a, b;
  write_store(a, cleaned);
  write_store(b, clean(raw, rates, cfg));
  EXPECT_EQ(a.str(), b.str());
  std::istringstream in(a.str());
  EXPECT_EQ(read_store(in), cleaned);
}
