#pragma once

// Regression and classification experiments over feature subsets, look-ahead
// windows and categories.

#include "nftmarket/features.hpp"
#include "nftmarket/models.hpp"

namespace nftmarket::predict {

// ---------------------------------------------------------------------------
// Targets

enum class TargetMode { Primary, SecondaryMedian };

inline std::string_view to_string(TargetMode m) { return m == TargetMode::Primary ? "primary" : "secondary"; }

inline std::optional<TargetMode> parse_target_mode(std::string_view s) {
  if (s == "primary") return TargetMode::Primary;
  if (s == "secondary") return TargetMode::SecondaryMedian;
  return std::nullopt;
}

struct TargetSpec {
  TargetMode mode = TargetMode::SecondaryMedian;
  Window window = Window::Month;  // look-ahead for secondary sales
};

/// USD price target per NFT. Primary mode: the primary-sale price. Secondary
/// mode: median price of the secondary sales in (t_s, t_s + window]; NFTs with
/// no such sale, or whose primary sale is within one window of the dataset
/// end, are left out.
inline std::map<std::string, double> regression_targets(const std::vector<stats::SaleTimeline>& tls,
                                                        const TargetSpec& spec, Timestamp dataset_end) {
  std::map<std::string, double> out;
  const auto len = window_seconds(spec.window);
  for (const auto& tl : tls) {
    const auto& p = tl.primary();
    if (spec.mode == TargetMode::Primary) {
      if (p.price_usd) out.emplace(tl.nft_id, *p.price_usd);
      continue;
    }
    if (len && p.ts > dataset_end - *len) continue;
    std::vector<double> prices;
    for (std::size_t i = 1; i < tl.sales.size(); ++i) {
      const auto& s = tl.sales[i];
      if (len && s.ts > p.ts + *len) break;
      if (s.price_usd) prices.push_back(*s.price_usd);
    }
    if (!prices.empty()) out.emplace(tl.nft_id, median_of(std::move(prices)));
  }
  return out;
}

/// Resale label per NFT: 1 when a secondary sale falls in (t_s, t_s + window].
/// NFTs whose primary sale is within one window of the dataset end are left out.
inline std::map<std::string, int> resale_labels(const std::vector<stats::SaleTimeline>& tls, Window window,
                                                Timestamp dataset_end) {
  std::map<std::string, int> out;
  const auto len = window_seconds(window);
  for (const auto& tl : tls) {
    const auto t_s = tl.primary().ts;
    if (len && t_s > dataset_end - *len) continue;
    const bool resold = tl.has_secondary() && (!len || tl.sales[1].ts <= t_s + *len);
    out.emplace(tl.nft_id, resold ? 1 : 0);
  }
  return out;
}

/// Recomputes median_price of each row with another look-back window over
/// [t_s - window, day(t_s)), equal to what FeatureBuilder would produce.
inline void set_median_window(std::vector<FeatureRow>& rows, const std::vector<TradeRecord>& trades, Window window) {
  std::unordered_map<std::string, std::vector<std::pair<Timestamp, double>>> prices;
  for (const auto& t : trades)
    if (t.price_usd) prices[t.collection].push_back({t.ts, *t.price_usd});
  for (auto& [c, v] : prices) std::stable_sort(v.begin(), v.end(), [](auto& a, auto& b) { return a.first < b.first; });
  const auto len = window_seconds(window);
  auto by_ts = [](const std::pair<Timestamp, double>& p, Timestamp ts) { return p.first < ts; };
  for (auto& r : rows) {
    r.median_price.reset();
    auto it = prices.find(r.collection);
    if (it == prices.end()) continue;
    const auto& v = it->second;
    const auto lo = len ? std::lower_bound(v.begin(), v.end(), r.t_s - *len, by_ts) : v.begin();
    const auto hi = std::lower_bound(v.begin(), v.end(), utc_day(r.t_s) * kSecondsPerDay, by_ts);
    if (lo >= hi) continue;
    std::vector<double> window_prices;
    for (auto p = lo; p != hi; ++p) window_prices.push_back(p->second);
    r.median_price = median_of(std::move(window_prices));
  }
}

// ---------------------------------------------------------------------------
// Feature subsets

struct FeatureSet {
  std::string name;
  std::vector<std::size_t> columns;  // indices into kFeatureNames
};

inline std::vector<std::size_t> feature_group(std::string_view group) {
  if (group == "centrality") return {kKBuyer, kKSeller, kPrBuyer, kPrSeller};
  if (group == "history") return {kPResale, kMedianPrice};
  if (group == "visual") {
    std::vector<std::size_t> v;
    for (std::size_t i = 0; i < kVisualComponents; ++i) v.push_back(kVis1 + i);
    return v;
  }
  if (group == "all") {
    std::vector<std::size_t> v(kFeatureNames.size());
    std::iota(v.begin(), v.end(), 0);
    return v;
  }
  throw ValidationError("unknown feature group: " + std::string(group));
}

/// Named mask such as "centrality" or a '+'-joined union like "centrality+visual".
inline FeatureSet parse_feature_set(std::string_view name) {
  std::set<std::size_t> cols;
  for (const auto& part : split(name, '+'))
    for (auto c : feature_group(trim(part))) cols.insert(c);
  return {std::string(name), {cols.begin(), cols.end()}};
}

inline const std::vector<std::string>& default_feature_sets() {
  static const std::vector<std::string> sets = {"centrality",         "visual",         "history",
                                                "centrality+visual",  "centrality+history", "visual+history",
                                                "all"};
  return sets;
}

inline ColumnTransform transform_for(std::size_t feature) {
  switch (feature) {
    case kKBuyer:
    case kKSeller:
    case kMedianPrice: return ColumnTransform::Log1p;
    case kPrBuyer:
    case kPrSeller:
    case kPResale: return ColumnTransform::BoxCox;
    default: return ColumnTransform::None;
  }
}

/// Rows restricted to a category (nullopt keeps all) with every column of the
/// set present.
inline std::vector<const FeatureRow*> usable_rows(const std::vector<FeatureRow>& rows, const FeatureSet& set,
                                                  std::optional<Category> category) {
  std::vector<const FeatureRow*> out;
  for (const auto& r : rows) {
    if (category && r.category != *category) continue;
    const auto v = r.values();
    if (std::all_of(set.columns.begin(), set.columns.end(), [&](std::size_t c) { return std::isfinite(v[c]); }))
      out.push_back(&r);
  }
  return out;
}

inline Eigen::MatrixXd design_matrix(const std::vector<const FeatureRow*>& rows, const FeatureSet& set) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(set.columns.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = rows[i]->values();
    for (std::size_t j = 0; j < set.columns.size(); ++j)
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[set.columns[j]];
  }
  return X;
}

inline FeatureTransform fit_feature_transform(const Eigen::MatrixXd& train, const FeatureSet& set) {
  std::vector<ColumnTransform> kinds;
  std::vector<std::string> names;
  for (auto c : set.columns) {
    kinds.push_back(transform_for(c));
    names.emplace_back(kFeatureNames[c]);
  }
  return FeatureTransform::fit(train, std::move(kinds), std::move(names));
}

// ---------------------------------------------------------------------------
// Experiments

struct RegressionCell {
  std::string category;  // "All" or a category name
  std::string window;
  std::string feature_set;
  TargetSpec target;
  std::optional<RegressionReport> report;
  std::string status = "ok";
};

/// OLS of the log1p/min-max-scaled target on the transformed features of one
/// cell. Transforms are fit on the cell's sample.
inline RegressionReport run_regression(const std::vector<FeatureRow>& rows,
                                       const std::map<std::string, double>& targets, const FeatureSet& set,
                                       std::optional<Category> category) {
  std::vector<const FeatureRow*> sample;
  for (const auto* r : usable_rows(rows, set, category))
    if (targets.count(r->nft_id)) sample.push_back(r);
  if (sample.empty()) throw DegenerateError("no rows with both features and target");
  const Eigen::MatrixXd raw = design_matrix(sample, set);
  const auto tf = fit_feature_transform(raw, set);
  const Eigen::MatrixXd X = tf.apply(raw);

  Eigen::MatrixXd y_raw(static_cast<Eigen::Index>(sample.size()), 1);
  for (std::size_t i = 0; i < sample.size(); ++i) y_raw(static_cast<Eigen::Index>(i), 0) = targets.at(sample[i]->nft_id);
  const auto ytf = FeatureTransform::fit(y_raw, {ColumnTransform::Log1p}, {"target"});
  if (ytf.kept().empty()) throw DegenerateError("constant regression target");
  const Eigen::VectorXd y = ytf.apply(y_raw).col(0);

  auto rep = ols_fit(X, y, tf.kept_names());
  std::set<std::string_view> colls;
  for (const auto* r : sample) colls.insert(r->collection);
  rep.n_collections = colls.size();
  return rep;
}

struct ClassifierCell {
  std::string category;
  std::string window;
  std::string feature_set;
  std::optional<ClassifierReport> report;
  std::size_t n_train = 0, n_test = 0;
  std::string status = "ok";
};

struct ClassifierRun {
  ClassifierReport report;
  std::size_t n_train = 0;  // before oversampling
  std::size_t n_test = 0;
};

/// Temporal 95/5 split, transforms fit on the training part, random
/// oversampling of the minority class, AdaBoost, evaluation on the test part.
inline ClassifierRun run_classifier(const std::vector<FeatureRow>& rows, const std::map<std::string, int>& labels,
                                    const FeatureSet& set, std::optional<Category> category, std::uint64_t seed,
                                    const AdaBoostOptions& opts = {}) {
  std::vector<const FeatureRow*> sample;
  for (const auto* r : usable_rows(rows, set, category))
    if (labels.count(r->nft_id)) sample.push_back(r);
  auto [train_idx, test_idx] = temporal_split(
      sample, [](const FeatureRow* r) { return r->t_s; }, [](const FeatureRow* r) { return r->nft_id; });
  if (train_idx.empty() || test_idx.empty()) throw DegenerateError("too few rows for a train/test split");
  auto pick = [&](const std::vector<std::size_t>& idx) {
    std::vector<const FeatureRow*> out;
    for (auto i : idx) out.push_back(sample[i]);
    return out;
  };
  const auto train_rows = pick(train_idx), test_rows = pick(test_idx);
  const Eigen::MatrixXd train_raw = design_matrix(train_rows, set);
  const auto tf = fit_feature_transform(train_raw, set);
  if (tf.kept().empty()) throw DegenerateError("no feature with training variance");

  LabelledSet train{tf.apply(train_raw), {}}, test{tf.apply(design_matrix(test_rows, set)), {}};
  for (const auto* r : train_rows) train.y.push_back(labels.at(r->nft_id));
  for (const auto* r : test_rows) test.y.push_back(labels.at(r->nft_id));

  const auto balanced = random_oversample(train, seed);
  const auto model = adaboost_train(balanced, opts);
  return {evaluate(model, test), train_rows.size(), test_rows.size()};
}

struct ExperimentConfig {
  TargetMode target_mode = TargetMode::SecondaryMedian;
  std::vector<Window> windows = {Window::Week, Window::Month, Window::HalfYear, Window::Year};
  std::vector<std::string> feature_sets = default_feature_sets();
  std::vector<std::optional<Category>> categories = {std::nullopt};  // nullopt = all categories
  Window median_window = Window::Week;
  Window table_window = Window::Month;  // look-ahead used for the coefficient table
  std::uint64_t seed = 0;
  AdaBoostOptions adaboost;
};

inline std::string category_label(const std::optional<Category>& c) {
  return c ? std::string(to_string(*c)) : std::string("All");
}

struct ExperimentResults {
  std::vector<RegressionCell> regression;
  std::vector<ClassifierCell> classification;
  std::vector<RegressionCell> table;  // one per feature set, all categories, table_window
};

/// Runs the regression and classification grids (categories x windows x
/// feature sets) in parallel across cells; cell results do not depend on the
/// thread count.
inline ExperimentResults run_experiments(const std::vector<FeatureRow>& rows,
                                         const std::vector<stats::SaleTimeline>& tls, Timestamp dataset_end,
                                         const ExperimentConfig& cfg) {
  ExperimentResults res;
  std::vector<FeatureSet> sets;
  for (const auto& s : cfg.feature_sets) sets.push_back(parse_feature_set(s));

  std::map<Window, std::map<std::string, double>> targets;
  std::map<Window, std::map<std::string, int>> labels;
  auto all_windows = cfg.windows;
  all_windows.push_back(cfg.table_window);
  for (auto w : all_windows) {
    targets.try_emplace(w, regression_targets(tls, {cfg.target_mode, w}, dataset_end));
    labels.try_emplace(w, resale_labels(tls, w, dataset_end));
  }

  for (const auto& c : cfg.categories)
    for (auto w : cfg.windows)
      for (const auto& s : sets) {
        res.regression.push_back({category_label(c), std::string(to_string(w)), s.name, {cfg.target_mode, w}, {}, "ok"});
        res.classification.push_back({category_label(c), std::string(to_string(w)), s.name, {}, 0, 0, "ok"});
      }
  for (const auto& s : sets)
    res.table.push_back({"All", std::string(to_string(cfg.table_window)), s.name, {cfg.target_mode, cfg.table_window}, {}, "ok"});

  const std::size_t n_cells = cfg.categories.size() * cfg.windows.size() * sets.size();
  parallel_for(n_cells, [&](std::size_t i) {
    const auto& s = sets[i % sets.size()];
    const auto w = cfg.windows[(i / sets.size()) % cfg.windows.size()];
    const auto& c = cfg.categories[i / (sets.size() * cfg.windows.size())];
    try {
      res.regression[i].report = run_regression(rows, targets.at(w), s, c);
    } catch (const Error& e) {
      res.regression[i].status = e.what();
    }
    try {
      auto run = run_classifier(rows, labels.at(w), s, c, cfg.seed + i, cfg.adaboost);
      res.classification[i].report = run.report;
      res.classification[i].n_train = run.n_train;
      res.classification[i].n_test = run.n_test;
    } catch (const Error& e) {
      res.classification[i].status = e.what();
    }
  });
  parallel_for(sets.size(), [&](std::size_t i) {
    try {
      res.table[i].report = run_regression(rows, targets.at(cfg.table_window), sets[i], std::nullopt);
    } catch (const Error& e) {
      res.table[i].status = e.what();
    }
  });
  return res;
}

// ---------------------------------------------------------------------------
// Output

inline std::string opt_double(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline void write_regression_grid(std::ostream& out, const std::vector<RegressionCell>& cells) {
  out << "category,window,feature_set,target,n_samples,n_collections,r2,r2_adj,status\n";
  for (const auto& c : cells) {
    out << c.category << ',' << c.window << ',' << c.feature_set << ',' << to_string(c.target.mode) << ',';
    if (c.report)
      out << c.report->n_samples << ',' << c.report->n_collections << ',' << format_double(c.report->r2) << ','
          << format_double(c.report->r2_adj);
    else
      out << ",,,";
    out << ',' << csv_escape(c.status) << '\n';
  }
}

inline void write_classifier_grid(std::ostream& out, const std::vector<ClassifierCell>& cells) {
  out << "category,window,feature_set,n_train,n_test,f1,auc,tp,fp,tn,fn,status\n";
  for (const auto& c : cells) {
    out << c.category << ',' << c.window << ',' << c.feature_set << ',' << c.n_train << ',' << c.n_test << ',';
    if (c.report)
      out << format_double(c.report->f1) << ',' << opt_double(c.report->auc) << ',' << c.report->tp << ','
          << c.report->fp << ',' << c.report->tn << ',' << c.report->fn;
    else
      out << ",,,,,";
    out << ',' << csv_escape(c.status) << '\n';
  }
}

/// Coefficient table: one row per variable (constant first), one column per
/// model; cells hold the coefficient followed by its significance flag, and
/// the last rows give R2_adj, the number of NFTs and of collections.
inline void write_coefficient_table(std::ostream& out, const std::vector<RegressionCell>& models) {
  out << "variable";
  for (const auto& m : models) out << ',' << csv_escape(m.feature_set);
  out << '\n';
  std::vector<std::string> vars{"const"};
  for (auto n : kFeatureNames) vars.emplace_back(n);
  for (const auto& v : vars) {
    out << v;
    for (const auto& m : models) {
      out << ',';
      if (!m.report) continue;
      if (const auto* c = m.report->find(v)) out << format_double(c->beta) << (c->flag().empty() ? "" : " " + c->flag());
    }
    out << '\n';
  }
  out << "R2_adj";
  for (const auto& m : models) out << ',' << (m.report ? format_double(m.report->r2_adj) : "");
  out << "\nn_nfts";
  for (const auto& m : models) out << ',' << (m.report ? std::to_string(m.report->n_samples) : "");
  out << "\nn_collections";
  for (const auto& m : models) out << ',' << (m.report ? std::to_string(m.report->n_collections) : "");
  out << '\n';
}

}  // namespace nftmarket::predict
