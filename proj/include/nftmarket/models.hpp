#pragma once

// Feature transforms, OLS regression and AdaBoost stump classification.

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/tools/minima.hpp>

#include <numeric>
#include <random>

#include "nftmarket/core.hpp"

namespace nftmarket::predict {

// ---------------------------------------------------------------------------
// Box-Cox

inline double boxcox(double x, double lambda) {
  if (!(x > 0)) throw DegenerateError("Box-Cox needs strictly positive input");
  return std::abs(lambda) < 1e-12 ? std::log(x) : (std::pow(x, lambda) - 1.0) / lambda;
}

/// Profile log-likelihood of the Box-Cox parameter (normal model, variance
/// profiled out).
inline double boxcox_loglik(std::span<const double> x, double lambda) {
  const auto n = static_cast<double>(x.size());
  double sum_log = 0, mean = 0;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = boxcox(x[i], lambda);
    mean += y[i];
    sum_log += std::log(x[i]);
  }
  mean /= n;
  double var = 0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= n;
  if (!(var > 0)) return -std::numeric_limits<double>::infinity();
  return -0.5 * n * std::log(var) + (lambda - 1.0) * sum_log;
}

/// Maximum-likelihood Box-Cox lambda, searched on [lo, hi] with Brent's method.
inline double boxcox_mle(std::span<const double> x, double lo = -5.0, double hi = 5.0) {
  if (x.size() < 2) throw DegenerateError("Box-Cox fit needs at least two values");
  auto neg = [&](double l) {
    const double v = boxcox_loglik(x, l);
    return std::isfinite(v) ? -v : std::numeric_limits<double>::max();
  };
  return boost::math::tools::brent_find_minima(neg, lo, hi, 40).first;
}

// ---------------------------------------------------------------------------
// Column transforms

enum class ColumnTransform { None, Log1p, BoxCox };

/// Per-column transform followed by min-max scaling, fit on a training matrix
/// and frozen. Columns with zero training variance are dropped.
class FeatureTransform {
 public:
  FeatureTransform() = default;

  static FeatureTransform fit(const Eigen::MatrixXd& train, std::vector<ColumnTransform> kinds,
                              std::vector<std::string> names) {
    if (kinds.size() != static_cast<std::size_t>(train.cols()) || names.size() != kinds.size())
      throw ValidationError("transform spec does not match matrix width");
    if (train.rows() == 0) throw DegenerateError("cannot fit transforms on an empty training set");
    FeatureTransform t;
    t.kinds_ = std::move(kinds);
    t.names_ = std::move(names);
    const auto p = static_cast<std::size_t>(train.cols());
    t.shift_.assign(p, 0.0);
    t.lambda_.assign(p, 1.0);
    t.min_.assign(p, 0.0);
    t.max_.assign(p, 0.0);
    for (std::size_t c = 0; c < p; ++c) {
      const auto col = static_cast<Eigen::Index>(c);
      if (!train.col(col).allFinite()) throw ValidationError("non-finite training value in " + t.names_[c]);
      if (t.kinds_[c] == ColumnTransform::BoxCox) {
        const double mn = train.col(col).minCoeff();
        if (!(mn > 0)) {
          double smallest_pos = std::numeric_limits<double>::infinity();
          for (Eigen::Index r = 0; r < train.rows(); ++r)
            if (train(r, col) - mn > 0) smallest_pos = std::min(smallest_pos, train(r, col) - mn);
          t.shift_[c] = -mn + (std::isfinite(smallest_pos) ? 0.5 * smallest_pos : 1.0);
        }
        std::vector<double> x(static_cast<std::size_t>(train.rows()));
        for (Eigen::Index r = 0; r < train.rows(); ++r) x[static_cast<std::size_t>(r)] = train(r, col) + t.shift_[c];
        const bool constant = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
        t.lambda_[c] = constant ? 1.0 : boxcox_mle(x);
      }
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (Eigen::Index r = 0; r < train.rows(); ++r) {
        const double v = t.transform_value(c, train(r, col));
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      t.min_[c] = lo;
      t.max_[c] = hi;
      if (hi > lo) {
        t.kept_.push_back(c);
      } else {
        log_warn("feature " + t.names_[c] + " has zero training variance; dropped");
      }
    }
    return t;
  }

  /// Transformed, scaled matrix over the kept columns; values clipped to [0, 1].
  Eigen::MatrixXd apply(const Eigen::MatrixXd& m) const {
    if (static_cast<std::size_t>(m.cols()) != kinds_.size()) throw ValidationError("matrix width mismatch");
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(kept_.size()));
    for (std::size_t k = 0; k < kept_.size(); ++k) {
      const auto c = kept_[k];
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double v = (transform_value(c, m(r, static_cast<Eigen::Index>(c))) - min_[c]) / (max_[c] - min_[c]);
        out(r, static_cast<Eigen::Index>(k)) = std::clamp(v, 0.0, 1.0);
      }
    }
    return out;
  }

  std::vector<std::string> kept_names() const {
    std::vector<std::string> out;
    for (auto c : kept_) out.push_back(names_[c]);
    return out;
  }
  const std::vector<std::size_t>& kept() const { return kept_; }
  double lambda(std::size_t c) const { return lambda_[c]; }
  double shift(std::size_t c) const { return shift_[c]; }

 private:
  double transform_value(std::size_t c, double x) const {
    switch (kinds_[c]) {
      case ColumnTransform::None: return x;
      case ColumnTransform::Log1p: return std::log1p(std::max(x, 0.0));
      case ColumnTransform::BoxCox: return boxcox(std::max(x + shift_[c], 1e-300), lambda_[c]);
    }
    return x;
  }

  std::vector<ColumnTransform> kinds_;
  std::vector<std::string> names_;
  std::vector<double> shift_, lambda_, min_, max_;
  std::vector<std::size_t> kept_;
};

// ---------------------------------------------------------------------------
// OLS

struct Coefficient {
  std::string name;
  double beta = 0, std_err = 0, t = 0, p_value = 1;

  /// Significance flag: "" for p < 0.01, "*" for p < 0.05, otherwise "ns".
  std::string flag() const { return p_value < 0.01 ? "" : p_value < 0.05 ? "*" : "ns"; }
};

struct RegressionReport {
  std::vector<Coefficient> coefficients;  // [0] is the constant
  double r2 = 0;
  double r2_adj = 0;
  std::size_t n_samples = 0;
  std::size_t n_features = 0;
  std::size_t n_collections = 0;
  std::string target;

  const Coefficient* find(std::string_view name) const {
    for (const auto& c : coefficients)
      if (c.name == name) return &c;
    return nullptr;
  }
};

/// Least squares with an intercept; homoskedastic two-sided t-tests per
/// coefficient. Throws DegenerateError naming the collinear columns when the
/// design is rank-deficient.
inline RegressionReport ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                const std::vector<std::string>& names) {
  const auto n = X.rows();
  const auto p = X.cols();
  if (static_cast<std::size_t>(p) != names.size()) throw ValidationError("feature names do not match X");
  if (y.size() != n) throw ValidationError("target length does not match X");
  if (n <= p + 1) throw DegenerateError("OLS needs more samples than features + 1");

  Eigen::MatrixXd A(n, p + 1);
  A.col(0).setOnes();
  A.rightCols(p) = X;
  // column scaling keeps the rank decision independent of feature units
  Eigen::VectorXd scale = A.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < scale.size(); ++j)
    if (!(scale[j] > 0)) scale[j] = 1.0;
  const Eigen::MatrixXd As = A * scale.cwiseInverse().asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(As);
  qr.setThreshold(1e-10);
  if (qr.rank() < p + 1) {
    std::string cols;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < p + 1; ++k) {
      const auto j = perm[k];
      cols += (cols.empty() ? "" : ", ") + (j == 0 ? std::string("const") : names[static_cast<std::size_t>(j - 1)]);
    }
    throw DegenerateError("rank-deficient design; collinear columns: " + cols);
  }
  const Eigen::VectorXd beta = qr.solve(y).cwiseQuotient(scale);
  const Eigen::VectorXd resid = y - A * beta;
  const double ssr = resid.squaredNorm();
  const double sst = (y.array() - y.mean()).matrix().squaredNorm();
  if (!(sst > 0)) throw DegenerateError("constant regression target");

  RegressionReport rep;
  rep.n_samples = static_cast<std::size_t>(n);
  rep.n_features = static_cast<std::size_t>(p);
  rep.r2 = 1.0 - ssr / sst;
  rep.r2_adj = 1.0 - (1.0 - rep.r2) * double(n - 1) / double(n - p - 1);

  const double df = double(n - p - 1);
  const double sigma2 = ssr / df;
  // (A^T A)^-1 via the scaled QR: inv = S^-1 (As^T As)^-1 S^-1
  const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(p + 1, p + 1).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p + 1, p + 1));
  const Eigen::MatrixXd cov_perm = Rinv * Rinv.transpose();
  Eigen::MatrixXd cov_scaled(p + 1, p + 1);
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index a = 0; a < p + 1; ++a)
    for (Eigen::Index b = 0; b < p + 1; ++b) cov_scaled(perm[a], perm[b]) = cov_perm(a, b);

  boost::math::students_t dist(df);
  for (Eigen::Index j = 0; j < p + 1; ++j) {
    Coefficient c;
    c.name = j == 0 ? "const" : names[static_cast<std::size_t>(j - 1)];
    c.beta = beta[j];
    c.std_err = std::sqrt(sigma2 * cov_scaled(j, j)) / scale[j];
    c.t = c.std_err > 0 ? c.beta / c.std_err : std::numeric_limits<double>::infinity();
    c.p_value = std::isfinite(c.t) ? 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(c.t))) : 0.0;
    rep.coefficients.push_back(c);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Splits and resampling

/// Stable order by (t_s, id); the first floor(train_frac * n) go to training.
template <class Row, class TimeOf, class IdOf>
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> temporal_split(const std::vector<Row>& rows,
                                                                             TimeOf time_of, IdOf id_of,
                                                                             double train_frac = 0.95) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ta = time_of(rows[a]), tb = time_of(rows[b]);
    if (ta != tb) return ta < tb;
    return id_of(rows[a]) < id_of(rows[b]);
  });
  const auto n_train = static_cast<std::size_t>(std::floor(train_frac * double(rows.size())));
  return {std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train)),
          std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end())};
}

struct LabelledSet {
  Eigen::MatrixXd X;
  std::vector<int> y;  // 0 / 1
};

/// Appends exact copies of minority-class rows, drawn uniformly with
/// replacement, until both classes have the same count.
inline LabelledSet random_oversample(const LabelledSet& train, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < train.y.size(); ++i) (train.y[i] ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw DegenerateError("oversampling needs both classes in the training set");
  const auto& minority = pos.size() <= neg.size() ? pos : neg;
  const std::size_t extra = std::max(pos.size(), neg.size()) - minority.size();
  LabelledSet out;
  out.X.resize(train.X.rows() + static_cast<Eigen::Index>(extra), train.X.cols());
  out.X.topRows(train.X.rows()) = train.X;
  out.y = train.y;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, minority.size() - 1);
  for (std::size_t k = 0; k < extra; ++k) {
    const auto src = minority[pick(rng)];
    out.X.row(train.X.rows() + static_cast<Eigen::Index>(k)) = train.X.row(static_cast<Eigen::Index>(src));
    out.y.push_back(train.y[src]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// AdaBoost with decision stumps

struct Stump {
  std::size_t feature = 0;
  double threshold = 0;
  int polarity = 1;  // +1: predict positive when x > threshold
  double alpha = 0;
  double error = 0;  // weighted training error when accepted

  int predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return x[static_cast<Eigen::Index>(feature)] > threshold ? polarity : -polarity;
  }
};

struct AdaBoostOptions {
  std::size_t n_estimators = 100;
  double learning_rate = 1.0;
};

struct AdaBoostModel {
  std::vector<Stump> stumps;

  /// Confidence score sum_t alpha_t h_t(x); positive class when > 0.
  double score(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    double s = 0;
    for (const auto& st : stumps) s += st.alpha * st.predict(x);
    return s;
  }

  std::vector<double> scores(const Eigen::MatrixXd& X) const {
    std::vector<double> out(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index r = 0; r < X.rows(); ++r) out[static_cast<std::size_t>(r)] = score(X.row(r));
    return out;
  }
};

/// Discrete AdaBoost. Each round fits the stump minimizing weighted error over
/// thresholds between consecutive distinct values of every feature, weights it
/// by lr * 1/2 ln((1 - e) / e) and reweights the samples. Stops early on a
/// perfect stump (kept) or one no better than chance (discarded).
inline AdaBoostModel adaboost_train(const LabelledSet& train, const AdaBoostOptions& opts = {}) {
  const auto n = static_cast<std::size_t>(train.X.rows());
  const auto p = static_cast<std::size_t>(train.X.cols());
  if (n == 0 || train.y.size() != n) throw ValidationError("AdaBoost needs a non-empty labelled set");
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = train.y[i] ? 1 : -1;

  std::vector<std::vector<std::size_t>> sorted(p);
  for (std::size_t f = 0; f < p; ++f) {
    auto& idx = sorted[f];
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0);
    const auto col = static_cast<Eigen::Index>(f);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return train.X(static_cast<Eigen::Index>(a), col) < train.X(static_cast<Eigen::Index>(b), col);
    });
  }

  std::vector<double> w(n, 1.0 / double(n));
  AdaBoostModel model;
  for (std::size_t round = 0; round < opts.n_estimators; ++round) {
    Stump best;
    double best_err = std::numeric_limits<double>::infinity();
    double neg_total = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (y[i] < 0) neg_total += w[i];
    for (std::size_t f = 0; f < p; ++f) {
      const auto col = static_cast<Eigen::Index>(f);
      const auto& idx = sorted[f];
      // threshold below every value: polarity +1 predicts all positive
      double err = neg_total;
      auto consider = [&](double thr) {
        if (err < best_err) {
          best_err = err;
          best = {f, thr, 1, 0, err};
        }
        if (1.0 - err < best_err) {
          best_err = 1.0 - err;
          best = {f, thr, -1, 0, 1.0 - err};
        }
      };
      consider(train.X(static_cast<Eigen::Index>(idx[0]), col) - 1.0);
      for (std::size_t k = 0; k < n; ++k) {
        const auto i = idx[k];
        err += y[i] > 0 ? w[i] : -w[i];
        const double v = train.X(static_cast<Eigen::Index>(i), col);
        if (k + 1 < n) {
          const double next = train.X(static_cast<Eigen::Index>(idx[k + 1]), col);
          if (next == v) continue;
          consider(0.5 * (v + next));
        }
      }
    }
    const double eps = std::clamp(best_err, 0.0, 1.0);
    if (eps >= 0.5) break;
    const double e = std::max(eps, 1e-10);
    best.alpha = opts.learning_rate * 0.5 * std::log((1.0 - e) / e);
    best.error = eps;
    model.stumps.push_back(best);
    if (eps <= 1e-12) break;
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] *= std::exp(-best.alpha * y[i] * best.predict(train.X.row(static_cast<Eigen::Index>(i))));
      total += w[i];
    }
    for (auto& v : w) v /= total;
  }
  return model;
}

// ---------------------------------------------------------------------------
// Evaluation

struct ClassifierReport {
  double f1 = 0;
  std::optional<double> auc;  // undefined for single-class test sets
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Rank-statistic AUC with tie-averaged ranks; nullopt unless both classes are present.
inline std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const auto n = scores.size();
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += l ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * double(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]]) rank_sum_pos += avg_rank;
    i = j;
  }
  return (rank_sum_pos - double(n_pos) * double(n_pos + 1) / 2.0) / (double(n_pos) * double(n_neg));
}

/// F1 of the positive class at decision threshold 0 (score > 0 is positive), and AUC.
inline ClassifierReport evaluate_scores(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw ValidationError("evaluation needs matching, non-empty scores and labels");
  ClassifierReport r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] > 0;
    const bool truth = labels[i] != 0;
    if (pred && truth) ++r.tp;
    else if (pred) ++r.fp;
    else if (truth) ++r.fn;
    else ++r.tn;
  }
  const double denom = 2.0 * double(r.tp) + double(r.fp) + double(r.fn);
  r.f1 = denom > 0 ? 2.0 * double(r.tp) / denom : 0.0;
  r.auc = roc_auc(scores, labels);
  return r;
}

inline ClassifierReport evaluate(const AdaBoostModel& model, const LabelledSet& test) {
  const auto s = model.scores(test.X);
  return evaluate_scores(s, test.y);
}

}  // namespace nftmarket::predict
