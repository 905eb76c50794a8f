#pragma once

// Maximum-likelihood power-law tail fitting with Kolmogorov-Smirnov selection
// of the lower cutoff.

#include <numeric>

#include "nftmarket/core.hpp"

namespace nftmarket::stats {

/// Fitted tail P(x) ~ x^exponent for x >= xmin. exponent is negative, i.e.
/// exponent = -alpha_hat.
struct PowerLawFit {
  double exponent = 0.0;
  double xmin = 0.0;
  std::size_t n_tail = 0;
  double loglik = 0.0;
  double ks_distance = 0.0;
  bool discrete = false;
};

enum class PowerLawKind { Auto, Continuous, Discrete };

struct PowerLawOptions {
  std::optional<double> xmin;  // fixed cutoff; KS-selected when absent
  PowerLawKind kind = PowerLawKind::Auto;
  std::size_t min_tail = 10;
  std::size_t max_candidates = 400;  // cutoffs scanned during KS selection
};

namespace detail {

// Fit on the sorted tail [first, last) given the cutoff.
inline PowerLawFit fit_tail(const double* first, const double* last, double xmin, bool discrete) {
  const auto n = static_cast<std::size_t>(last - first);
  const double base = discrete ? xmin - 0.5 : xmin;
  double sum_log = 0.0;
  for (auto p = first; p != last; ++p) sum_log += std::log(*p / base);
  if (!(sum_log > 0))
    throw DegenerateError("degenerate tail: all samples equal the cutoff");
  const double alpha = 1.0 + static_cast<double>(n) / sum_log;
  PowerLawFit fit;
  fit.exponent = -alpha;
  fit.xmin = xmin;
  fit.n_tail = n;
  fit.discrete = discrete;
  fit.loglik = static_cast<double>(n) * std::log((alpha - 1.0) / base) - alpha * sum_log;
  // KS distance between the empirical tail CDF and the fitted CDF; the
  // discrete fit uses the same continuity-corrected approximation as the
  // estimator.
  double d = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && first[j] == first[i]) ++j;
    const double x = first[i];
    double model_below, model_at;
    if (discrete) {
      model_below = 1.0 - std::pow((x - 0.5) / base, 1.0 - alpha);  // P(X < x)
      model_at = 1.0 - std::pow((x + 0.5) / base, 1.0 - alpha);     // P(X <= x)
    } else {
      model_below = model_at = 1.0 - std::pow(x / base, 1.0 - alpha);
    }
    const double emp_below = static_cast<double>(i) / n;
    const double emp_at = static_cast<double>(j) / n;
    d = std::max({d, std::abs(emp_below - model_below), std::abs(emp_at - model_at)});
    i = j;
  }
  fit.ks_distance = d;
  return fit;
}

}  // namespace detail

/// MLE of the tail exponent. Continuous: alpha = 1 + n / sum ln(x/xmin);
/// discrete uses the xmin - 1/2 approximation. Without a fixed xmin the cutoff
/// minimizing the KS distance is chosen among the distinct sample values.
inline PowerLawFit fit_power_law(std::vector<double> samples, const PowerLawOptions& opts = {}) {
  samples.erase(std::remove_if(samples.begin(), samples.end(),
                               [](double x) { return !(x > 0) || !std::isfinite(x); }),
                samples.end());
  std::sort(samples.begin(), samples.end());
  bool discrete = opts.kind == PowerLawKind::Discrete;
  if (opts.kind == PowerLawKind::Auto)
    discrete = !samples.empty() && std::all_of(samples.begin(), samples.end(),
                                               [](double x) { return x == std::floor(x); });

  auto tail_begin = [&](double xmin) {
    return std::lower_bound(samples.begin(), samples.end(), xmin);
  };

  if (opts.xmin) {
    auto b = tail_begin(*opts.xmin);
    if (static_cast<std::size_t>(samples.end() - b) < opts.min_tail)
      throw DegenerateError("insufficient tail: fewer than " + std::to_string(opts.min_tail) +
                            " samples >= xmin");
    return detail::fit_tail(&*b, samples.data() + samples.size(), *opts.xmin, discrete);
  }

  // Candidate cutoffs: distinct values leaving at least min_tail samples in the
  // tail, thinned to max_candidates evenly spaced in rank.
  std::vector<double> candidates;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples.size() - i < opts.min_tail) break;
    if (i == 0 || samples[i] != samples[i - 1]) candidates.push_back(samples[i]);
  }
  if (candidates.empty())
    throw DegenerateError("insufficient tail: fewer than " + std::to_string(opts.min_tail) +
                          " samples");
  if (candidates.size() > opts.max_candidates) {
    std::vector<double> thinned;
    const double step = static_cast<double>(candidates.size() - 1) / (opts.max_candidates - 1);
    for (std::size_t k = 0; k < opts.max_candidates; ++k)
      thinned.push_back(candidates[static_cast<std::size_t>(std::llround(k * step))]);
    thinned.erase(std::unique(thinned.begin(), thinned.end()), thinned.end());
    candidates.swap(thinned);
  }

  std::optional<PowerLawFit> best;
  for (double xmin : candidates) {
    auto b = tail_begin(xmin);
    PowerLawFit fit;
    try {
      fit = detail::fit_tail(&*b, samples.data() + samples.size(), xmin, discrete);
    } catch (const DegenerateError&) {
      continue;
    }
    if (!best || fit.ks_distance < best->ks_distance) best = fit;
  }
  if (!best) throw DegenerateError("degenerate tail: all samples equal");
  return *best;
}

/// Slope of the ordinary least-squares line through (x, y).
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0)) throw DegenerateError("degenerate regression: constant predictor");
  return sxy / sxx;
}

}  // namespace nftmarket::stats
