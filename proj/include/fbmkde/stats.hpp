#pragma once

#include "fbmkde/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace fbmkde {

struct LogLogFit {
  double slope;
  double stderr_slope;
  double r2;
};

//! OLS of log(value) on log(T); the slope's standard error comes from the residuals.
inline LogLogFit fit_loglog_slope(std::span<const std::pair<double, double>> pairs) {
  if (pairs.size() < 3) throw InsufficientPoints("log-log fit needs at least 3 points");
  const double n = static_cast<double>(pairs.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [t, v] : pairs) {
    if (!(t > 0.0) || !(v > 0.0)) throw NonPositiveValue("log-log fit needs positive abscissae and values");
    mx += std::log(t);
    my += std::log(v);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [t, v] : pairs) {
    const double dx = std::log(t) - mx, dy = std::log(v) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw InsufficientPoints("log-log fit needs distinct abscissae");
  const double slope = sxy / sxx;
  const double ssr = std::max(0.0, syy - slope * sxy);
  const double se = std::sqrt(ssr / (n - 2.0) / sxx);
  const double r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  return {slope, se, r2};
}

struct MeanVar {
  double mean;
  double variance; // unbiased
};

//! Two-pass mean and unbiased variance, folded in index order.
inline MeanVar mean_variance(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  double m = 0.0;
  for (double x : xs) m += x;
  m /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return {m, xs.size() > 1 ? ss / (n - 1.0) : 0.0};
}

//! sup |F_a - F_b| of the two empirical distribution functions.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

//! Asymptotic two-sample critical value sqrt(-ln(alpha/2)/2) * sqrt((n+m)/(nm)).
inline double ks_critical(double alpha, std::size_t n, std::size_t m) {
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  return std::sqrt(-std::log(alpha / 2.0) / 2.0) * std::sqrt((nn + mm) / (nn * mm));
}

} // namespace fbmkde
