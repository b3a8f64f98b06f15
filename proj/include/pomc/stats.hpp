#pragma once

// Goodness-of-fit statistics used by the Monte Carlo checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

namespace pomc::stats {

/// Survival function of the Kolmogorov distribution, P(K > lambda).
inline double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.18) {
    // Small-lambda form; the alternating series converges slowly there.
    const double pi = std::numbers::pi;
    const double y = std::exp(-pi * pi / (8.0 * lambda * lambda));
    double s = 0.0;
    for (int k = 1; k <= 20; ++k) s += std::pow(y, (2 * k - 1) * (2 * k - 1));
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Asymptotic p-value with the usual small-sample correction of lambda.
inline double ks_p_value(double d, double effective_n) {
  const double sn = std::sqrt(effective_n);
  return kolmogorov_q((sn + 0.12 + 0.11 / sn) * d);
}

/// Two-sample Kolmogorov-Smirnov test. Infinite values (censored
/// observations) are allowed and compare equal.
inline TestResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  TestResult res;
  if (a.empty() || b.empty()) return res;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  res.statistic = d;
  res.p_value = ks_p_value(d, na * nb / (na + nb));
  return res;
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
inline TestResult ks_one_sample(std::vector<double> sample, const std::function<double(double)>& cdf) {
  TestResult res;
  if (sample.empty()) return res;
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t k = 0; k < sample.size(); ++k) {
    const double f = cdf(sample[k]);
    d = std::max({d, static_cast<double>(k + 1) / n - f, f - static_cast<double>(k) / n});
  }
  res.statistic = d;
  res.p_value = ks_p_value(d, n);
  return res;
}

struct ChiSquareResult {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
};

/// Chi-square test of homogeneity for two samples of category counts.
/// Categories empty in both samples are dropped.
inline ChiSquareResult chi_square_homogeneity(std::span<const double> counts_a, std::span<const double> counts_b) {
  ChiSquareResult res;
  double na = 0.0, nb = 0.0;
  for (double c : counts_a) na += c;
  for (double c : counts_b) nb += c;
  if (na == 0.0 || nb == 0.0) return res;
  const double total = na + nb;
  std::size_t used = 0;
  for (std::size_t k = 0; k < counts_a.size(); ++k) {
    const double col = counts_a[k] + counts_b[k];
    if (col == 0.0) continue;
    ++used;
    const double ea = na * col / total, eb = nb * col / total;
    res.statistic += (counts_a[k] - ea) * (counts_a[k] - ea) / ea + (counts_b[k] - eb) * (counts_b[k] - eb) / eb;
  }
  if (used < 2) {
    res.statistic = 0.0;
    return res;
  }
  res.dof = used - 1;
  res.p_value = boost::math::gamma_q(0.5 * static_cast<double>(res.dof), 0.5 * res.statistic);
  return res;
}

}  // namespace pomc::stats
