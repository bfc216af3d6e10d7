#include "rca/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rca/error.hpp"

namespace rca::stats {

double median(std::vector<double> values) {
  if (values.empty()) throw DomainError("median of empty sample");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DomainError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

double stddev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double chi2_sf_df1(double statistic) {
  if (statistic <= 0.0) return 1.0;
  return std::erfc(std::sqrt(0.5 * statistic));
}

namespace {

double log_binomial_pmf(int n, int k, double p) {
  const double log_choose = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                            std::lgamma(n - k + 1.0);
  double log_p = 0.0;
  if (k > 0) log_p += k * std::log(p);
  if (n - k > 0) log_p += (n - k) * std::log1p(-p);
  return log_choose + log_p;
}

}  // namespace

double binomial_upper_tail(int n, int k, double p) {
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  double total = 0.0;
  for (int i = n; i >= k; --i) total += std::exp(log_binomial_pmf(n, i, p));
  return std::min(total, 1.0);
}

double binomial_lower_tail(int n, int k, double p) {
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  double total = 0.0;
  for (int i = 0; i <= k; ++i) total += std::exp(log_binomial_pmf(n, i, p));
  return std::min(total, 1.0);
}

}  // namespace rca::stats
