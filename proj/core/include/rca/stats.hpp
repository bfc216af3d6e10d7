#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rca::stats {

// Median of a non-empty sample; even counts average the two middle values.
double median(std::vector<double> values);

// Quantile with linear interpolation between order statistics
// (position q*(n-1) in the sorted sample). q in [0, 1], sample non-empty.
double quantile(std::vector<double> values, double q);

double mean(std::span<const double> values);

// Sample standard deviation (n-1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> values);

// Survival function of the chi-squared distribution with one degree of freedom.
double chi2_sf_df1(double statistic);

// P(X >= k) and P(X <= k) for X ~ Binomial(n, p).
double binomial_upper_tail(int n, int k, double p);
double binomial_lower_tail(int n, int k, double p);

}  // namespace rca::stats
