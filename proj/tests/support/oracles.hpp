#pragma once

// Reference computations written independently of the library, used to check
// it. They favour obviousness over speed.

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <tuple>
#include <vector>

#include "rca/dataset.hpp"
#include "rca/rules.hpp"
#include "rca/trees.hpp"

namespace oracle {

// Exact P(X >= k), X ~ Binomial(n, 1/2), from integer binomial coefficients.
double half_binomial_upper_tail(int n, int k);
// Smallest k with P(X >= k) < alpha.
int confirmation_threshold(int n, double alpha);

double gini(double n0, double n1);

struct SplitChoice {
  std::size_t feature;
  double threshold;
  double decrease;
};

// Every (feature, midpoint) pair is tried and scored by scanning all rows.
std::optional<SplitChoice> brute_force_split(const rca::Matrix& x, std::span<const int> y,
                                             std::span<const std::size_t> rows,
                                             std::span<const std::size_t> features,
                                             std::size_t min_samples_leaf = 1);

// CIE L*a*b* with the epsilon/kappa formulation.
struct Lab {
  double l, a, b;
};
Lab cie_lab(double x, double y, double z, double xn = 95.047, double yn = 100.0,
            double zn = 108.883);

double weighted_mean(std::span<const double> v, std::span<const double> q);
double sorted_median(std::vector<double> v);

// Pearson chi-squared of a 2 x 2 contingency table of class-summed values.
double contingency_chi2(double f_class0, double f_class1, double n_class0, double n_class1);

// Covariance over the product of standard deviations, two-pass.
double pearson(std::span<const double> x, std::span<const double> y);

// Bounds of every root-to-node prefix of every tree, computed by collecting the
// raw edge conditions and tightening them per feature. Rows are counted by
// testing the conditions one by one.
struct PathRule {
  std::vector<std::tuple<std::size_t, double, double>> bounds;  // feature, lo, hi
  std::size_t support;
  std::size_t positives;
  bool operator<(const PathRule& o) const { return bounds < o.bounds; }
  bool operator==(const PathRule& o) const {
    return bounds == o.bounds && support == o.support && positives == o.positives;
  }
};
std::set<PathRule> enumerate_paths(const rca::TreeModel& model, const rca::Matrix& x,
                                   std::size_t min_support);

// Greedy cover with the same ordering rules as the library (gain, precision,
// fewer conditions, lexicographic bounds), over plain bool vectors.
struct CoverCandidate {
  std::vector<bool> rows;
  std::size_t positives;
  std::size_t support;
  std::size_t conditions;
  std::vector<std::tuple<std::size_t, double, double>> bounds;
};
std::vector<std::size_t> greedy_cover(const std::vector<CoverCandidate>& candidates,
                                      const std::vector<bool>& positives, double min_precision,
                                      double coverage_target);

}  // namespace oracle
