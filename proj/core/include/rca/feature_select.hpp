#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rca/dataset.hpp"
#include "rca/trees.hpp"

namespace rca {

enum class SelectionMethod { none, chi2_kbest, pearson, boruta };

std::string_view to_string(SelectionMethod method);
// Accepts the CLI spellings: none, chi2, pearson, boruta.
SelectionMethod parse_selection_method(std::string_view text);

struct SelectionResult {
  SelectionMethod method = SelectionMethod::none;
  // One score per input column: chi2 statistic, |r| to target, or Boruta hits.
  std::vector<double> scores;
  // Column indices, highest score first (ties to the lower index).
  std::vector<std::size_t> selected;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  nlohmann::ordered_json diagnostics = nlohmann::ordered_json::object();
  std::vector<std::string> warnings;

  bool operator==(const SelectionResult&) const = default;
};

// `names` labels the per-feature entries; it must match scores in length.
nlohmann::ordered_json to_json(const SelectionResult& result, std::span<const std::string> names);
SelectionResult selection_from_json(const nlohmann::json& doc);

// Keeps every column.
SelectionResult select_all(std::size_t n_features);

struct Chi2Scores {
  std::vector<double> statistics;
  std::vector<double> p_values;
};

// Class-sum chi-squared test of each non-negative feature against binary
// labels (feature values treated as frequencies), one degree of freedom.
Chi2Scores chi2_scores(const Matrix& x, std::span<const int> y);

// Indices of the k largest scores, ordered by descending score.
SelectionResult select_k_best(std::span<const double> scores, std::size_t k);

// chi2_scores followed by select_k_best, with p-values in the diagnostics.
SelectionResult chi2_kbest(const Matrix& x, std::span<const int> y, std::size_t k);

struct Correlation {
  double r;
  bool degenerate;  // an input had zero variance; r is reported as 0
};

Correlation pearson_r(std::span<const double> x, std::span<const double> y);

// Keeps features with |r to target| >= target_threshold, then drops any
// feature whose |r| to an already kept (more target-correlated) feature is
// >= redundancy_threshold.
SelectionResult pcc_filter(const Matrix& x, std::span<const int> y, double target_threshold,
                           double redundancy_threshold);

struct BorutaConfig {
  std::size_t n_iterations = 100;
  double alpha = 0.05;
  ForestConfig forest{};
  bool keep_tentative = false;
  std::uint64_t seed = 0;
  // Iterations run in parallel on this many workers; 0 = hardware.
  std::size_t threads = 1;

  void validate() const;
};

enum class BorutaDecision { confirmed, tentative, rejected };

// Smallest h with P(X >= h) < alpha for X ~ Binomial(n, 1/2).
int boruta_confirmation_threshold(int n_iterations, double alpha);
// Largest h with P(X <= h) < alpha, or -1 when none exists.
int boruta_rejection_threshold(int n_iterations, double alpha);

SelectionResult boruta(const Matrix& x, std::span<const int> y, const BorutaConfig& cfg);

}  // namespace rca
