#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/dynamic_bitset.hpp>
#include <nlohmann/json.hpp>

#include "rca/dataset.hpp"
#include "rca/preprocess.hpp"
#include "rca/trees.hpp"

namespace rca {

using RowSet = boost::dynamic_bitset<std::uint64_t>;

enum class ConditionOp { le, gt };

struct Condition {
  std::size_t feature = 0;
  std::string name;
  ConditionOp op = ConditionOp::le;
  double threshold = 0.0;

  bool holds(double value) const {
    return op == ConditionOp::le ? value <= threshold : value > threshold;
  }
  bool operator==(const Condition&) const = default;
};

// Conjunction of threshold conditions with statistics measured against the
// model's own predictions on a reference dataset.
struct Rule {
  std::vector<Condition> conditions;
  std::size_t support = 0;
  double model_precision = 0.0;
  double model_recall = 0.0;

  bool satisfied_by(std::span<const double> row) const;
  bool operator==(const Rule&) const = default;
};

struct RuleList {
  std::vector<Rule> rules;
  std::size_t reference_rows = 0;
  std::size_t model_positives = 0;
  // Union of the rules against the model's positive predictions.
  double precision = 0.0;
  double recall = 0.0;
  bool precision_defined = false;
  std::vector<std::string> warnings;

  bool operator==(const RuleList&) const = default;
};

struct ExplainerConfig {
  double min_rule_precision = 0.95;
  std::size_t min_support = 2;
  // Maximum number of trees whose paths may be combined into one rule.
  std::size_t max_stages = 3;
  double coverage_target = 0.95;
  // Unresolved rules carried into the next join stage, best first.
  std::size_t max_candidates_per_stage = 5000;

  void validate() const;
};

// Half-open interval (lo, hi] on one feature.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool operator==(const Interval&) const = default;
};

// Working form of a rule during mining.
struct CandidateRule {
  std::vector<std::pair<std::size_t, Interval>> bounds;  // sorted by feature
  std::vector<std::uint32_t> trees;                      // contributing trees, sorted
  RowSet cover;
  std::size_t support = 0;
  std::size_t positives = 0;

  double precision() const {
    return support == 0 ? 0.0 : static_cast<double>(positives) / static_cast<double>(support);
  }
  std::size_t condition_count() const;
};

// Rows the model labels positive.
RowSet model_positive_rows(const TreeModel& model, const Matrix& x);

// Every root-to-node path prefix of every tree, merged to tight intervals,
// deduplicated, and filtered by support and positive coverage.
std::vector<CandidateRule> tree_paths_to_rules(const TreeModel& model, const Matrix& x,
                                               const ExplainerConfig& cfg);

// Extends each rule by one path from a tree not yet used by it.
std::vector<CandidateRule> apriori_join(std::span<const CandidateRule> stage_k,
                                        std::span<const CandidateRule> stage_1,
                                        const RowSet& positives, const ExplainerConfig& cfg);

struct Fidelity {
  std::size_t support = 0;
  double model_precision = 0.0;
  double model_recall = 0.0;
  bool defined = false;  // false when no reference row satisfies the rule
};

Fidelity rule_fidelity(const Rule& rule, const TreeModel& model, const Matrix& x);

Rule to_rule(const CandidateRule& candidate, std::span<const std::string> names,
             std::size_t model_positives);

// Greedy cover of the model-positive rows by high-precision candidates.
RuleList minimize_rule_list(std::span<const CandidateRule> candidates, const RowSet& positives,
                            std::span<const std::string> names, const ExplainerConfig& cfg);

struct Explanation {
  RuleList rules;
  std::vector<std::size_t> candidates_per_stage;
  double runtime_ms = 0.0;
};

Explanation explain(const TreeModel& model, const Matrix& x, const ExplainerConfig& cfg);

// Human-readable listing: one block per rule, `name <= v` / `name > v`.
std::string render_rules(const RuleList& list);
nlohmann::ordered_json to_json(const RuleList& list);
RuleList rule_list_from_json(const nlohmann::json& doc);

// Maps thresholds of rules learned on min-max scaled data back to raw units.
Rule denormalize(const Rule& rule, const ScalerParams& params);

// Rows of `ds` satisfying any rule; conditions are resolved by column name.
RowSet rule_membership(std::span<const Rule> rules, const Dataset& ds);

}  // namespace rca
