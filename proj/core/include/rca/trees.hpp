#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rca/dataset.hpp"

namespace rca {

enum class ModelKind { decision_tree, random_forest, boosted };

// "dt", "rf", "xgb"
std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

inline constexpr int kUnboundedDepth = std::numeric_limits<int>::max();

// Internal nodes route x[feature] <= threshold to `left`, otherwise `right`.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  // Training rows reaching the node (bootstrap duplicates counted) by class.
  std::array<std::size_t, 2> counts{0, 0};
  // Leaf payload: P(class 1) for classification trees, additive score for
  // boosted trees.
  double value = 0.0;
  // Loss reduction of the split (boosted trees only).
  double gain = 0.0;

  bool is_leaf() const { return feature < 0; }
  std::size_t samples() const { return counts[0] + counts[1]; }
  bool operator==(const TreeNode&) const = default;
};

class Tree {
 public:
  Tree() = default;
  explicit Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  std::size_t leaf_index(std::span<const double> x) const;
  const TreeNode& leaf(std::span<const double> x) const { return nodes_[leaf_index(x)]; }
  // Edges on the longest root-to-leaf path; 0 for a single leaf.
  int depth() const;
  std::size_t leaf_count() const;

  bool operator==(const Tree&) const = default;

 private:
  std::vector<TreeNode> nodes_;
};

// CART settings. Gini is the only criterion.
struct TreeConfig {
  int max_depth = kUnboundedDepth;
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  // Features examined per split; nullopt = all.
  std::optional<std::size_t> max_features;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ForestConfig {
  std::size_t n_estimators = 92;
  int max_depth = 75;
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  bool bootstrap = true;
  // nullopt = ceil(sqrt(n_features)).
  std::optional<std::size_t> max_features;
  std::uint64_t seed = 0;
  // Worker threads for tree fitting; 0 = hardware concurrency.
  std::size_t threads = 1;

  void validate() const;
};

struct BoostConfig {
  std::size_t n_estimators = 121;
  int max_depth = 8;
  double learning_rate = 0.1;
  double lambda_l2 = 1.0;
  // Initial probability; the starting margin is its logit.
  double base_score = 0.5;
  std::size_t min_samples_leaf = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Any fitted model. A decision tree is a one-tree model; the forest votes;
// the boosted model sums leaf scores into a logistic margin.
struct TreeModel {
  ModelKind kind = ModelKind::decision_tree;
  std::vector<Tree> trees;
  std::size_t n_features = 0;
  std::vector<std::string> feature_names;
  double base_margin = 0.0;
  double learning_rate = 1.0;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();

  bool operator==(const TreeModel&) const = default;
};

double gini(std::size_t n0, std::size_t n1);

struct Split {
  std::size_t feature;
  double threshold;
  double impurity_decrease;  // parent gini minus weighted child gini
};

// Best Gini split of the node holding `rows` (duplicates allowed) over the
// candidate features. Thresholds are midpoints of consecutive distinct values;
// ties go to the lower feature index, then the lower threshold. None when no
// split has a positive decrease.
std::optional<Split> best_split(const Matrix& x, std::span<const int> y,
                                std::span<const std::size_t> rows,
                                std::span<const std::size_t> candidate_features,
                                const TreeConfig& cfg);
// Same scan, but a zero decrease also qualifies. Growth falls back to it so
// impure nodes like a 4-point XOR still split.
std::optional<Split> zero_gain_split(const Matrix& x, std::span<const int> y,
                                     std::span<const std::size_t> rows,
                                     std::span<const std::size_t> candidate_features,
                                     const TreeConfig& cfg);

Tree fit_tree(const Matrix& x, std::span<const int> y, const TreeConfig& cfg);
// Grows on an explicit row multiset (used for bootstrap samples).
Tree fit_tree(const Matrix& x, std::span<const int> y, std::span<const std::size_t> rows,
              const TreeConfig& cfg);

TreeModel fit_decision_tree(const Matrix& x, std::span<const int> y, const TreeConfig& cfg,
                            std::vector<std::string> feature_names = {});
TreeModel fit_forest(const Matrix& x, std::span<const int> y, const ForestConfig& cfg,
                     std::vector<std::string> feature_names = {});

// Called after each boosting round with (round index, model so far).
using BoostObserver = std::function<void(std::size_t, const TreeModel&)>;

TreeModel fit_boosted(const Matrix& x, std::span<const int> y, const BoostConfig& cfg,
                      std::vector<std::string> feature_names = {},
                      const BoostObserver& observer = {});

// Boosted margin using only the first `n_trees` trees.
double boosted_margin(const TreeModel& model, std::span<const double> row,
                      std::size_t n_trees = std::numeric_limits<std::size_t>::max());

double predict_proba_row(const TreeModel& model, std::span<const double> row);
int predict_row(const TreeModel& model, std::span<const double> row);

// ValidationError when the column count differs from training.
std::vector<double> predict_proba(const TreeModel& model, const Matrix& x);
std::vector<int> predict(const TreeModel& model, const Matrix& x);

// Class a single classification tree assigns (majority, ties to 0).
int tree_class(const TreeNode& leaf);

// Mean decrease in impurity per feature, normalized to sum to 1.
std::vector<double> mdi_importances(const TreeModel& model);

double log_loss(std::span<const double> proba, std::span<const int> y);

nlohmann::ordered_json to_json(const TreeModel& model);
TreeModel model_from_json(const nlohmann::json& doc);

nlohmann::ordered_json to_json(const TreeConfig& cfg);
nlohmann::ordered_json to_json(const ForestConfig& cfg);
nlohmann::ordered_json to_json(const BoostConfig& cfg);

}  // namespace rca
