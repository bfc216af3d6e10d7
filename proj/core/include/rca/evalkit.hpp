#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rca/dataset.hpp"
#include "rca/feature_select.hpp"
#include "rca/trees.hpp"

namespace rca {

// Positive = off-colour = label 1.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

// nullopt marks a 0/0 ratio.
struct Metrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> fpr;

  bool operator==(const Metrics&) const = default;
};

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred);
Metrics metrics(const ConfusionMatrix& cm);
// Harmonic mean; nullopt when p + r == 0.
std::optional<double> f1_score(double precision, double recall);

struct CVPlan {
  std::vector<std::vector<std::size_t>> folds;  // each sorted ascending
  std::uint64_t seed = 0;
  bool stratified = true;

  std::size_t k() const { return folds.size(); }
  // All rows outside `fold`, ascending.
  std::vector<std::size_t> training_rows(std::size_t fold) const;
};

// Per class: seeded shuffle, then deal round-robin into k folds. The dealing
// offset carries over between classes so fold sizes stay within one.
CVPlan stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed);

struct ModelSpec {
  ModelKind kind = ModelKind::random_forest;
  TreeConfig tree{};
  ForestConfig forest{};
  BoostConfig boost{};

  nlohmann::ordered_json params_json() const;
};

// Fits `spec` with every internal seed replaced by `seed`.
TreeModel fit_model(const ModelSpec& spec, const Matrix& x, std::span<const int> y,
                    std::uint64_t seed, std::vector<std::string> names = {},
                    std::size_t threads = 1);

struct SelectorSpec {
  SelectionMethod method = SelectionMethod::none;
  std::size_t k = 50;
  double target_threshold = 0.1;
  double redundancy_threshold = 0.9;
  BorutaConfig boruta{};

  nlohmann::ordered_json params_json() const;
};

// k larger than the column count keeps every column.
SelectionResult run_selector(const SelectorSpec& spec, const Matrix& x, std::span<const int> y,
                             std::uint64_t seed, std::size_t threads = 1);

struct SearchSpace {
  int depth_lo = 1;
  int depth_hi = 100;
  // When non-empty, depth is drawn from this list instead of the range.
  // kUnboundedDepth is allowed.
  std::vector<int> depth_choices;
  int estimators_lo = 10;
  int estimators_hi = 200;
  std::vector<double> learning_rates{0.05, 0.1, 0.3};
  std::size_t n_draws = 25;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::ordered_json to_json() const;
};

struct SearchDraw {
  int max_depth = 0;
  int n_estimators = 0;
  double learning_rate = 0.0;
  std::optional<double> score;  // inner mean F1
};

struct SearchResult {
  SearchDraw best;
  std::size_t best_index = 0;
  std::vector<SearchDraw> leaderboard;
};

ModelSpec apply_draw(const ModelSpec& base, const SearchDraw& draw);

// Scores each draw by stratified inner-k mean F1; ties go to the earlier draw.
SearchResult random_search(const SearchSpace& space, const ModelSpec& base, const Matrix& x,
                           std::span<const int> y, std::size_t inner_k = 5,
                           std::size_t threads = 1);

struct MetricSummary {
  std::optional<double> mean;
  std::optional<double> std;  // sample standard deviation; 0 for one value
  std::size_t defined = 0;
  std::size_t total = 0;
};

MetricSummary summarize(std::span<const std::optional<double>> values);

struct FoldResult {
  std::size_t fold = 0;
  ConfusionMatrix cm;
  Metrics metrics;
  std::size_t n_selected = 0;
  std::optional<SearchDraw> tuned;
};

struct MetricsSummary {
  MetricSummary precision;
  MetricSummary recall;
  MetricSummary f1;
  MetricSummary fpr;
};

MetricsSummary summarize(std::span<const FoldResult> folds);

struct CVResult {
  std::uint64_t seed = 0;
  std::vector<FoldResult> folds;
  MetricsSummary summary;
  std::vector<std::string> warnings;
};

struct CVOptions {
  std::optional<SearchSpace> tune;
  std::size_t inner_k = 5;
  // Folds run concurrently; results do not depend on this.
  std::size_t threads = 1;
};

// Per-fold selections fitted on the min-max scaled training folds; shared by
// every model evaluated on the same plan.
std::vector<SelectionResult> fold_selections(const SelectorSpec& selector, const Dataset& ds,
                                             const CVPlan& plan, std::size_t threads = 1);

// Scaler, selector, optional tuning and model are fitted inside each training
// fold only. `selections`, when given, must come from fold_selections on the
// same plan.
CVResult cross_validate(const ModelSpec& model, const SelectorSpec& selector, const Dataset& ds,
                        const CVPlan& plan, const CVOptions& opt = {},
                        const std::vector<SelectionResult>* selections = nullptr);

// One sweep cell: a model kind paired with a selector, over all repeats.
struct CellResult {
  ModelKind model = ModelKind::random_forest;
  SelectionMethod selector = SelectionMethod::none;
  std::vector<CVResult> runs;
  // Pooled over every fold of every repeat.
  MetricsSummary summary;
  double mean_selected = 0.0;
};

CellResult make_cell(ModelKind model, SelectionMethod selector, std::vector<CVResult> runs);

nlohmann::ordered_json to_json(const Metrics& m);
nlohmann::ordered_json to_json(const MetricSummary& s);
nlohmann::ordered_json to_json(const CVResult& r);
nlohmann::ordered_json to_json(const CellResult& c);

// Long format, one line per cell:
// model,selector,precision,recall,f1,fpr,precision_std,recall_std,f1_std,fpr_std,mean_selected
std::string table_csv(std::span<const CellResult> cells);

struct TableRow {
  std::string model;
  std::string selector;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

std::vector<TableRow> parse_table_csv(const std::string& text);

// Models as rows, selectors as column groups of P/R/F1; `*` marks the best F1
// within each selector.
std::string render_table(std::span<const TableRow> rows);

}  // namespace rca
