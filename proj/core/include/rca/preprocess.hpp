#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rca/dataset.hpp"

namespace rca {

enum class BatchLabelRule { max, majority };

struct PreprocessConfig {
  // Columns missing in more than this fraction of rows are removed.
  double sparse_drop_threshold = 0.55;
  // Tukey fence multiplier k in [Q1 - k*IQR, Q3 + k*IQR].
  double outlier_iqr_multiplier = 1.5;
  std::optional<std::string> quantity_column;
  // Names (or `prefix*` patterns) divided by the quantity column; empty = all
  // columns except the quantity column itself.
  std::vector<std::string> quantity_filter;
  bool emit_min_max_features = true;
  BatchLabelRule batch_label = BatchLabelRule::max;

  void validate() const;
};

// Per-column (min, max) captured when fitting the min-max scaler.
struct ScalerParams {
  struct Range {
    std::string name;
    double min;
    double max;
    bool operator==(const Range&) const = default;
  };
  std::vector<Range> ranges;

  bool operator==(const ScalerParams&) const = default;
};

nlohmann::ordered_json to_json(const ScalerParams& params);
ScalerParams scaler_from_json(const nlohmann::json& doc);

// One row per batch: quantity-weighted means of the observed sub-instance
// values, plus `<name>_min` / `<name>_max` columns when configured.
Dataset aggregate_batches(const Dataset& ds, std::span<const BatchGroup> groups,
                          const PreprocessConfig& cfg);

struct SparseDropResult {
  Dataset dataset;
  std::vector<std::string> dropped;
};

SparseDropResult drop_sparse_columns(const Dataset& ds, const PreprocessConfig& cfg);

Dataset impute_median(const Dataset& ds);

Dataset clip_outliers(const Dataset& ds, const PreprocessConfig& cfg);

// Divides every column accepted by `filter` by the row's quantity.
Dataset normalize_by_quantity(const Dataset& ds, const std::string& quantity_column,
                              const std::function<bool(const std::string&)>& filter);

// Filter accepting exact names and `prefix*` patterns; empty list accepts all.
std::function<bool(const std::string&)> name_filter(std::vector<std::string> patterns);

struct ScaledDataset {
  Dataset dataset;
  ScalerParams params;
};

ScaledDataset minmax_fit_transform(const Dataset& ds);

// Applies stored ranges by column name, clamping results into [0, 1].
Dataset minmax_apply(const Dataset& ds, const ScalerParams& params);

}  // namespace rca
