#include "rca/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "rca/error.hpp"
#include "rca/stats.hpp"

namespace rca {

void PreprocessConfig::validate() const {
  if (!(sparse_drop_threshold > 0.0 && sparse_drop_threshold <= 1.0)) {
    throw ValidationError(fmt::format("sparse_drop_threshold {} not in (0, 1]",
                                      sparse_drop_threshold));
  }
  if (!(outlier_iqr_multiplier > 0.0)) {
    throw ValidationError(fmt::format("outlier_iqr_multiplier {} must be positive",
                                      outlier_iqr_multiplier));
  }
}

nlohmann::ordered_json to_json(const ScalerParams& params) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& r : params.ranges) doc[r.name] = {{"min", r.min}, {"max", r.max}};
  return doc;
}

ScalerParams scaler_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("scaler parameters must be a JSON object");
  ScalerParams params;
  for (const auto& [name, range] : doc.items()) {
    params.ranges.push_back({name, range.at("min").get<double>(), range.at("max").get<double>()});
    if (params.ranges.back().min > params.ranges.back().max) {
      throw ValidationError(fmt::format("scaler range for '{}' has min > max", name));
    }
  }
  return params;
}

Dataset aggregate_batches(const Dataset& ds, std::span<const BatchGroup> groups,
                          const PreprocessConfig& cfg) {
  validate_groups(groups, ds.n_rows());
  const std::size_t p = ds.n_cols();
  const std::size_t blocks = cfg.emit_min_max_features ? 3 : 1;
  const std::size_t out_cols = p * blocks;

  std::vector<ColumnMeta> columns = ds.columns();
  if (cfg.emit_min_max_features) {
    for (auto [prov, suffix] : {std::pair{Provenance::statistical_min, "_min"},
                                std::pair{Provenance::statistical_max, "_max"}}) {
      for (const auto& c : ds.columns()) {
        ColumnMeta meta = c;
        meta.name += suffix;
        meta.provenance = prov;
        columns.push_back(std::move(meta));
      }
    }
  }

  Matrix values(groups.size(), out_cols);
  std::vector<std::uint8_t> missing(groups.size() * out_cols, 0);
  std::optional<std::vector<int>> labels;
  if (ds.has_labels()) labels.emplace(groups.size(), 0);

  for (std::size_t b = 0; b < groups.size(); ++b) {
    const auto& members = groups[b].members;
    for (std::size_t c = 0; c < p; ++c) {
      double weighted = 0.0;
      double total_q = 0.0;
      double lo = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      for (const auto& m : members) {
        if (ds.is_missing(m.row, c)) continue;
        const double v = ds.value(m.row, c);
        weighted += v * m.quantity;
        total_q += m.quantity;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (total_q == 0.0) {
        for (std::size_t k = 0; k < blocks; ++k) missing[b * out_cols + k * p + c] = 1;
        continue;
      }
      values(b, c) = weighted / total_q;
      if (cfg.emit_min_max_features) {
        values(b, p + c) = lo;
        values(b, 2 * p + c) = hi;
      }
    }
    if (labels) {
      int positives = 0;
      for (const auto& m : members) positives += ds.labels()[m.row];
      const int n = static_cast<int>(members.size());
      (*labels)[b] = cfg.batch_label == BatchLabelRule::max ? (positives > 0 ? 1 : 0)
                                                            : (2 * positives >= n ? 1 : 0);
    }
  }
  return Dataset(std::move(columns), std::move(values), std::move(missing), std::move(labels));
}

SparseDropResult drop_sparse_columns(const Dataset& ds, const PreprocessConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> keep;
  std::vector<std::string> dropped;
  const auto n = static_cast<double>(ds.n_rows());
  for (std::size_t c = 0; c < ds.n_cols(); ++c) {
    const double fraction = n > 0 ? static_cast<double>(ds.missing_count(c)) / n : 0.0;
    const bool all_missing = ds.n_rows() > 0 && ds.missing_count(c) == ds.n_rows();
    if (fraction > cfg.sparse_drop_threshold || all_missing) {
      dropped.push_back(ds.column(c).name);
    } else {
      keep.push_back(c);
    }
  }
  if (keep.empty()) throw ValidationError("every column exceeds the sparse-drop threshold");
  return {ds.select_columns(keep), std::move(dropped)};
}

Dataset impute_median(const Dataset& ds) {
  Matrix values = ds.values();
  for (std::size_t c = 0; c < ds.n_cols(); ++c) {
    if (ds.missing_count(c) == 0) continue;
    std::vector<double> obs = ds.observed(c);
    if (obs.empty()) {
      throw DomainError(fmt::format(
          "column '{}' is entirely missing; run drop_sparse_columns first", ds.column(c).name));
    }
    const double med = stats::median(std::move(obs));
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
      if (ds.is_missing(r, c)) values(r, c) = med;
    }
  }
  return Dataset::dense(ds.columns(), std::move(values), ds.maybe_labels());
}

Dataset clip_outliers(const Dataset& ds, const PreprocessConfig& cfg) {
  cfg.validate();
  if (ds.any_missing()) throw ValidationError("clip_outliers requires imputed data");
  Matrix values = ds.values();
  const double k = cfg.outlier_iqr_multiplier;
  for (std::size_t c = 0; c < ds.n_cols(); ++c) {
    std::vector<double> col = values.column(c);
    if (col.empty()) continue;
    const double q1 = stats::quantile(col, 0.25);
    const double q3 = stats::quantile(col, 0.75);
    const double iqr = q3 - q1;
    if (iqr == 0.0) continue;
    const double lower = q1 - k * iqr;
    const double upper = q3 + k * iqr;
    double in_lo = std::numeric_limits<double>::infinity();
    double in_hi = -std::numeric_limits<double>::infinity();
    for (double v : col) {
      if (v >= lower && v <= upper) {
        in_lo = std::min(in_lo, v);
        in_hi = std::max(in_hi, v);
      }
    }
    for (std::size_t r = 0; r < col.size(); ++r) {
      if (col[r] < lower) values(r, c) = in_lo;
      if (col[r] > upper) values(r, c) = in_hi;
    }
  }
  return Dataset::dense(ds.columns(), std::move(values), ds.maybe_labels());
}

std::function<bool(const std::string&)> name_filter(std::vector<std::string> patterns) {
  return [patterns = std::move(patterns)](const std::string& name) {
    if (patterns.empty()) return true;
    for (const auto& p : patterns) {
      if (!p.empty() && p.back() == '*') {
        if (name.compare(0, p.size() - 1, p, 0, p.size() - 1) == 0) return true;
      } else if (name == p) {
        return true;
      }
    }
    return false;
  };
}

Dataset normalize_by_quantity(const Dataset& ds, const std::string& quantity_column,
                              const std::function<bool(const std::string&)>& filter) {
  const std::size_t qc = ds.column_index(quantity_column);
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    if (ds.is_missing(r, qc) || !(ds.value(r, qc) > 0.0)) {
      throw ValidationError(fmt::format("row {}: quantity '{}' must be present and positive",
                                        r + 1, quantity_column));
    }
  }
  Matrix values = ds.values();
  for (std::size_t c = 0; c < ds.n_cols(); ++c) {
    if (c == qc || !filter(ds.column(c).name)) continue;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) values(r, c) /= ds.value(r, qc);
  }
  return Dataset(ds.columns(), std::move(values), ds.missing_mask(), ds.maybe_labels());
}

ScaledDataset minmax_fit_transform(const Dataset& ds) {
  if (ds.any_missing()) throw ValidationError("min-max scaling requires imputed data");
  ScalerParams params;
  for (std::size_t c = 0; c < ds.n_cols(); ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
      lo = std::min(lo, ds.value(r, c));
      hi = std::max(hi, ds.value(r, c));
    }
    if (ds.n_rows() == 0) lo = hi = 0.0;
    params.ranges.push_back({ds.column(c).name, lo, hi});
  }
  Dataset scaled = minmax_apply(ds, params);
  return {std::move(scaled), std::move(params)};
}

Dataset minmax_apply(const Dataset& ds, const ScalerParams& params) {
  if (ds.any_missing()) throw ValidationError("min-max scaling requires imputed data");
  Matrix values(ds.n_rows(), ds.n_cols());
  for (std::size_t c = 0; c < ds.n_cols(); ++c) {
    const auto& name = ds.column(c).name;
    auto it = std::find_if(params.ranges.begin(), params.ranges.end(),
                           [&](const auto& r) { return r.name == name; });
    if (it == params.ranges.end()) {
      throw ValidationError(fmt::format("no scaler range for column '{}'", name));
    }
    const double span = it->max - it->min;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
      double v = span > 0.0 ? (ds.value(r, c) - it->min) / span : 0.0;
      values(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return Dataset::dense(ds.columns(), std::move(values), ds.maybe_labels());
}

}  // namespace rca
