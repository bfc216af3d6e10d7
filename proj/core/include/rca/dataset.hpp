#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rca {

// Process location a column was measured at.
enum class Stage { A_raw_material, B_dye, C_yarn, D_carpet, E_quality, unknown };

enum class Provenance { original, statistical_min, statistical_max, calculated, shadow };

std::string_view to_string(Stage stage);
std::string_view to_string(Provenance provenance);
Stage parse_stage(std::string_view text);
Provenance parse_provenance(std::string_view text);

struct ColumnMeta {
  std::string name;
  Stage stage = Stage::unknown;
  Provenance provenance = Provenance::original;
  std::optional<std::string> unit;

  bool operator==(const ColumnMeta&) const = default;
};

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  // `data` is row-major and must hold rows * cols values.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  std::vector<double> column(std::size_t c) const;

  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Feature table with per-cell missing mask and optional binary labels
// (0 = compliant, 1 = off-colour). Immutable once built; every transform
// returns a new Dataset.
class Dataset {
 public:
  Dataset() = default;

  // Validates shapes, unique column names, and that labels are 0/1.
  Dataset(std::vector<ColumnMeta> columns, Matrix values,
          std::vector<std::uint8_t> missing,
          std::optional<std::vector<int>> labels = std::nullopt);

  // Dataset without missing cells.
  static Dataset dense(std::vector<ColumnMeta> columns, Matrix values,
                       std::optional<std::vector<int>> labels = std::nullopt);

  std::size_t n_rows() const { return values_.rows(); }
  std::size_t n_cols() const { return columns_.size(); }

  const std::vector<ColumnMeta>& columns() const { return columns_; }
  const ColumnMeta& column(std::size_t c) const { return columns_[c]; }
  std::vector<std::string> column_names() const;

  const Matrix& values() const { return values_; }
  double value(std::size_t r, std::size_t c) const { return values_(r, c); }

  bool is_missing(std::size_t r, std::size_t c) const {
    return missing_[r * n_cols() + c] != 0;
  }
  const std::vector<std::uint8_t>& missing_mask() const { return missing_; }
  bool any_missing() const;
  std::size_t missing_count(std::size_t c) const;

  bool has_labels() const { return labels_.has_value(); }
  // Throws ValidationError when the dataset is unlabelled.
  const std::vector<int>& labels() const;
  const std::optional<std::vector<int>>& maybe_labels() const { return labels_; }

  std::optional<std::size_t> find_column(std::string_view name) const;
  // Throws ValidationError naming the column when absent.
  std::size_t column_index(std::string_view name) const;

  // Observed (non-missing) entries of column c, in row order.
  std::vector<double> observed(std::size_t c) const;

  Dataset select_columns(std::span<const std::size_t> cols) const;
  Dataset select_rows(std::span<const std::size_t> rows) const;
  Dataset with_labels(std::optional<std::vector<int>> labels) const;
  Dataset with_columns(std::vector<ColumnMeta> columns) const;
  // Appends columns (all rows observed unless the mask says otherwise).
  Dataset append_columns(std::vector<ColumnMeta> columns, const Matrix& values,
                         std::vector<std::uint8_t> missing = {}) const;

  bool operator==(const Dataset&) const = default;

 private:
  std::vector<ColumnMeta> columns_;
  Matrix values_;
  std::vector<std::uint8_t> missing_;
  std::optional<std::vector<int>> labels_;
};

// One finished batch made of weighted sub-instance rows.
struct BatchGroup {
  struct Member {
    std::size_t row;
    double quantity;  // kg, > 0
    bool operator==(const Member&) const = default;
  };
  std::string batch_id;
  std::vector<Member> members;

  bool operator==(const BatchGroup&) const = default;
};

// Checks quantities are positive, rows are in range, and no row is shared.
void validate_groups(std::span<const BatchGroup> groups, std::size_t n_rows);

struct GroupTable {
  std::vector<BatchGroup> groups;
  // Per sub-instance row: 1 coloured, 0 uncoloured. Present when the groups
  // file carries a `coloured` column.
  std::optional<std::vector<std::uint8_t>> coloured;
};

struct ColumnStats {
  double min;
  double max;
  double median;
  double missing_fraction;
};

// Statistics over non-missing entries. DomainError when every entry is missing.
ColumnStats column_stats(const Dataset& ds, std::size_t col);

// CSV: header row, comma separated, LF or CRLF, empty cell = missing.
Dataset parse_csv(std::istream& in, const std::optional<std::string>& label_column);
Dataset load_csv(const std::filesystem::path& path,
                 const std::optional<std::string>& label_column);
void write_csv(std::ostream& out, const Dataset& ds,
               const std::string& label_column = "label");
void write_csv(const std::filesystem::path& path, const Dataset& ds,
               const std::string& label_column = "label");

// Groups CSV: `row,batch_id,quantity[,coloured]`, one line per sub-instance.
GroupTable parse_groups(std::istream& in);
GroupTable load_groups(const std::filesystem::path& path);
void write_groups(const std::filesystem::path& path, const GroupTable& table);

// Metadata sidecar: JSON object mapping column name -> {stage, provenance, unit}.
using MetadataMap = std::map<std::string, ColumnMeta>;
MetadataMap load_metadata(const std::filesystem::path& path);
void write_metadata(const std::filesystem::path& path, const Dataset& ds);
// Columns named in the map take its stage/provenance/unit; others unchanged.
Dataset apply_metadata(const Dataset& ds, const MetadataMap& metadata);

// Shortest round-trip decimal text for a double.
std::string format_double(double value);

}  // namespace rca
