#include "rca/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "rca/error.hpp"
#include "rca/stats.hpp"

namespace rca {

namespace {

constexpr std::array<std::string_view, 6> kStageNames = {
    "A_raw_material", "B_dye", "C_yarn", "D_carpet", "E_quality", "unknown"};
constexpr std::array<std::string_view, 5> kProvenanceNames = {
    "original", "statistical_min", "statistical_max", "calculated", "shadow"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      return cells;
    }
    cells.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

std::optional<double> parse_number(std::string_view text) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  return out;
}

void reject_shadow_columns(const Dataset& ds) {
  for (const auto& c : ds.columns()) {
    if (c.provenance == Provenance::shadow) {
      throw ValidationError(
          fmt::format("shadow column '{}' cannot be persisted", c.name));
    }
  }
}

}  // namespace

std::string_view to_string(Stage stage) { return kStageNames[static_cast<int>(stage)]; }

std::string_view to_string(Provenance provenance) {
  return kProvenanceNames[static_cast<int>(provenance)];
}

Stage parse_stage(std::string_view text) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i) {
    if (kStageNames[i] == text) return static_cast<Stage>(i);
  }
  throw ParseError(fmt::format("unknown stage '{}'", text));
}

Provenance parse_provenance(std::string_view text) {
  for (std::size_t i = 0; i < kProvenanceNames.size(); ++i) {
    if (kProvenanceNames[i] == text) return static_cast<Provenance>(i);
  }
  throw ParseError(fmt::format("unknown provenance '{}'", text));
}

std::string format_double(double value) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) throw ValidationError("matrix data has the wrong size");
}

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

Dataset::Dataset(std::vector<ColumnMeta> columns, Matrix values,
                 std::vector<std::uint8_t> missing,
                 std::optional<std::vector<int>> labels)
    : columns_(std::move(columns)),
      values_(std::move(values)),
      missing_(std::move(missing)),
      labels_(std::move(labels)) {
  if (values_.cols() != columns_.size()) {
    throw ValidationError(fmt::format("{} columns declared but matrix has {}",
                                      columns_.size(), values_.cols()));
  }
  if (missing_.size() != values_.rows() * values_.cols()) {
    throw ValidationError("missing mask shape differs from value matrix");
  }
  std::unordered_set<std::string_view> seen;
  for (const auto& c : columns_) {
    if (!seen.insert(c.name).second) {
      throw ValidationError(fmt::format("duplicate column name '{}'", c.name));
    }
  }
  if (labels_) {
    if (labels_->size() != values_.rows()) {
      throw ValidationError(fmt::format("{} labels for {} rows", labels_->size(),
                                        values_.rows()));
    }
    for (std::size_t r = 0; r < labels_->size(); ++r) {
      const int y = (*labels_)[r];
      if (y != 0 && y != 1) {
        throw ValidationError(fmt::format("label {} at row {} is not 0 or 1", y, r + 1));
      }
    }
  }
}

Dataset Dataset::dense(std::vector<ColumnMeta> columns, Matrix values,
                       std::optional<std::vector<int>> labels) {
  std::vector<std::uint8_t> missing(values.rows() * values.cols(), 0);
  return Dataset(std::move(columns), std::move(values), std::move(missing),
                 std::move(labels));
}

std::vector<std::string> Dataset::column_names() const {
  std::vector<std::string> names;
  names.reserve(columns_.size());
  for (const auto& c : columns_) names.push_back(c.name);
  return names;
}

bool Dataset::any_missing() const {
  return std::any_of(missing_.begin(), missing_.end(), [](auto m) { return m != 0; });
}

std::size_t Dataset::missing_count(std::size_t c) const {
  std::size_t n = 0;
  for (std::size_t r = 0; r < n_rows(); ++r) n += is_missing(r, c) ? 1 : 0;
  return n;
}

const std::vector<int>& Dataset::labels() const {
  if (!labels_) throw ValidationError("dataset has no labels");
  return *labels_;
}

std::optional<std::size_t> Dataset::find_column(std::string_view name) const {
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (columns_[c].name == name) return c;
  }
  return std::nullopt;
}

std::size_t Dataset::column_index(std::string_view name) const {
  if (auto c = find_column(name)) return *c;
  throw ValidationError(fmt::format("no column named '{}'", name));
}

std::vector<double> Dataset::observed(std::size_t c) const {
  std::vector<double> out;
  out.reserve(n_rows());
  for (std::size_t r = 0; r < n_rows(); ++r) {
    if (!is_missing(r, c)) out.push_back(value(r, c));
  }
  return out;
}

Dataset Dataset::select_columns(std::span<const std::size_t> cols) const {
  std::vector<ColumnMeta> meta;
  meta.reserve(cols.size());
  for (std::size_t c : cols) {
    if (c >= n_cols()) throw ValidationError(fmt::format("column index {} out of range", c));
    meta.push_back(columns_[c]);
  }
  Matrix values(n_rows(), cols.size());
  std::vector<std::uint8_t> missing(n_rows() * cols.size());
  for (std::size_t r = 0; r < n_rows(); ++r) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      values(r, j) = value(r, cols[j]);
      missing[r * cols.size() + j] = missing_[r * n_cols() + cols[j]];
    }
  }
  return Dataset(std::move(meta), std::move(values), std::move(missing), labels_);
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
  Matrix values(rows.size(), n_cols());
  std::vector<std::uint8_t> missing(rows.size() * n_cols());
  std::optional<std::vector<int>> labels;
  if (labels_) labels.emplace(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (r >= n_rows()) throw ValidationError(fmt::format("row index {} out of range", r));
    std::copy_n(values_.row(r).begin(), n_cols(), values.row(i).begin());
    std::copy_n(missing_.begin() + static_cast<std::ptrdiff_t>(r * n_cols()), n_cols(),
                missing.begin() + static_cast<std::ptrdiff_t>(i * n_cols()));
    if (labels_) (*labels)[i] = (*labels_)[r];
  }
  return Dataset(columns_, std::move(values), std::move(missing), std::move(labels));
}

Dataset Dataset::with_labels(std::optional<std::vector<int>> labels) const {
  return Dataset(columns_, values_, missing_, std::move(labels));
}

Dataset Dataset::with_columns(std::vector<ColumnMeta> columns) const {
  return Dataset(std::move(columns), values_, missing_, labels_);
}

Dataset Dataset::append_columns(std::vector<ColumnMeta> columns, const Matrix& values,
                                std::vector<std::uint8_t> missing) const {
  if (values.rows() != n_rows() || values.cols() != columns.size()) {
    throw ValidationError("appended block has the wrong shape");
  }
  if (missing.empty()) missing.assign(values.rows() * values.cols(), 0);
  const std::size_t total = n_cols() + columns.size();
  std::vector<ColumnMeta> meta = columns_;
  meta.insert(meta.end(), columns.begin(), columns.end());
  Matrix merged(n_rows(), total);
  std::vector<std::uint8_t> merged_missing(n_rows() * total);
  for (std::size_t r = 0; r < n_rows(); ++r) {
    for (std::size_t c = 0; c < n_cols(); ++c) {
      merged(r, c) = value(r, c);
      merged_missing[r * total + c] = missing_[r * n_cols() + c];
    }
    for (std::size_t c = 0; c < columns.size(); ++c) {
      merged(r, n_cols() + c) = values(r, c);
      merged_missing[r * total + n_cols() + c] = missing[r * columns.size() + c];
    }
  }
  return Dataset(std::move(meta), std::move(merged), std::move(merged_missing), labels_);
}

void validate_groups(std::span<const BatchGroup> groups, std::size_t n_rows) {
  std::vector<std::uint8_t> used(n_rows, 0);
  for (const auto& g : groups) {
    if (g.members.empty()) {
      throw ValidationError(fmt::format("batch '{}' has no sub-instances", g.batch_id));
    }
    for (const auto& m : g.members) {
      if (m.row >= n_rows) {
        throw ValidationError(fmt::format("batch '{}' references row {} of {}",
                                          g.batch_id, m.row, n_rows));
      }
      if (!(m.quantity > 0.0)) {
        throw ValidationError(fmt::format("batch '{}' row {} has non-positive quantity",
                                          g.batch_id, m.row));
      }
      if (used[m.row]++) {
        throw ValidationError(fmt::format("row {} belongs to more than one batch", m.row));
      }
    }
  }
}

ColumnStats column_stats(const Dataset& ds, std::size_t col) {
  if (col >= ds.n_cols()) throw ValidationError(fmt::format("column {} out of range", col));
  std::vector<double> obs = ds.observed(col);
  if (obs.empty()) {
    throw DomainError(fmt::format("column '{}' is entirely missing", ds.column(col).name));
  }
  const auto [lo, hi] = std::minmax_element(obs.begin(), obs.end());
  ColumnStats s{*lo, *hi, 0.0, 0.0};
  s.missing_fraction =
      static_cast<double>(ds.n_rows() - obs.size()) / static_cast<double>(ds.n_rows());
  s.median = stats::median(std::move(obs));
  return s;
}

Dataset parse_csv(std::istream& in, const std::optional<std::string>& label_column) {
  std::string line;
  if (!read_line(in, line)) throw ParseError("CSV is empty: missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_line(line);
  std::optional<std::size_t> label_pos;
  std::vector<ColumnMeta> columns;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (label_column && header[i] == *label_column) {
      label_pos = i;
      continue;
    }
    ColumnMeta meta;
    meta.name = std::string(header[i]);
    columns.push_back(std::move(meta));
  }
  if (label_column && !label_pos) {
    throw ValidationError(fmt::format("label column '{}' not in header", *label_column));
  }

  std::vector<double> values;
  std::vector<std::uint8_t> missing;
  std::vector<int> labels;
  std::size_t row = 0;
  while (read_line(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw ParseError(fmt::format("row {}: expected {} cells, found {}", row,
                                   header.size(), cells.size()));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (label_pos && i == *label_pos) {
        const auto y = parse_number(cells[i]);
        if (!y || (*y != 0.0 && *y != 1.0)) {
          throw ValidationError(
              fmt::format("row {}: label '{}' is not 0 or 1", row, cells[i]));
        }
        labels.push_back(static_cast<int>(*y));
        continue;
      }
      if (cells[i].empty()) {
        values.push_back(0.0);
        missing.push_back(1);
        continue;
      }
      const auto v = parse_number(cells[i]);
      if (!v) {
        throw ParseError(fmt::format("row {}, column '{}': '{}' is not numeric", row,
                                     header[i], cells[i]));
      }
      values.push_back(*v);
      missing.push_back(0);
    }
  }
  Matrix m(row, columns.size(), std::move(values));
  std::optional<std::vector<int>> maybe_labels;
  if (label_pos) maybe_labels = std::move(labels);
  return Dataset(std::move(columns), std::move(m), std::move(missing),
                 std::move(maybe_labels));
}

Dataset load_csv(const std::filesystem::path& path,
                 const std::optional<std::string>& label_column) {
  auto in = open_input(path);
  try {
    return parse_csv(in, label_column);
  } catch (const ParseError& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_csv(std::ostream& out, const Dataset& ds, const std::string& label_column) {
  reject_shadow_columns(ds);
  for (std::size_t c = 0; c < ds.n_cols(); ++c) {
    if (c > 0) out << ',';
    out << ds.column(c).name;
  }
  if (ds.has_labels()) out << (ds.n_cols() > 0 ? "," : "") << label_column;
  out << '\n';
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    for (std::size_t c = 0; c < ds.n_cols(); ++c) {
      if (c > 0) out << ',';
      if (!ds.is_missing(r, c)) out << format_double(ds.value(r, c));
    }
    if (ds.has_labels()) out << (ds.n_cols() > 0 ? "," : "") << ds.labels()[r];
    out << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const Dataset& ds,
               const std::string& label_column) {
  auto out = open_output(path);
  write_csv(out, ds, label_column);
}

GroupTable parse_groups(std::istream& in) {
  std::string line;
  if (!read_line(in, line)) throw ParseError("groups CSV is empty");
  const auto header = split_line(line);
  auto find = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto row_col = find("row");
  const auto batch_col = find("batch_id");
  const auto qty_col = find("quantity");
  const auto colour_col = find("coloured");
  if (!row_col || !batch_col || !qty_col) {
    throw ParseError("groups CSV header must contain row, batch_id, quantity");
  }

  GroupTable table;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::pair<std::size_t, std::uint8_t>> flags;
  std::size_t line_no = 0;
  while (read_line(in, line)) {
    if (trim(line).empty()) continue;
    ++line_no;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw ParseError(fmt::format("groups row {}: expected {} cells, found {}", line_no,
                                   header.size(), cells.size()));
    }
    const auto row = parse_number(cells[*row_col]);
    const auto qty = parse_number(cells[*qty_col]);
    if (!row || *row < 0 || *row != static_cast<double>(static_cast<std::size_t>(*row))) {
      throw ParseError(fmt::format("groups row {}: bad row index '{}'", line_no,
                                   cells[*row_col]));
    }
    if (!qty) {
      throw ParseError(fmt::format("groups row {}: bad quantity '{}'", line_no,
                                   cells[*qty_col]));
    }
    std::string id(cells[*batch_col]);
    auto [it, inserted] = index.try_emplace(id, table.groups.size());
    if (inserted) table.groups.push_back(BatchGroup{id, {}});
    const auto r = static_cast<std::size_t>(*row);
    table.groups[it->second].members.push_back({r, *qty});
    if (colour_col) {
      const auto flag = parse_number(cells[*colour_col]);
      if (!flag || (*flag != 0.0 && *flag != 1.0)) {
        throw ParseError(fmt::format("groups row {}: coloured flag must be 0 or 1", line_no));
      }
      flags.emplace_back(r, static_cast<std::uint8_t>(*flag));
    }
  }
  if (colour_col) {
    std::size_t max_row = 0;
    for (const auto& [r, f] : flags) max_row = std::max(max_row, r + 1);
    std::vector<std::uint8_t> coloured(max_row, 0);
    for (const auto& [r, f] : flags) coloured[r] = f;
    table.coloured = std::move(coloured);
  }
  return table;
}

GroupTable load_groups(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return parse_groups(in);
  } catch (const ParseError& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_groups(const std::filesystem::path& path, const GroupTable& table) {
  auto out = open_output(path);
  out << "row,batch_id,quantity" << (table.coloured ? ",coloured" : "") << '\n';
  for (const auto& g : table.groups) {
    for (const auto& m : g.members) {
      out << m.row << ',' << g.batch_id << ',' << format_double(m.quantity);
      if (table.coloured) out << ',' << static_cast<int>((*table.coloured)[m.row]);
      out << '\n';
    }
  }
}

MetadataMap load_metadata(const std::filesystem::path& path) {
  auto in = open_input(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
  if (!doc.is_object()) throw ParseError(fmt::format("{}: expected a JSON object", path.string()));
  MetadataMap out;
  for (const auto& [name, entry] : doc.items()) {
    ColumnMeta meta;
    meta.name = name;
    if (entry.contains("stage")) meta.stage = parse_stage(entry.at("stage").get<std::string>());
    if (entry.contains("provenance")) {
      meta.provenance = parse_provenance(entry.at("provenance").get<std::string>());
    }
    if (entry.contains("unit") && !entry.at("unit").is_null()) {
      meta.unit = entry.at("unit").get<std::string>();
    }
    out.emplace(name, std::move(meta));
  }
  return out;
}

void write_metadata(const std::filesystem::path& path, const Dataset& ds) {
  reject_shadow_columns(ds);
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& c : ds.columns()) {
    nlohmann::ordered_json entry;
    entry["stage"] = to_string(c.stage);
    entry["provenance"] = to_string(c.provenance);
    entry["unit"] = c.unit ? nlohmann::ordered_json(*c.unit) : nlohmann::ordered_json();
    doc[c.name] = std::move(entry);
  }
  auto out = open_output(path);
  out << doc.dump(2) << '\n';
}

Dataset apply_metadata(const Dataset& ds, const MetadataMap& metadata) {
  std::vector<ColumnMeta> columns = ds.columns();
  for (auto& c : columns) {
    if (auto it = metadata.find(c.name); it != metadata.end()) {
      c.stage = it->second.stage;
      c.provenance = it->second.provenance;
      c.unit = it->second.unit;
    }
  }
  return ds.with_columns(std::move(columns));
}

}  // namespace rca
