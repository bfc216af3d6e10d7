#include "rca/colour.hpp"

#include <cmath>
#include <numbers>

#include <fmt/core.h>

#include "rca/error.hpp"

namespace rca::colour {

namespace {

constexpr double kDelta = 6.0 / 29.0;

double lab_f(double t) {
  if (t > kDelta * kDelta * kDelta) return std::cbrt(t);
  return t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

void check(const TristimulusXYZ& c) {
  if (c.x < 0.0 || c.y < 0.0 || c.z < 0.0) {
    throw DomainError(fmt::format("negative tristimulus value ({}, {}, {})", c.x, c.y, c.z));
  }
  if (!(c.white.x > 0.0 && c.white.y > 0.0 && c.white.z > 0.0)) {
    throw DomainError("white point must be strictly positive");
  }
}

std::size_t expected_inputs(RecipeKind kind) { return kind == RecipeKind::delta_e ? 6 : 3; }

}  // namespace

double LabColour::chroma() const { return std::hypot(a, b); }

LabColour xyz_to_lab(const TristimulusXYZ& c) {
  check(c);
  const double fx = lab_f(c.x / c.white.x);
  const double fy = lab_f(c.y / c.white.y);
  const double fz = lab_f(c.z / c.white.z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

Hue hue_angle(const LabColour& c) {
  if (c.a == 0.0 && c.b == 0.0) return {0.0, true};
  double deg = std::atan2(c.b, c.a) * 180.0 / std::numbers::pi;
  if (deg < 0.0) deg += 360.0;
  if (deg >= 360.0) deg -= 360.0;
  return {deg, false};
}

YellownessBrightness yellowness_brightness(const TristimulusXYZ& c) {
  check(c);
  return {c.y - c.z, c.y};
}

Depth colour_depth(const TristimulusXYZ& c) {
  check(c);
  if (c.y > c.white.y) return {0.0, true};
  return {1.0 - c.y / c.white.y, false};
}

double colour_difference(const LabColour& c1, const LabColour& c2) {
  const double dl = c1.l - c2.l;
  const double da = c1.a - c2.a;
  const double db = c1.b - c2.b;
  return std::sqrt(dl * dl + da * da + db * db);
}

Dataset split_coloured_uncoloured(const Dataset& ds, std::span<const std::uint8_t> coloured,
                                  std::span<const BatchGroup> groups) {
  validate_groups(groups, ds.n_rows());
  const std::size_t p = ds.n_cols();
  std::vector<ColumnMeta> columns;
  for (const char* suffix : {"_col", "_unc"}) {
    for (const auto& c : ds.columns()) {
      ColumnMeta meta = c;
      meta.name += suffix;
      columns.push_back(std::move(meta));
    }
  }
  Matrix values(groups.size(), 2 * p);
  std::vector<std::uint8_t> missing(groups.size() * 2 * p, 0);
  std::optional<std::vector<int>> labels;
  if (ds.has_labels()) labels.emplace(groups.size(), 0);

  for (std::size_t b = 0; b < groups.size(); ++b) {
    for (const auto& m : groups[b].members) {
      if (m.row >= coloured.size()) {
        throw ValidationError(fmt::format("row {} has no coloured/uncoloured flag", m.row));
      }
      if (labels && ds.labels()[m.row] == 1) (*labels)[b] = 1;
    }
    for (std::size_t cls = 0; cls < 2; ++cls) {
      const std::uint8_t want = cls == 0 ? 1 : 0;
      for (std::size_t c = 0; c < p; ++c) {
        double weighted = 0.0;
        double total_q = 0.0;
        for (const auto& m : groups[b].members) {
          if (coloured[m.row] != want || ds.is_missing(m.row, c)) continue;
          weighted += ds.value(m.row, c) * m.quantity;
          total_q += m.quantity;
        }
        const std::size_t oc = cls * p + c;
        if (total_q == 0.0) {
          missing[b * 2 * p + oc] = 1;
        } else {
          values(b, oc) = weighted / total_q;
        }
      }
    }
  }
  return Dataset(std::move(columns), std::move(values), std::move(missing), std::move(labels));
}

RecipeKind parse_recipe_kind(const std::string& text) {
  for (auto kind : {RecipeKind::hue, RecipeKind::depth, RecipeKind::yellowness,
                    RecipeKind::brightness, RecipeKind::delta_e}) {
    if (to_string(kind) == text) return kind;
  }
  throw ParseError(fmt::format("unknown recipe kind '{}'", text));
}

std::string_view to_string(RecipeKind kind) {
  switch (kind) {
    case RecipeKind::hue: return "hue";
    case RecipeKind::depth: return "depth";
    case RecipeKind::yellowness: return "yellowness";
    case RecipeKind::brightness: return "brightness";
    case RecipeKind::delta_e: return "delta_e";
  }
  return "unknown";
}

Dataset append_calculated_features(const Dataset& ds, std::span<const Recipe> recipes) {
  if (recipes.empty()) return ds;
  std::vector<std::vector<std::size_t>> inputs;
  for (const auto& recipe : recipes) {
    if (recipe.inputs.size() != expected_inputs(recipe.kind)) {
      throw ValidationError(fmt::format("recipe '{}': {} needs {} input columns, got {}",
                                        recipe.name, to_string(recipe.kind),
                                        expected_inputs(recipe.kind), recipe.inputs.size()));
    }
    std::vector<std::size_t> idx;
    for (const auto& name : recipe.inputs) {
      auto c = ds.find_column(name);
      if (!c) {
        throw ValidationError(
            fmt::format("recipe '{}': input column '{}' not found", recipe.name, name));
      }
      idx.push_back(*c);
    }
    inputs.push_back(std::move(idx));
  }

  std::vector<ColumnMeta> columns;
  for (std::size_t i = 0; i < recipes.size(); ++i) {
    ColumnMeta meta;
    meta.name = recipes[i].name;
    meta.stage = ds.column(inputs[i][0]).stage;
    meta.provenance = Provenance::calculated;
    columns.push_back(std::move(meta));
  }
  Matrix values(ds.n_rows(), recipes.size());
  std::vector<std::uint8_t> missing(ds.n_rows() * recipes.size(), 0);

  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    for (std::size_t i = 0; i < recipes.size(); ++i) {
      const auto& idx = inputs[i];
      bool any_missing = false;
      for (std::size_t c : idx) any_missing = any_missing || ds.is_missing(r, c);
      if (any_missing) {
        missing[r * recipes.size() + i] = 1;
        continue;
      }
      const TristimulusXYZ first{ds.value(r, idx[0]), ds.value(r, idx[1]),
                                 ds.value(r, idx[2]), recipes[i].white};
      double v = 0.0;
      switch (recipes[i].kind) {
        case RecipeKind::hue: v = hue_angle(xyz_to_lab(first)).degrees; break;
        case RecipeKind::depth: v = colour_depth(first).value; break;
        case RecipeKind::yellowness: v = yellowness_brightness(first).yellowness; break;
        case RecipeKind::brightness: v = yellowness_brightness(first).brightness; break;
        case RecipeKind::delta_e: {
          const TristimulusXYZ second{ds.value(r, idx[3]), ds.value(r, idx[4]),
                                      ds.value(r, idx[5]), recipes[i].white};
          v = colour_difference(xyz_to_lab(first), xyz_to_lab(second));
          break;
        }
      }
      values(r, i) = v;
    }
  }
  return ds.append_columns(std::move(columns), values, std::move(missing));
}

}  // namespace rca::colour
