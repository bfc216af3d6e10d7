#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rca/colour.hpp"
#include "rca/evalkit.hpp"
#include "rca/feature_select.hpp"
#include "rca/preprocess.hpp"
#include "rca/rules.hpp"
#include "rca/trees.hpp"

namespace rca {

inline constexpr const char* kVersion = "1.0.0";

struct ExperimentConfig {
  std::filesystem::path data;
  std::optional<std::filesystem::path> groups;
  std::optional<std::filesystem::path> metadata;
  // Ground-truth rules from `rca synth`; enables recovery scoring.
  std::optional<std::filesystem::path> truth;
  std::string label_column = "label";

  PreprocessConfig preprocess{};
  bool split_coloured = false;
  std::vector<colour::Recipe> recipes;

  std::vector<SelectionMethod> selectors{SelectionMethod::boruta};
  SelectorSpec selector{};

  std::vector<ModelKind> models{ModelKind::random_forest};
  ModelSpec model{};
  bool tune = false;
  SearchSpace search{};
  std::size_t inner_folds = 5;

  std::size_t folds = 10;
  std::size_t repeats = 1;
  std::uint64_t seed = 42;
  std::size_t threads = 1;

  bool explain = true;
  ExplainerConfig explainer{};

  std::filesystem::path out = "rca_out";

  void validate() const;
  // Everything that determines results; thread count and output directory
  // are left out.
  nlohmann::ordered_json to_json() const;
  std::string hash() const;
};

// Sectioned key = value text. Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

// `name = kind: c1, c2, c3`
colour::Recipe parse_recipe(const std::string& name, const std::string& text);

struct PreparedData {
  Dataset dataset;  // imputed and clipped, not yet min-max scaled
  nlohmann::ordered_json report;
};

// Load, aggregate, split, drop sparse, impute, recipes, clip, quantity-normalize.
PreparedData prepare(const ExperimentConfig& cfg);

// Stages read and write artifacts under cfg.out.
void stage_preprocess(const ExperimentConfig& cfg);
void stage_select(const ExperimentConfig& cfg);
void stage_train(const ExperimentConfig& cfg);
void stage_evaluate(const ExperimentConfig& cfg);
void stage_explain(const ExperimentConfig& cfg);
void write_manifest(const ExperimentConfig& cfg);
// table.csv and rules.txt rendered for the terminal.
std::string stage_report(const ExperimentConfig& cfg);

// All stages in order, then the manifest.
void run_experiment(const ExperimentConfig& cfg);

}  // namespace rca
