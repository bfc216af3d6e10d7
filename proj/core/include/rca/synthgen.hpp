#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rca/dataset.hpp"
#include "rca/rules.hpp"

namespace rca {

struct SynthSpec {
  std::size_t n_batches = 300;
  double positive_fraction = 0.30;
  std::size_t n_features = 372;
  std::size_t n_informative = 10;
  // Conditions here address informative slots: Condition::feature is the slot
  // (0..n_informative-1) and the name is ignored. Empty = default rules.
  std::vector<Rule> planted_rules;
  // Threshold of the default rules.
  double rule_threshold = 0.1;
  double label_noise = 0.0;
  std::size_t min_sub_instances = 1;
  std::size_t max_sub_instances = 4;
  // Fraction of nuisance sub-instance cells left empty.
  double missing_rate = 0.02;
  // X/Y/Z tristimulus triplets among the nuisance columns.
  std::size_t colour_triplets = 4;
  std::uint64_t seed = 42;

  void validate() const;
  nlohmann::ordered_json to_json() const;
};

// Pairs informative slots into two-condition rules `a > t AND b > t`; an odd
// last slot gets a one-condition rule. Negatives must fail every pair, which
// pushes one value of each pair below t.
std::vector<Rule> default_planted_rules(std::size_t n_informative, double threshold);

struct SynthData {
  Dataset sub_instances;  // labelled with the batch label
  GroupTable groups;
  // Quantity-weighted batch view (no min/max columns); labels come from it.
  Dataset batches;
  std::vector<Rule> planted;  // resolved to batch column indices and names
  std::vector<std::string> informative;
  std::size_t positives = 0;
};

SynthData generate(const SynthSpec& spec);

// data.csv, groups.csv, truth.json, metadata.json
void write_synth(const SynthData& data, const SynthSpec& spec, const std::filesystem::path& dir);
std::vector<Rule> load_planted_rules(const std::filesystem::path& truth_json);

struct Recovery {
  double agreement = 0.0;  // rows where list membership equals planted membership
  double jaccard = 0.0;    // |E and P| / |E or P| over covered rows
  bool jaccard_defined = false;
};

Recovery recovery_score(std::span<const Rule> extracted, std::span<const Rule> planted,
                        const Dataset& ds);

}  // namespace rca
