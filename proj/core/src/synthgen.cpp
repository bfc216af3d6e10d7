#include "rca/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/core.h>

#include "rca/error.hpp"
#include "rca/preprocess.hpp"
#include "rca/random.hpp"

namespace rca {

namespace {

constexpr std::size_t kMaxRejections = 100000;

// Stage blocks over column positions, loosely following a process flow.
Stage stage_of(std::size_t col, std::size_t n) {
  const double f = static_cast<double>(col) / static_cast<double>(n);
  if (f < 0.27) return Stage::A_raw_material;
  if (f < 0.48) return Stage::B_dye;
  if (f < 0.75) return Stage::C_yarn;
  if (f < 0.91) return Stage::D_carpet;
  return Stage::E_quality;
}

std::string stage_letter(Stage s) { return std::string(to_string(s).substr(0, 1)); }

enum class Shape { uniform, normal, lognormal };

struct NuisanceShape {
  Shape shape;
  double a;
  double b;
};

bool any_rule(std::span<const Rule> rules, std::span<const double> row) {
  return std::any_of(rules.begin(), rules.end(), [&](const Rule& r) { return r.satisfied_by(row); });
}

}  // namespace

void SynthSpec::validate() const {
  if (n_batches < 2) throw ValidationError("n_batches must be at least 2");
  if (!(positive_fraction > 0.0 && positive_fraction < 1.0)) {
    throw ValidationError("positive_fraction must lie in (0, 1)");
  }
  if (n_informative < 1) throw ValidationError("n_informative must be at least 1");
  if (n_features < n_informative + 3 * colour_triplets) {
    throw ValidationError("n_features too small for the informative and colour columns");
  }
  if (!(label_noise >= 0.0 && label_noise < 0.5)) throw ValidationError("label_noise must lie in [0, 0.5)");
  if (min_sub_instances < 1 || min_sub_instances > max_sub_instances) {
    throw ValidationError("sub-instance range must satisfy 1 <= min <= max");
  }
  if (!(rule_threshold > 0.0 && rule_threshold < 1.0)) throw ValidationError("rule_threshold must lie in (0, 1)");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw ValidationError("missing_rate must lie in [0, 1)");
  for (const auto& r : planted_rules) {
    if (r.conditions.empty()) throw ValidationError("planted rule without conditions");
    for (const auto& c : r.conditions) {
      if (c.feature >= n_informative) {
        throw ValidationError(fmt::format("planted rule uses slot {} beyond the {} informative features",
                                          c.feature, n_informative));
      }
    }
  }
}

nlohmann::ordered_json SynthSpec::to_json() const {
  return {{"n_batches", n_batches},
          {"positive_fraction", positive_fraction},
          {"n_features", n_features},
          {"n_informative", n_informative},
          {"rule_threshold", rule_threshold},
          {"label_noise", label_noise},
          {"sub_instances", {min_sub_instances, max_sub_instances}},
          {"missing_rate", missing_rate},
          {"colour_triplets", colour_triplets},
          {"seed", seed}};
}

std::vector<Rule> default_planted_rules(std::size_t n_informative, double t) {
  const std::size_t n_rules = (n_informative + 1) / 2;
  std::vector<Rule> rules;
  for (std::size_t r = 0; r < n_rules; ++r) {
    Rule rule;
    for (std::size_t s = 2 * r; s < std::min(2 * r + 2, n_informative); ++s) {
      rule.conditions.push_back({s, fmt::format("slot{}", s), ConditionOp::gt, t});
    }
    rules.push_back(std::move(rule));
  }
  return rules;
}

SynthData generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_batches;
  const std::size_t p = spec.n_features;
  Rng rng(spec.seed);

  // Column layout: colour triplets open the dye block, informative columns
  // land on random remaining positions.
  std::vector<ColumnMeta> columns(p);
  std::vector<std::size_t> free_positions;
  std::size_t dye_start = 0;
  while (dye_start < p && stage_of(dye_start, p) != Stage::B_dye) ++dye_start;
  std::vector<std::uint8_t> is_colour(p, 0);
  for (std::size_t t = 0; t < spec.colour_triplets; ++t) {
    for (std::size_t k = 0; k < 3; ++k) {
      const std::size_t c = (dye_start + 3 * t + k) % p;
      is_colour[c] = 1;
      columns[c].name = fmt::format("B_dye{}_{}", t + 1, "XYZ"[k]);
      columns[c].unit = "tristimulus";
    }
  }
  for (std::size_t c = 0; c < p; ++c) {
    if (!is_colour[c]) free_positions.push_back(c);
  }
  rng.shuffle(std::span<std::size_t>(free_positions));
  std::vector<std::size_t> informative_cols(free_positions.begin(),
                                            free_positions.begin() + static_cast<std::ptrdiff_t>(spec.n_informative));
  std::vector<std::uint8_t> is_informative(p, 0);
  for (std::size_t c : informative_cols) is_informative[c] = 1;
  for (std::size_t c = 0; c < p; ++c) {
    columns[c].stage = stage_of(c, p);
    columns[c].provenance = Provenance::original;
    if (!is_colour[c]) columns[c].name = fmt::format("{}{:03d}", stage_letter(columns[c].stage), c);
  }

  std::vector<Rule> slot_rules =
      spec.planted_rules.empty() ? default_planted_rules(spec.n_informative, spec.rule_threshold)
                                 : spec.planted_rules;
  std::vector<Rule> planted = slot_rules;
  for (auto& r : planted) {
    for (auto& c : r.conditions) {
      c.feature = informative_cols[c.feature];
      c.name = columns[c.feature].name;
    }
  }

  std::vector<NuisanceShape> shapes(p);
  for (std::size_t c = 0; c < p; ++c) {
    if (is_informative[c] || is_colour[c]) continue;
    switch (rng.index(3)) {
      case 0: shapes[c] = {Shape::uniform, 0.0, rng.uniform(1.0, 100.0)}; break;
      case 1: shapes[c] = {Shape::normal, rng.uniform(20.0, 80.0), rng.uniform(1.0, 8.0)}; break;
      default: shapes[c] = {Shape::lognormal, rng.uniform(-1.0, 2.0), rng.uniform(0.2, 0.6)}; break;
    }
  }

  // Exact positive count by construction, then rejection sampling of the
  // informative block to match each row's intended label.
  const auto target_pos = static_cast<std::size_t>(std::llround(spec.positive_fraction * static_cast<double>(n)));
  std::vector<int> intended(n, 0);
  std::fill(intended.begin(), intended.begin() + static_cast<std::ptrdiff_t>(target_pos), 1);
  rng.shuffle(std::span<int>(intended));

  Matrix batch(n, p);
  std::vector<double> slots(spec.n_informative);
  for (std::size_t b = 0; b < n; ++b) {
    bool ok = false;
    for (std::size_t attempt = 0; attempt < kMaxRejections && !ok; ++attempt) {
      for (auto& v : slots) v = rng.uniform();
      ok = any_rule(slot_rules, slots) == (intended[b] == 1);
    }
    if (!ok) {
      throw DomainError(fmt::format(
          "planted rules cannot produce a {} row after {} draws; rules and positive fraction are "
          "incompatible",
          intended[b] == 1 ? "positive" : "negative", kMaxRejections));
    }
    for (std::size_t s = 0; s < spec.n_informative; ++s) batch(b, informative_cols[s]) = slots[s];
    for (std::size_t t = 0; t < spec.colour_triplets; ++t) {
      const double x = rng.uniform(15.0, 60.0);
      batch(b, (dye_start + 3 * t) % p) = x;
      batch(b, (dye_start + 3 * t + 1) % p) = x * rng.uniform(0.9, 1.1);
      batch(b, (dye_start + 3 * t + 2) % p) = rng.uniform(10.0, 70.0);
    }
    for (std::size_t c = 0; c < p; ++c) {
      if (is_informative[c] || is_colour[c]) continue;
      const auto& s = shapes[c];
      switch (s.shape) {
        case Shape::uniform: batch(b, c) = rng.uniform(s.a, s.b); break;
        case Shape::normal: batch(b, c) = rng.normal(s.a, s.b); break;
        case Shape::lognormal: batch(b, c) = std::exp(rng.normal(s.a, s.b)); break;
      }
    }
  }

  // Sub-instances jitter around the batch value; the jitter is recentred so
  // the quantity-weighted mean reproduces the batch value.
  GroupTable groups;
  std::vector<double> sub_values;
  std::vector<std::uint8_t> sub_missing;
  std::size_t sub_rows = 0;
  for (std::size_t b = 0; b < n; ++b) {
    const auto m = static_cast<std::size_t>(
        rng.integer(static_cast<long long>(spec.min_sub_instances),
                    static_cast<long long>(spec.max_sub_instances)));
    BatchGroup g;
    g.batch_id = fmt::format("batch{:04d}", b);
    std::vector<double> q(m);
    double total_q = 0.0;
    for (auto& v : q) {
      v = std::round(rng.uniform(5.0, 50.0) * 10.0) / 10.0;
      total_q += v;
    }
    std::vector<double> block(m * p);
    std::vector<double> jitter(m);
    for (std::size_t c = 0; c < p; ++c) {
      const double sd = is_informative[c] ? 0.03 : 0.02 * std::abs(batch(b, c));
      double shift = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        jitter[i] = m == 1 ? 0.0 : rng.normal(0.0, sd);
        shift += q[i] * jitter[i];
      }
      shift /= total_q;
      for (std::size_t i = 0; i < m; ++i) block[i * p + c] = batch(b, c) + jitter[i] - shift;
    }
    for (std::size_t i = 0; i < m; ++i) {
      g.members.push_back({sub_rows + i, q[i]});
      for (std::size_t c = 0; c < p; ++c) {
        const bool drop = !is_informative[c] && !is_colour[c] && rng.bernoulli(spec.missing_rate);
        sub_values.push_back(block[i * p + c]);
        sub_missing.push_back(drop ? 1 : 0);
      }
    }
    sub_rows += m;
    groups.groups.push_back(std::move(g));
  }

  Dataset sub(columns, Matrix(sub_rows, p, std::move(sub_values)), std::move(sub_missing));
  PreprocessConfig agg;
  agg.emit_min_max_features = false;
  Dataset batches = aggregate_batches(sub, groups.groups, agg);

  std::vector<int> labels(n);
  std::size_t positives = 0;
  for (std::size_t b = 0; b < n; ++b) {
    labels[b] = any_rule(planted, batches.values().row(b)) ? 1 : 0;
    positives += static_cast<std::size_t>(labels[b]);
  }
  const double achieved = static_cast<double>(positives) / static_cast<double>(n);
  if (std::abs(achieved - spec.positive_fraction) > 0.03) {
    throw DomainError(fmt::format("achieved positive fraction {:.3f} misses target {:.3f}",
                                  achieved, spec.positive_fraction));
  }
  if (spec.label_noise > 0.0) {
    Rng noise(derive_seed(spec.seed, 0x6e6f697365ULL));
    positives = 0;
    for (auto& l : labels) {
      if (noise.bernoulli(spec.label_noise)) l = 1 - l;
      positives += static_cast<std::size_t>(l);
    }
  }

  std::vector<int> sub_labels(sub_rows);
  for (std::size_t b = 0; b < n; ++b) {
    for (const auto& m : groups.groups[b].members) sub_labels[m.row] = labels[b];
  }

  SynthData out;
  out.sub_instances = sub.with_labels(std::move(sub_labels));
  out.groups = std::move(groups);
  out.batches = batches.with_labels(labels);
  out.planted = std::move(planted);
  for (std::size_t c : informative_cols) out.informative.push_back(columns[c].name);
  out.positives = positives;
  return out;
}

void write_synth(const SynthData& data, const SynthSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_csv(dir / "data.csv", data.sub_instances);
  write_groups(dir / "groups.csv", data.groups);
  write_metadata(dir / "metadata.json", data.sub_instances);

  nlohmann::ordered_json truth;
  truth["spec"] = spec.to_json();
  truth["informative"] = data.informative;
  truth["positives"] = data.positives;
  auto rules = nlohmann::ordered_json::array();
  for (const auto& r : data.planted) {
    auto conds = nlohmann::ordered_json::array();
    for (const auto& c : r.conditions) {
      conds.push_back({{"name", c.name},
                       {"op", c.op == ConditionOp::le ? "<=" : ">"},
                       {"threshold", c.threshold}});
    }
    rules.push_back({{"conditions", std::move(conds)}});
  }
  truth["planted_rules"] = std::move(rules);
  std::ofstream out(dir / "truth.json", std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", (dir / "truth.json").string()));
  out << truth.dump(2) << '\n';
}

std::vector<Rule> load_planted_rules(const std::filesystem::path& truth_json) {
  std::ifstream in(truth_json, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open {}", truth_json.string()));
  try {
    const auto doc = nlohmann::json::parse(in);
    std::vector<Rule> rules;
    for (const auto& r : doc.at("planted_rules")) {
      Rule rule;
      for (const auto& c : r.at("conditions")) {
        const auto op = c.at("op").get<std::string>();
        if (op != "<=" && op != ">") throw ParseError(fmt::format("unknown operator '{}'", op));
        rule.conditions.push_back({0, c.at("name").get<std::string>(),
                                   op == "<=" ? ConditionOp::le : ConditionOp::gt,
                                   c.at("threshold").get<double>()});
      }
      rules.push_back(std::move(rule));
    }
    return rules;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("malformed truth file {}: {}", truth_json.string(), e.what()));
  }
}

Recovery recovery_score(std::span<const Rule> extracted, std::span<const Rule> planted,
                        const Dataset& ds) {
  const RowSet e = rule_membership(extracted, ds);
  const RowSet p = rule_membership(planted, ds);
  Recovery r;
  const std::size_t n = ds.n_rows();
  if (n == 0) return r;
  r.agreement = static_cast<double>(n - (e ^ p).count()) / static_cast<double>(n);
  const std::size_t uni = (e | p).count();
  r.jaccard_defined = uni > 0;
  if (uni > 0) r.jaccard = static_cast<double>((e & p).count()) / static_cast<double>(uni);
  return r;
}

}  // namespace rca
