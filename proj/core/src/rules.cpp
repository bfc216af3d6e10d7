#include "rca/rules.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_map>

#include <fmt/core.h>

#include "rca/error.hpp"
#include "rca/random.hpp"

namespace rca {

namespace {

using Bounds = std::vector<std::pair<std::size_t, Interval>>;

std::uint64_t hash_bounds(const Bounds& b) {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (const auto& [f, iv] : b) {
    h = mix64(h ^ f);
    h = mix64(h ^ std::bit_cast<std::uint64_t>(iv.lo));
    h = mix64(h ^ std::bit_cast<std::uint64_t>(iv.hi));
  }
  return h;
}

// Deduplicates candidates by their condition set, keeping the first seen.
class CandidateIndex {
 public:
  bool insert(const Bounds& b, std::size_t index, std::span<const CandidateRule> store) {
    auto& bucket = map_[hash_bounds(b)];
    for (std::size_t i : bucket) {
      if (store[i].bounds == b) return false;
    }
    bucket.push_back(index);
    return true;
  }
  bool contains(const Bounds& b, std::span<const CandidateRule> store) const {
    auto it = map_.find(hash_bounds(b));
    if (it == map_.end()) return false;
    return std::any_of(it->second.begin(), it->second.end(),
                       [&](std::size_t i) { return store[i].bounds == b; });
  }

 private:
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> map_;
};

// Intersection of two bound sets; false when some interval becomes empty.
bool merge_bounds(const Bounds& a, const Bounds& b, Bounds& out) {
  out.clear();
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i].first < b[j].first)) {
      out.push_back(a[i++]);
    } else if (i == a.size() || b[j].first < a[i].first) {
      out.push_back(b[j++]);
    } else {
      Interval iv{std::max(a[i].second.lo, b[j].second.lo),
                  std::min(a[i].second.hi, b[j].second.hi)};
      if (!(iv.lo < iv.hi)) return false;
      out.emplace_back(a[i].first, iv);
      ++i;
      ++j;
    }
  }
  return true;
}

std::vector<Condition> conditions_of(const Bounds& bounds, std::span<const std::string> names) {
  std::vector<Condition> out;
  for (const auto& [f, iv] : bounds) {
    const std::string name = f < names.size() ? names[f] : fmt::format("x{}", f);
    if (std::isfinite(iv.lo)) out.push_back({f, name, ConditionOp::gt, iv.lo});
    if (std::isfinite(iv.hi)) out.push_back({f, name, ConditionOp::le, iv.hi});
  }
  return out;
}

bool bounds_less(const Bounds& a, const Bounds& b) {
  return std::lexicographical_compare(
      a.begin(), a.end(), b.begin(), b.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first < y.first;
        if (x.second.lo != y.second.lo) return x.second.lo < y.second.lo;
        return x.second.hi < y.second.hi;
      });
}

std::string_view op_text(ConditionOp op) { return op == ConditionOp::le ? "<=" : ">"; }

std::string format_threshold(double v) { return fmt::format("{:.6g}", v); }

}  // namespace

bool Rule::satisfied_by(std::span<const double> row) const {
  return std::all_of(conditions.begin(), conditions.end(),
                     [&](const Condition& c) { return c.holds(row[c.feature]); });
}

void ExplainerConfig::validate() const {
  if (!(min_rule_precision >= 0.0 && min_rule_precision <= 1.0)) {
    throw ValidationError("min_rule_precision must lie in [0, 1]");
  }
  if (min_support < 1) throw ValidationError("min_support must be at least 1");
  if (max_stages < 1) throw ValidationError("max_stages must be at least 1");
  if (!(coverage_target > 0.0 && coverage_target <= 1.0)) {
    throw ValidationError("coverage_target must lie in (0, 1]");
  }
  if (max_candidates_per_stage < 1) throw ValidationError("max_candidates_per_stage must be positive");
}

std::size_t CandidateRule::condition_count() const {
  std::size_t n = 0;
  for (const auto& [f, iv] : bounds) {
    n += std::isfinite(iv.lo) ? 1 : 0;
    n += std::isfinite(iv.hi) ? 1 : 0;
  }
  return n;
}

RowSet model_positive_rows(const TreeModel& model, const Matrix& x) {
  const auto pred = predict(model, x);
  RowSet out(x.rows());
  for (std::size_t r = 0; r < pred.size(); ++r) out[r] = pred[r] == 1;
  return out;
}

std::vector<CandidateRule> tree_paths_to_rules(const TreeModel& model, const Matrix& x,
                                               const ExplainerConfig& cfg) {
  cfg.validate();
  const RowSet positives = model_positive_rows(model, x);
  std::vector<CandidateRule> out;
  CandidateIndex index;

  struct Frame {
    std::size_t node;
    Bounds bounds;
    RowSet cover;
  };
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    const Tree& tree = model.trees[t];
    RowSet all(x.rows());
    all.set();
    std::vector<Frame> stack;
    stack.push_back({0, {}, std::move(all)});
    while (!stack.empty()) {
      Frame frame = std::move(stack.back());
      stack.pop_back();
      const TreeNode& node = tree.node(frame.node);
      if (node.is_leaf()) continue;
      const auto f = static_cast<std::size_t>(node.feature);
      // Right child pushed first so the left subtree is visited first.
      for (int side = 1; side >= 0; --side) {
        const bool left = side == 0;
        Interval edge;
        (left ? edge.hi : edge.lo) = node.threshold;
        Bounds merged;
        if (!merge_bounds(frame.bounds, Bounds{{f, edge}}, merged)) continue;
        RowSet cover = frame.cover;
        for (std::size_t r = cover.find_first(); r != RowSet::npos; r = cover.find_next(r)) {
          if ((x(r, f) <= node.threshold) != left) cover.reset(r);
        }
        const std::size_t support = cover.count();
        const std::size_t pos = (cover & positives).count();
        if (support < cfg.min_support || pos == 0) continue;
        const std::size_t child = static_cast<std::size_t>(left ? node.left : node.right);
        stack.push_back({child, merged, cover});
        if (index.insert(merged, out.size(), out)) {
          out.push_back({merged, {static_cast<std::uint32_t>(t)}, std::move(cover), support, pos});
        }
      }
    }
  }
  return out;
}

std::vector<CandidateRule> apriori_join(std::span<const CandidateRule> stage_k,
                                        std::span<const CandidateRule> stage_1,
                                        const RowSet& positives, const ExplainerConfig& cfg) {
  std::vector<CandidateRule> out;
  CandidateIndex index;
  Bounds merged;
  RowSet cover;
  for (const auto& rule : stage_k) {
    for (const auto& path : stage_1) {
      const std::uint32_t tree = path.trees.front();
      if (std::binary_search(rule.trees.begin(), rule.trees.end(), tree)) continue;
      if (!merge_bounds(rule.bounds, path.bounds, merged)) continue;
      if (merged == rule.bounds) continue;
      cover = rule.cover;
      cover &= path.cover;
      const std::size_t support = cover.count();
      if (support < cfg.min_support) continue;
      const std::size_t pos = (cover & positives).count();
      if (pos == 0) continue;
      if (!index.insert(merged, out.size(), out)) continue;
      CandidateRule joined{merged, rule.trees, cover, support, pos};
      joined.trees.insert(std::upper_bound(joined.trees.begin(), joined.trees.end(), tree), tree);
      out.push_back(std::move(joined));
    }
  }
  return out;
}

Fidelity rule_fidelity(const Rule& rule, const TreeModel& model, const Matrix& x) {
  const auto pred = predict(model, x);
  std::size_t support = 0;
  std::size_t hit = 0;
  std::size_t positives = 0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    positives += static_cast<std::size_t>(pred[r]);
    if (!rule.satisfied_by(x.row(r))) continue;
    ++support;
    hit += static_cast<std::size_t>(pred[r]);
  }
  Fidelity f;
  f.support = support;
  f.defined = support > 0;
  if (support > 0) f.model_precision = static_cast<double>(hit) / static_cast<double>(support);
  if (positives > 0) f.model_recall = static_cast<double>(hit) / static_cast<double>(positives);
  return f;
}

Rule to_rule(const CandidateRule& candidate, std::span<const std::string> names,
             std::size_t model_positives) {
  Rule r;
  r.conditions = conditions_of(candidate.bounds, names);
  r.support = candidate.support;
  r.model_precision = candidate.precision();
  r.model_recall = model_positives == 0 ? 0.0
                                        : static_cast<double>(candidate.positives) /
                                              static_cast<double>(model_positives);
  return r;
}

RuleList minimize_rule_list(std::span<const CandidateRule> candidates, const RowSet& positives,
                            std::span<const std::string> names, const ExplainerConfig& cfg) {
  cfg.validate();
  std::vector<const CandidateRule*> eligible;
  for (const auto& c : candidates) {
    if (c.support > 0 && c.precision() >= cfg.min_rule_precision) eligible.push_back(&c);
  }
  const std::size_t n_pos = positives.count();
  const auto target = static_cast<std::size_t>(
      std::ceil(cfg.coverage_target * static_cast<double>(n_pos) - 1e-9));

  RuleList list;
  list.reference_rows = positives.size();
  list.model_positives = n_pos;
  RowSet uncovered = positives;
  RowSet covered_any(positives.size());
  std::size_t covered = 0;
  std::vector<std::uint8_t> used(eligible.size(), 0);
  while (covered < target) {
    std::size_t best = eligible.size();
    std::size_t best_gain = 0;
    for (std::size_t i = 0; i < eligible.size(); ++i) {
      if (used[i]) continue;
      const std::size_t gain = (eligible[i]->cover & uncovered).count();
      if (gain == 0) continue;
      bool take = best == eligible.size() || gain > best_gain;
      if (!take && gain == best_gain) {
        const auto& a = *eligible[i];
        const auto& b = *eligible[best];
        if (a.precision() != b.precision()) {
          take = a.precision() > b.precision();
        } else if (a.condition_count() != b.condition_count()) {
          take = a.condition_count() < b.condition_count();
        } else {
          take = bounds_less(a.bounds, b.bounds);
        }
      }
      if (take) {
        best = i;
        best_gain = gain;
      }
    }
    if (best == eligible.size()) break;
    used[best] = 1;
    uncovered -= eligible[best]->cover;
    covered_any |= eligible[best]->cover;
    covered += best_gain;
    list.rules.push_back(to_rule(*eligible[best], names, n_pos));
  }
  const std::size_t union_size = covered_any.count();
  const std::size_t union_pos = (covered_any & positives).count();
  list.precision_defined = union_size > 0;
  list.precision = union_size == 0 ? 0.0
                                   : static_cast<double>(union_pos) / static_cast<double>(union_size);
  list.recall = n_pos == 0 ? 0.0 : static_cast<double>(union_pos) / static_cast<double>(n_pos);
  if (covered < target) {
    list.warnings.push_back(fmt::format(
        "coverage target {:.3f} not reached; rule list covers {:.3f} of model positives",
        cfg.coverage_target, list.recall));
  }
  return list;
}

Explanation explain(const TreeModel& model, const Matrix& x, const ExplainerConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const RowSet positives = model_positive_rows(model, x);

  std::vector<CandidateRule> stage1 = tree_paths_to_rules(model, x, cfg);
  std::vector<CandidateRule> all = stage1;
  CandidateIndex seen;
  for (std::size_t i = 0; i < all.size(); ++i) seen.insert(all[i].bounds, i, all);

  Explanation result;
  result.candidates_per_stage.push_back(stage1.size());

  auto unresolved = [&](const std::vector<CandidateRule>& stage) {
    std::vector<CandidateRule> open;
    for (const auto& c : stage) {
      if (c.precision() < cfg.min_rule_precision) open.push_back(c);
    }
    std::stable_sort(open.begin(), open.end(), [](const auto& a, const auto& b) {
      if (a.positives != b.positives) return a.positives > b.positives;
      if (a.precision() != b.precision()) return a.precision() > b.precision();
      if (a.condition_count() != b.condition_count()) return a.condition_count() < b.condition_count();
      return bounds_less(a.bounds, b.bounds);
    });
    if (open.size() > cfg.max_candidates_per_stage) open.resize(cfg.max_candidates_per_stage);
    return open;
  };

  std::vector<CandidateRule> frontier = unresolved(stage1);
  for (std::size_t stage = 2; stage <= cfg.max_stages && !frontier.empty(); ++stage) {
    std::vector<CandidateRule> joined = apriori_join(frontier, stage1, positives, cfg);
    std::vector<CandidateRule> fresh;
    for (auto& c : joined) {
      if (seen.contains(c.bounds, all)) continue;
      seen.insert(c.bounds, all.size(), all);
      all.push_back(c);
      fresh.push_back(std::move(c));
    }
    result.candidates_per_stage.push_back(fresh.size());
    frontier = unresolved(fresh);
  }

  result.rules = minimize_rule_list(all, positives, model.feature_names, cfg);
  result.runtime_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  return result;
}

std::string render_rules(const RuleList& list) {
  std::string out = fmt::format(
      "# {} rule(s); list precision {} and recall {:.3f} against {} model-positive of {} rows\n",
      list.rules.size(), list.precision_defined ? fmt::format("{:.3f}", list.precision) : "undefined",
      list.recall, list.model_positives, list.reference_rows);
  for (const auto& w : list.warnings) out += fmt::format("# warning: {}\n", w);
  for (std::size_t i = 0; i < list.rules.size(); ++i) {
    const Rule& r = list.rules[i];
    std::string body;
    for (std::size_t c = 0; c < r.conditions.size(); ++c) {
      if (c > 0) body += " AND ";
      body += fmt::format("{} {} {}", r.conditions[c].name, op_text(r.conditions[c].op),
                          format_threshold(r.conditions[c].threshold));
    }
    out += fmt::format("\nRule {}: {}\n  support {} | precision {:.3f} | recall {:.3f}\n", i + 1,
                       body, r.support, r.model_precision, r.model_recall);
  }
  return out;
}

nlohmann::ordered_json to_json(const RuleList& list) {
  nlohmann::ordered_json doc;
  doc["reference_rows"] = list.reference_rows;
  doc["model_positives"] = list.model_positives;
  doc["precision"] = list.precision_defined ? nlohmann::ordered_json(list.precision)
                                            : nlohmann::ordered_json();
  doc["recall"] = list.recall;
  doc["warnings"] = list.warnings;
  auto rules = nlohmann::ordered_json::array();
  for (const auto& r : list.rules) {
    auto conds = nlohmann::ordered_json::array();
    for (const auto& c : r.conditions) {
      conds.push_back({{"feature", c.feature},
                       {"name", c.name},
                       {"op", op_text(c.op)},
                       {"threshold", c.threshold}});
    }
    rules.push_back({{"conditions", std::move(conds)},
                     {"support", r.support},
                     {"model_precision", r.model_precision},
                     {"model_recall", r.model_recall}});
  }
  doc["rules"] = std::move(rules);
  return doc;
}

RuleList rule_list_from_json(const nlohmann::json& doc) {
  try {
    RuleList list;
    list.reference_rows = doc.at("reference_rows").get<std::size_t>();
    list.model_positives = doc.at("model_positives").get<std::size_t>();
    list.precision_defined = !doc.at("precision").is_null();
    if (list.precision_defined) list.precision = doc.at("precision").get<double>();
    list.recall = doc.at("recall").get<double>();
    list.warnings = doc.at("warnings").get<std::vector<std::string>>();
    for (const auto& r : doc.at("rules")) {
      Rule rule;
      for (const auto& c : r.at("conditions")) {
        const auto op = c.at("op").get<std::string>();
        if (op != "<=" && op != ">") throw ParseError(fmt::format("unknown operator '{}'", op));
        rule.conditions.push_back({c.at("feature").get<std::size_t>(), c.at("name").get<std::string>(),
                                   op == "<=" ? ConditionOp::le : ConditionOp::gt,
                                   c.at("threshold").get<double>()});
      }
      rule.support = r.at("support").get<std::size_t>();
      rule.model_precision = r.at("model_precision").get<double>();
      rule.model_recall = r.at("model_recall").get<double>();
      list.rules.push_back(std::move(rule));
    }
    return list;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("malformed rule list JSON: {}", e.what()));
  }
}

Rule denormalize(const Rule& rule, const ScalerParams& params) {
  Rule out = rule;
  for (auto& c : out.conditions) {
    auto it = std::find_if(params.ranges.begin(), params.ranges.end(),
                           [&](const auto& r) { return r.name == c.name; });
    if (it == params.ranges.end()) {
      throw ValidationError(fmt::format("no scaler range for rule feature '{}'", c.name));
    }
    c.threshold = it->min + c.threshold * (it->max - it->min);
  }
  return out;
}

RowSet rule_membership(std::span<const Rule> rules, const Dataset& ds) {
  std::vector<std::vector<Condition>> resolved;
  for (const auto& rule : rules) {
    std::vector<Condition> conds = rule.conditions;
    for (auto& c : conds) c.feature = ds.column_index(c.name);
    resolved.push_back(std::move(conds));
  }
  RowSet out(ds.n_rows());
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    const auto row = ds.values().row(r);
    for (const auto& conds : resolved) {
      if (std::all_of(conds.begin(), conds.end(),
                      [&](const Condition& c) { return c.holds(row[c.feature]); })) {
        out.set(r);
        break;
      }
    }
  }
  return out;
}

}  // namespace rca
