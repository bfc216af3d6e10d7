#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rca/error.hpp"
#include "rca/random.hpp"
#include "rca/rules.hpp"

using namespace rca;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TreeNode leaf(std::size_t n0, std::size_t n1) {
  TreeNode n;
  n.counts = {n0, n1};
  n.value = static_cast<double>(n1) / static_cast<double>(n0 + n1);
  return n;
}

TreeNode split(int feature, double t, int l, int r) {
  TreeNode n = leaf(1, 1);
  n.feature = feature;
  n.threshold = t;
  n.left = l;
  n.right = r;
  return n;
}

Tree stump(int feature, double t) { return Tree({split(feature, t, 1, 2), leaf(1, 0), leaf(0, 1)}); }

TreeModel model_of(ModelKind kind, std::vector<Tree> trees, std::size_t p) {
  TreeModel m;
  m.kind = kind;
  m.trees = std::move(trees);
  m.n_features = p;
  for (std::size_t f = 0; f < p; ++f) m.feature_names.push_back("x" + std::to_string(f));
  return m;
}

Matrix grid2(std::size_t side) {
  Matrix g(side * side, 2);
  for (std::size_t i = 0; i < side; ++i) {
    for (std::size_t j = 0; j < side; ++j) {
      g(i * side + j, 0) = (static_cast<double>(i) + 0.5) / static_cast<double>(side);
      g(i * side + j, 1) = (static_cast<double>(j) + 0.5) / static_cast<double>(side);
    }
  }
  return g;
}

RowSet rows_of(std::size_t n, std::initializer_list<std::size_t> set) {
  RowSet r(n);
  for (auto i : set) r.set(i);
  return r;
}

CandidateRule candidate(std::size_t feature, double lo, double hi, RowSet cover,
                        const RowSet& positives) {
  CandidateRule c;
  c.bounds = {{feature, Interval{lo, hi}}};
  c.trees = {0};
  c.support = cover.count();
  c.positives = (cover & positives).count();
  c.cover = std::move(cover);
  return c;
}

std::set<oracle::PathRule> as_path_rules(const std::vector<CandidateRule>& cands) {
  std::set<oracle::PathRule> out;
  for (const auto& c : cands) {
    oracle::PathRule p;
    for (const auto& [f, iv] : c.bounds) p.bounds.emplace_back(f, iv.lo, iv.hi);
    p.support = c.support;
    p.positives = c.positives;
    out.insert(p);
  }
  return out;
}

}  // namespace

TEST_SUITE("rule-extract") {

TEST_CASE("a stump yields one candidate per side") {
  // Positive wherever x0 > 0.5 or x1 > 0.5, so both sides of each stump hold
  // model positives.
  const auto m = model_of(ModelKind::random_forest,
                          {stump(0, 0.5), stump(1, 0.5), Tree({leaf(0, 1)})}, 2);
  const Matrix g = grid2(4);
  ExplainerConfig cfg;
  const auto cands = tree_paths_to_rules(m, g, cfg);
  std::vector<std::pair<std::size_t, Interval>> tree0;
  for (const auto& c : cands) {
    if (c.trees == std::vector<std::uint32_t>{0}) tree0.push_back(c.bounds.front());
  }
  REQUIRE(tree0.size() == 2);
  const std::pair<std::size_t, Interval> left{0, {-kInf, 0.5}}, right{0, {0.5, kInf}};
  CHECK(std::count(tree0.begin(), tree0.end(), left) == 1);
  CHECK(std::count(tree0.begin(), tree0.end(), right) == 1);
  CHECK(cands.size() == 4);
}

TEST_CASE("nested conditions on one feature merge to the tighter bound") {
  const Tree t({split(0, 5.0, 1, 2), split(0, 3.0, 3, 4), leaf(3, 0), leaf(0, 3), leaf(3, 0)});
  const auto m = model_of(ModelKind::decision_tree, {t}, 1);
  Matrix x(8, 1, {1, 2, 2.5, 4, 4.5, 6, 7, 8});
  const auto cands = tree_paths_to_rules(m, x, ExplainerConfig{});
  bool found = false;
  for (const auto& c : cands) {
    if (c.bounds.size() == 1 && c.bounds[0].second == Interval{-kInf, 3.0}) {
      found = true;
      const Rule r = to_rule(c, m.feature_names, 3);
      REQUIRE(r.conditions.size() == 1);
      CHECK(r.conditions[0].op == ConditionOp::le);
      CHECK(r.conditions[0].threshold == 3.0);
      CHECK(r.support == 3);
      CHECK(r.model_precision == 1.0);
    }
  }
  CHECK(found);
}

TEST_CASE("stage-one candidates equal the exhaustive path walk") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix x = fixture::random_matrix(20, 3, 300 + seed);
    std::vector<int> y(20);
    Rng rng(seed);
    for (std::size_t r = 0; r < 20; ++r) y[r] = x(r, 0) + rng.uniform(0, 0.4) > 0.6 ? 1 : 0;
    ForestConfig fc;
    fc.n_estimators = 2;
    fc.seed = seed;
    const auto m = fit_forest(x, y, fc);
    for (std::size_t min_support : {1u, 2u}) {
      ExplainerConfig cfg;
      cfg.min_support = min_support;
      const auto cands = tree_paths_to_rules(m, x, cfg);
      CHECK(as_path_rules(cands) == oracle::enumerate_paths(m, x, min_support));
      // No duplicates survive.
      CHECK(as_path_rules(cands).size() == cands.size());
    }
  }
}

TEST_CASE("contradictory joins are dropped and self joins add nothing") {
  const Matrix x(6, 1, {0.1, 0.2, 0.4, 0.6, 0.7, 0.9});
  const RowSet pos = rows_of(6, {0, 1, 2, 3, 4, 5});
  ExplainerConfig cfg;
  cfg.min_support = 1;
  CandidateRule a = candidate(0, -kInf, 0.3, rows_of(6, {0, 1}), pos);
  CandidateRule b = candidate(0, 0.5, kInf, rows_of(6, {3, 4, 5}), pos);
  b.trees = {1};
  const std::vector<CandidateRule> ka{a}, kb{b};
  CHECK(apriori_join(ka, kb, pos, cfg).empty());
  CHECK(apriori_join(ka, ka, pos, cfg).empty());

  // Same bounds from another tree: merged rule equals the input and is not re-emitted.
  CandidateRule a2 = a;
  a2.trees = {1};
  const std::vector<CandidateRule> ka2{a2};
  CHECK(apriori_join(ka, ka2, pos, cfg).empty());
}

TEST_CASE("joined support never exceeds either parent") {
  const Matrix x = fixture::random_matrix(50, 3, 55);
  std::vector<int> y(50);
  for (std::size_t r = 0; r < 50; ++r) y[r] = x(r, 0) + x(r, 1) > 1.0 ? 1 : 0;
  ForestConfig fc;
  fc.n_estimators = 4;
  fc.max_depth = 3;
  fc.seed = 9;
  const auto m = fit_forest(x, y, fc);
  ExplainerConfig cfg;
  cfg.min_support = 1;
  const auto stage1 = tree_paths_to_rules(m, x, cfg);
  const RowSet pos = model_positive_rows(m, x);
  const auto joined = apriori_join(stage1, stage1, pos, cfg);
  REQUIRE_FALSE(joined.empty());

  auto scan = [&](const std::vector<std::pair<std::size_t, Interval>>& bounds) {
    std::size_t n = 0;
    for (std::size_t r = 0; r < 50; ++r) {
      bool ok = true;
      for (const auto& [f, iv] : bounds) ok = ok && x(r, f) > iv.lo && x(r, f) <= iv.hi;
      n += ok;
    }
    return n;
  };
  std::size_t pairs = 0;
  for (const auto& a : stage1) {
    CHECK(scan(a.bounds) == a.support);
    for (const auto& b : stage1) {
      if (a.trees == b.trees) continue;
      RowSet both = a.cover & b.cover;
      CHECK(both.count() <= std::min(a.support, b.support));
      ++pairs;
    }
  }
  CHECK(pairs > 0);
  for (const auto& j : joined) {
    CHECK(scan(j.bounds) == j.support);
    CHECK(j.cover.count() == j.support);
    CHECK(j.trees.size() == 2);
    std::size_t min_parent = std::numeric_limits<std::size_t>::max();
    for (const auto& a : stage1) {
      if (std::find(j.trees.begin(), j.trees.end(), a.trees.front()) == j.trees.end()) continue;
      if ((j.cover & a.cover) == j.cover) min_parent = std::min(min_parent, a.support);
    }
    CHECK(j.support <= min_parent);
  }
}

TEST_CASE("rule fidelity") {
  const Tree t({split(0, 0.5, 1, 2), leaf(4, 0), split(1, 0.5, 3, 4), leaf(2, 0), leaf(0, 3)});
  const auto m = model_of(ModelKind::decision_tree, {t}, 2);
  const Matrix g = grid2(8);
  Rule full;
  full.conditions = {{0, "x0", ConditionOp::gt, 0.5}, {1, "x1", ConditionOp::gt, 0.5}};
  const auto f = rule_fidelity(full, m, g);
  CHECK(f.defined);
  CHECK(f.model_precision == 1.0);
  CHECK(f.model_recall == 1.0);
  CHECK(f.support == 16);

  Rule miss;
  miss.conditions = {{0, "x0", ConditionOp::le, 0.5}};
  CHECK(rule_fidelity(miss, m, g).model_precision == 0.0);
  Rule empty;
  empty.conditions = {{0, "x0", ConditionOp::gt, 2.0}};
  CHECK_FALSE(rule_fidelity(empty, m, g).defined);
}

TEST_CASE("fidelity of random rules matches grid enumeration") {
  Matrix g(16 * 16 * 16, 3);
  for (std::size_t i = 0; i < g.rows(); ++i) {
    g(i, 0) = static_cast<double>(i / 256) / 15.0;
    g(i, 1) = static_cast<double>((i / 16) % 16) / 15.0;
    g(i, 2) = static_cast<double>(i % 16) / 15.0;
  }
  std::vector<int> y(g.rows());
  for (std::size_t i = 0; i < g.rows(); ++i) y[i] = g(i, 0) * g(i, 1) + 0.3 * g(i, 2) > 0.4;
  ForestConfig fc;
  fc.n_estimators = 5;
  fc.max_depth = 4;
  const auto m = fit_forest(g, y, fc);
  const auto pred = predict(m, g);

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Rule r;
    const std::size_t k = 1 + rng.index(3);
    for (std::size_t c = 0; c < k; ++c) {
      r.conditions.push_back({rng.index(3), "", rng.bernoulli(0.5) ? ConditionOp::le : ConditionOp::gt,
                              static_cast<double>(rng.index(16)) / 15.0});
    }
    std::size_t support = 0, hit = 0, positives = 0;
    for (std::size_t i = 0; i < g.rows(); ++i) {
      positives += pred[i];
      bool in = true;
      for (const auto& c : r.conditions) {
        const double v = g(i, c.feature);
        in = in && (c.op == ConditionOp::le ? v <= c.threshold : v > c.threshold);
      }
      if (in) {
        ++support;
        hit += pred[i];
      }
    }
    const auto f = rule_fidelity(r, m, g);
    CHECK(f.support == support);
    if (support > 0) {
      CHECK(f.model_precision == static_cast<double>(hit) / static_cast<double>(support));
    }
    CHECK(f.model_recall == static_cast<double>(hit) / static_cast<double>(positives));
  }
}

TEST_CASE("one perfect rule is the whole list") {
  const RowSet pos = rows_of(6, {1, 3, 5});
  const std::vector<CandidateRule> cands{candidate(0, 0.5, kInf, rows_of(6, {1, 3, 5}), pos),
                                         candidate(1, -kInf, 0.2, rows_of(6, {1, 2}), pos)};
  const auto list = minimize_rule_list(cands, pos, std::vector<std::string>{"a", "b"},
                                       ExplainerConfig{});
  REQUIRE(list.rules.size() == 1);
  CHECK(list.rules[0].conditions[0].name == "a");
  CHECK(list.precision == 1.0);
  CHECK(list.recall == 1.0);
  CHECK(list.warnings.empty());
}

TEST_CASE("two disjoint halves are both taken, larger first") {
  const RowSet pos = rows_of(10, {0, 1, 2, 3, 4, 5, 6});
  const std::vector<CandidateRule> cands{candidate(0, -kInf, 0.3, rows_of(10, {0, 1, 2}), pos),
                                         candidate(1, 0.6, kInf, rows_of(10, {3, 4, 5, 6}), pos)};
  const auto list = minimize_rule_list(cands, pos, std::vector<std::string>{"a", "b"},
                                       ExplainerConfig{});
  REQUIRE(list.rules.size() == 2);
  CHECK(list.rules[0].conditions[0].name == "b");
  CHECK(list.rules[1].conditions[0].name == "a");
  CHECK(list.recall == 1.0);
}

TEST_CASE("greedy list equals an independent greedy loop") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t n = 30;
    RowSet pos(n);
    std::vector<bool> posv(n);
    for (std::size_t r = 0; r < n; ++r) {
      posv[r] = rng.bernoulli(0.5);
      pos[r] = posv[r];
    }
    std::vector<CandidateRule> cands;
    std::vector<oracle::CoverCandidate> ocands;
    for (std::size_t i = 0; i < 10; ++i) {
      RowSet cover(n);
      for (std::size_t r = 0; r < n; ++r) {
        if (rng.bernoulli(posv[r] ? 0.4 : 0.03)) cover.set(r);
      }
      // Shared gains and precisions exercise the tie-breaks.
      const double lo = static_cast<double>(rng.index(4)) / 10.0;
      CandidateRule c = candidate(i % 3, lo, i % 2 ? kInf : 0.9, cover, pos);
      oracle::CoverCandidate o;
      o.rows.resize(n);
      for (std::size_t r = 0; r < n; ++r) o.rows[r] = cover[r];
      o.positives = c.positives;
      o.support = c.support;
      o.conditions = c.condition_count();
      for (const auto& [f, iv] : c.bounds) o.bounds.emplace_back(f, iv.lo, iv.hi);
      cands.push_back(std::move(c));
      ocands.push_back(std::move(o));
    }
    ExplainerConfig cfg;
    cfg.min_rule_precision = 0.8;
    cfg.coverage_target = 0.9;
    std::vector<std::string> names{"a", "b", "c"};
    const auto list = minimize_rule_list(cands, pos, names, cfg);
    const auto picked = oracle::greedy_cover(ocands, posv, 0.8, 0.9);
    REQUIRE(list.rules.size() == picked.size());
    RowSet uni(n);
    for (std::size_t k = 0; k < picked.size(); ++k) {
      CHECK(list.rules[k] == to_rule(cands[picked[k]], names, pos.count()));
      CHECK(list.rules[k].model_precision >= 0.8);
      uni |= cands[picked[k]].cover;
    }
    CHECK(list.recall == doctest::Approx(static_cast<double>((uni & pos).count()) /
                                         static_cast<double>(pos.count())));
    if (uni.count() > 0) {
      CHECK(list.precision == doctest::Approx(static_cast<double>((uni & pos).count()) /
                                              static_cast<double>(uni.count())));
    }
    if (list.recall < 0.9) CHECK_FALSE(list.warnings.empty());
  }
}

TEST_CASE("a depth-one tree is explained by one exact rule") {
  const auto m = model_of(ModelKind::decision_tree, {stump(1, 0.5)}, 2);
  const auto e = explain(m, grid2(10), ExplainerConfig{});
  REQUIRE(e.rules.rules.size() == 1);
  CHECK(e.rules.precision == 1.0);
  CHECK(e.rules.recall == 1.0);
  const auto& c = e.rules.rules[0].conditions;
  REQUIRE(c.size() == 1);
  CHECK(c[0].name == "x1");
  CHECK(c[0].op == ConditionOp::gt);
  CHECK(c[0].threshold == 0.5);
}

TEST_CASE("forest explanation on a dense grid is faithful") {
  Rng rng(7);
  Matrix x(200, 2);
  std::vector<int> y(200);
  for (std::size_t r = 0; r < 200; ++r) {
    x(r, 0) = rng.uniform();
    x(r, 1) = rng.uniform();
    y[r] = x(r, 0) + x(r, 1) > 1.0 ? 1 : 0;
  }
  ForestConfig fc;
  fc.n_estimators = 5;
  fc.max_depth = 3;
  fc.seed = 1;
  const auto m = fit_forest(x, y, fc);
  const Matrix g = grid2(32);
  const auto e = explain(m, g, ExplainerConfig{});
  const auto pred = predict(m, g);
  std::size_t in = 0, hit = 0, pos = 0;
  std::set<std::pair<std::size_t, double>> thresholds;
  for (const auto& t : m.trees) {
    for (const auto& n : t.nodes()) {
      if (!n.is_leaf()) thresholds.emplace(static_cast<std::size_t>(n.feature), n.threshold);
    }
  }
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const bool covered = std::any_of(e.rules.rules.begin(), e.rules.rules.end(),
                                     [&](const Rule& rule) { return rule.satisfied_by(g.row(r)); });
    pos += pred[r];
    in += covered;
    hit += covered && pred[r];
  }
  CHECK(static_cast<double>(hit) / static_cast<double>(in) >= 0.95);
  CHECK(static_cast<double>(hit) / static_cast<double>(pos) >= 0.95);
  for (const auto& rule : e.rules.rules) {
    for (const auto& c : rule.conditions) CHECK(thresholds.count({c.feature, c.threshold}) == 1);
  }
}

TEST_CASE("rendering lists named conditions with per-rule statistics") {
  RuleList list;
  list.reference_rows = 300;
  list.model_positives = 90;
  list.precision = 1.0;
  list.precision_defined = true;
  list.recall = 0.9;
  Rule r;
  r.conditions = {{3, "B_dye0_Y", ConditionOp::gt, 0.25}, {3, "B_dye0_Y", ConditionOp::le, 0.75}};
  r.support = 81;
  r.model_precision = 1.0;
  r.model_recall = 0.9;
  list.rules.push_back(r);
  const std::string text = render_rules(list);
  CHECK(text ==
        "# 1 rule(s); list precision 1.000 and recall 0.900 against 90 model-positive of 300 rows\n"
        "\nRule 1: B_dye0_Y > 0.25 AND B_dye0_Y <= 0.75\n"
        "  support 81 | precision 1.000 | recall 0.900\n");
  CHECK(rule_list_from_json(nlohmann::json::parse(to_json(list).dump())) == list);
}

TEST_CASE("thresholds map back to raw units and membership resolves by name") {
  ScalerParams sp;
  sp.ranges = {{"a", 10.0, 20.0}, {"b", -1.0, 1.0}};
  Rule r;
  r.conditions = {{0, "b", ConditionOp::gt, 0.75}, {1, "a", ConditionOp::le, 0.5}};
  const Rule raw = denormalize(r, sp);
  CHECK(raw.conditions[0].threshold == 0.5);
  CHECK(raw.conditions[1].threshold == 15.0);
  Rule unknown;
  unknown.conditions = {{0, "zz", ConditionOp::gt, 0.1}};
  CHECK_THROWS_AS(denormalize(unknown, sp), ValidationError);

  const Dataset ds = Dataset::dense({ColumnMeta{"a"}, ColumnMeta{"b"}},
                                    Matrix(3, 2, {12.0, 0.9, 18.0, 0.9, 12.0, 0.1}));
  const std::vector<Rule> rules{raw};
  const RowSet in = rule_membership(rules, ds);
  CHECK(in.count() == 1);
  CHECK(in[0]);
}

}  // TEST_SUITE
