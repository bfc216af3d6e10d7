#include "rca/trees.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

#include "rca/error.hpp"
#include "rca/parallel.hpp"
#include "rca/random.hpp"

namespace rca {

namespace {

// Improvements smaller than this are treated as ties / no gain.
constexpr double kEps = 1e-12;

double split_point(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid >= hi ? lo : mid;
}

bool better(double score, std::size_t feature, double threshold, double best_score,
            std::size_t best_feature, double best_threshold) {
  if (score > best_score + kEps) return true;
  if (score < best_score - kEps) return false;
  return feature < best_feature || (feature == best_feature && threshold < best_threshold);
}

void check_training_input(const Matrix& x, std::span<const int> y) {
  if (x.rows() == 0) throw ValidationError("cannot fit a model on zero rows");
  if (y.size() != x.rows()) {
    throw ValidationError(fmt::format("{} labels for {} rows", y.size(), x.rows()));
  }
  for (int v : y) {
    if (v != 0 && v != 1) throw ValidationError("labels must be 0 or 1");
  }
}

std::vector<std::string> default_names(std::vector<std::string> names, std::size_t p) {
  if (names.empty()) {
    names.reserve(p);
    for (std::size_t i = 0; i < p; ++i) names.push_back(fmt::format("x{}", i));
  }
  if (names.size() != p) throw ValidationError("feature name count differs from columns");
  return names;
}

double sigmoid(double m) { return 1.0 / (1.0 + std::exp(-m)); }

class CartGrower {
 public:
  CartGrower(const Matrix& x, std::span<const int> y, const TreeConfig& cfg)
      : x_(x), y_(y), cfg_(cfg), rng_(cfg.seed) {}

  Tree grow(std::vector<std::size_t> rows) {
    grow_node(std::move(rows), 0);
    return Tree(std::move(nodes_));
  }

 private:
  int grow_node(std::vector<std::size_t> rows, int depth) {
    const int id = static_cast<int>(nodes_.size());
    TreeNode node;
    for (std::size_t r : rows) ++node.counts[static_cast<std::size_t>(y_[r])];
    node.value = static_cast<double>(node.counts[1]) / static_cast<double>(rows.size());
    nodes_.push_back(node);

    const std::size_t n = rows.size();
    const bool pure = node.counts[0] == 0 || node.counts[1] == 0;
    if (pure || depth >= cfg_.max_depth || n < cfg_.min_samples_split ||
        n < 2 * cfg_.min_samples_leaf) {
      return id;
    }
    const auto candidates = candidate_features(rows);
    auto split = best_split(x_, y_, rows, candidates, cfg_);
    // XOR-like nodes gain nothing from the first cut but are still impure.
    if (!split) split = zero_gain_split(x_, y_, rows, candidates, cfg_);
    if (!split) return id;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t r : rows) {
      (x_(r, split->feature) <= split->threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    nodes_[id].feature = static_cast<int>(split->feature);
    nodes_[id].threshold = split->threshold;
    const int l = grow_node(std::move(left), depth + 1);
    const int r = grow_node(std::move(right), depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  // All features, or a random subset of `max_features` non-constant ones.
  std::vector<std::size_t> candidate_features(std::span<const std::size_t> rows) {
    const std::size_t p = x_.cols();
    if (!cfg_.max_features || *cfg_.max_features >= p) {
      std::vector<std::size_t> all(p);
      std::iota(all.begin(), all.end(), 0);
      return all;
    }
    order_.resize(p);
    std::iota(order_.begin(), order_.end(), 0);
    std::vector<std::size_t> picked;
    for (std::size_t i = 0; i < p && picked.size() < *cfg_.max_features; ++i) {
      std::swap(order_[i], order_[i + rng_.index(p - i)]);
      const std::size_t f = order_[i];
      const double first = x_(rows[0], f);
      const bool varies = std::any_of(rows.begin(), rows.end(),
                                      [&](std::size_t r) { return x_(r, f) != first; });
      if (varies) picked.push_back(f);
    }
    std::sort(picked.begin(), picked.end());
    return picked;
  }

  const Matrix& x_;
  std::span<const int> y_;
  const TreeConfig& cfg_;
  Rng rng_;
  std::vector<TreeNode> nodes_;
  std::vector<std::size_t> order_;
};

// Level-wise exact-greedy regression tree on gradient statistics. Each level
// makes one pass over every presorted feature column.
class BoostGrower {
 public:
  BoostGrower(const Matrix& x, std::span<const int> y,
              const std::vector<std::vector<std::uint32_t>>& sorted, const BoostConfig& cfg)
      : x_(x), y_(y), sorted_(sorted), cfg_(cfg) {}

  Tree grow(std::span<const double> g, std::span<const double> h) {
    const std::size_t n = x_.rows();
    nodes_.assign(1, TreeNode{});
    grad_.assign(1, 0.0);
    hess_.assign(1, 0.0);
    position_.assign(n, 0);
    for (std::size_t r = 0; r < n; ++r) {
      grad_[0] += g[r];
      hess_[0] += h[r];
      ++nodes_[0].counts[static_cast<std::size_t>(y_[r])];
    }
    std::vector<int> frontier{0};
    for (int depth = 0; depth < cfg_.max_depth && !frontier.empty(); ++depth) {
      frontier = split_level(frontier, g, h);
    }
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      if (nodes_[id].is_leaf()) nodes_[id].value = -grad_[id] / (hess_[id] + cfg_.lambda_l2);
    }
    return Tree(std::move(nodes_));
  }

 private:
  struct ScanState {
    double g = 0.0;
    double h = 0.0;
    std::size_t n = 0;
    double last = 0.0;
    bool has_last = false;
  };
  struct Best {
    double gain = 0.0;
    std::size_t feature = 0;
    double threshold = 0.0;
    bool found = false;
  };

  double score(double g, double h) const { return g * g / (h + cfg_.lambda_l2); }

  std::vector<int> split_level(const std::vector<int>& frontier, std::span<const double> g,
                               std::span<const double> h) {
    std::vector<int> slot(nodes_.size(), -1);
    std::vector<int> active;
    for (int id : frontier) {
      if (nodes_[id].samples() >= 2 * cfg_.min_samples_leaf && nodes_[id].samples() >= 2) {
        slot[id] = static_cast<int>(active.size());
        active.push_back(id);
      }
    }
    if (active.empty()) return {};

    std::vector<Best> best(active.size());
    std::vector<ScanState> state(active.size());
    for (std::size_t f = 0; f < x_.cols(); ++f) {
      std::fill(state.begin(), state.end(), ScanState{});
      for (std::uint32_t r : sorted_[f]) {
        const int node = position_[r];
        if (node < 0 || node >= static_cast<int>(slot.size()) || slot[node] < 0) continue;
        const auto s = static_cast<std::size_t>(slot[node]);
        ScanState& st = state[s];
        const double v = x_(r, f);
        if (st.has_last && v > st.last) {
          const std::size_t n_total = nodes_[node].samples();
          if (st.n >= cfg_.min_samples_leaf && n_total - st.n >= cfg_.min_samples_leaf) {
            const double gl = st.g;
            const double hl = st.h;
            const double gr = grad_[node] - gl;
            const double hr = hess_[node] - hl;
            const double gain =
                0.5 * (score(gl, hl) + score(gr, hr) - score(grad_[node], hess_[node]));
            const double thr = split_point(st.last, v);
            Best& b = best[s];
            if (gain > kEps && (!b.found || better(gain, f, thr, b.gain, b.feature, b.threshold))) {
              b = {gain, f, thr, true};
            }
          }
        }
        st.g += g[r];
        st.h += h[r];
        ++st.n;
        st.last = v;
        st.has_last = true;
      }
    }

    std::vector<int> next;
    std::vector<int> child_of(nodes_.size(), -1);
    for (std::size_t s = 0; s < active.size(); ++s) {
      if (!best[s].found) continue;
      const int id = active[s];
      const int left = static_cast<int>(nodes_.size());
      nodes_.push_back(TreeNode{});
      nodes_.push_back(TreeNode{});
      grad_.resize(nodes_.size(), 0.0);
      hess_.resize(nodes_.size(), 0.0);
      nodes_[id].feature = static_cast<int>(best[s].feature);
      nodes_[id].threshold = best[s].threshold;
      nodes_[id].left = left;
      nodes_[id].right = left + 1;
      nodes_[id].gain = best[s].gain;
      child_of.resize(nodes_.size(), -1);
      child_of[id] = left;
      next.push_back(left);
      next.push_back(left + 1);
    }
    for (std::size_t r = 0; r < position_.size(); ++r) {
      const int node = position_[r];
      if (node < 0 || node >= static_cast<int>(child_of.size()) || child_of[node] < 0) continue;
      const TreeNode& parent = nodes_[node];
      const int child = x_(r, static_cast<std::size_t>(parent.feature)) <= parent.threshold
                            ? parent.left
                            : parent.right;
      position_[r] = child;
      grad_[child] += g[r];
      hess_[child] += h[r];
      ++nodes_[child].counts[static_cast<std::size_t>(y_[r])];
    }
    return next;
  }

  const Matrix& x_;
  std::span<const int> y_;
  const std::vector<std::vector<std::uint32_t>>& sorted_;
  const BoostConfig& cfg_;
  std::vector<TreeNode> nodes_;
  std::vector<double> grad_;
  std::vector<double> hess_;
  std::vector<int> position_;
};

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::decision_tree: return "dt";
    case ModelKind::random_forest: return "rf";
    case ModelKind::boosted: return "xgb";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "dt") return ModelKind::decision_tree;
  if (text == "rf") return ModelKind::random_forest;
  if (text == "xgb") return ModelKind::boosted;
  throw ValidationError(fmt::format("unknown model kind '{}' (expected dt, rf, xgb)", text));
}

std::size_t Tree::leaf_index(std::span<const double> x) const {
  std::size_t id = 0;
  while (!nodes_[id].is_leaf()) {
    const TreeNode& n = nodes_[id];
    id = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                       : n.right);
  }
  return id;
}

int Tree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<int> depth(nodes_.size(), 0);
  int deepest = 0;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    deepest = std::max(deepest, depth[id]);
    if (!nodes_[id].is_leaf()) {
      depth[static_cast<std::size_t>(nodes_[id].left)] = depth[id] + 1;
      depth[static_cast<std::size_t>(nodes_[id].right)] = depth[id] + 1;
    }
  }
  return deepest;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const auto& n) { return n.is_leaf(); }));
}

void TreeConfig::validate() const {
  if (max_depth < 1) throw ValidationError("max_depth must be at least 1");
  if (min_samples_split < 2) throw ValidationError("min_samples_split must be at least 2");
  if (min_samples_leaf < 1) throw ValidationError("min_samples_leaf must be at least 1");
  if (max_features && *max_features == 0) throw ValidationError("max_features must be positive");
}

void ForestConfig::validate() const {
  if (n_estimators < 1) throw ValidationError("n_estimators must be at least 1");
  TreeConfig{max_depth, min_samples_split, min_samples_leaf, max_features, seed}.validate();
}

void BoostConfig::validate() const {
  if (n_estimators < 1) throw ValidationError("n_estimators must be at least 1");
  if (max_depth < 1) throw ValidationError("max_depth must be at least 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw ValidationError("learning_rate must be in (0, 1]");
  }
  if (!(lambda_l2 >= 0.0)) throw ValidationError("lambda_l2 must be non-negative");
  if (!(base_score > 0.0 && base_score < 1.0)) throw ValidationError("base_score must be in (0, 1)");
  if (min_samples_leaf < 1) throw ValidationError("min_samples_leaf must be at least 1");
}

double gini(std::size_t n0, std::size_t n1) {
  const std::size_t n = n0 + n1;
  if (n == 0) throw DomainError("gini impurity of an empty node");
  const double p0 = static_cast<double>(n0) / static_cast<double>(n);
  const double p1 = static_cast<double>(n1) / static_cast<double>(n);
  return 1.0 - p0 * p0 - p1 * p1;
}

namespace {

// Best split whose decrease exceeds `floor`.
std::optional<Split> scan_splits(const Matrix& x, std::span<const int> y,
                                 std::span<const std::size_t> rows,
                                 std::span<const std::size_t> candidate_features,
                                 const TreeConfig& cfg, double floor) {
  const std::size_t n = rows.size();
  if (n < 2) return std::nullopt;
  std::size_t total1 = 0;
  for (std::size_t r : rows) total1 += static_cast<std::size_t>(y[r]);
  const double parent = gini(n - total1, total1);
  const auto nd = static_cast<double>(n);

  std::optional<Split> best;
  std::vector<std::pair<double, int>> buf(n);
  for (std::size_t f : candidate_features) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = {x(rows[i], f), y[rows[i]]};
    std::sort(buf.begin(), buf.end());
    std::size_t left1 = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left1 += static_cast<std::size_t>(buf[i].second);
      if (buf[i].first == buf[i + 1].first) continue;
      const std::size_t nl = i + 1;
      const std::size_t nr = n - nl;
      if (nl < cfg.min_samples_leaf || nr < cfg.min_samples_leaf) continue;
      const std::size_t right1 = total1 - left1;
      const double decrease = parent -
                              static_cast<double>(nl) / nd * gini(nl - left1, left1) -
                              static_cast<double>(nr) / nd * gini(nr - right1, right1);
      if (decrease <= floor) continue;
      const double thr = split_point(buf[i].first, buf[i + 1].first);
      if (!best || better(decrease, f, thr, best->impurity_decrease, best->feature,
                          best->threshold)) {
        best = Split{f, thr, std::max(decrease, 0.0)};
      }
    }
  }
  return best;
}

}  // namespace

std::optional<Split> best_split(const Matrix& x, std::span<const int> y,
                                std::span<const std::size_t> rows,
                                std::span<const std::size_t> candidate_features,
                                const TreeConfig& cfg) {
  return scan_splits(x, y, rows, candidate_features, cfg, kEps);
}

std::optional<Split> zero_gain_split(const Matrix& x, std::span<const int> y,
                                     std::span<const std::size_t> rows,
                                     std::span<const std::size_t> candidate_features,
                                     const TreeConfig& cfg) {
  return scan_splits(x, y, rows, candidate_features, cfg, -kEps);
}

Tree fit_tree(const Matrix& x, std::span<const int> y, const TreeConfig& cfg) {
  std::vector<std::size_t> rows(x.rows());
  std::iota(rows.begin(), rows.end(), 0);
  return fit_tree(x, y, rows, cfg);
}

Tree fit_tree(const Matrix& x, std::span<const int> y, std::span<const std::size_t> rows,
              const TreeConfig& cfg) {
  cfg.validate();
  check_training_input(x, y);
  if (rows.empty()) throw ValidationError("cannot fit a tree on an empty sample");
  CartGrower grower(x, y, cfg);
  return grower.grow({rows.begin(), rows.end()});
}

TreeModel fit_decision_tree(const Matrix& x, std::span<const int> y, const TreeConfig& cfg,
                            std::vector<std::string> feature_names) {
  TreeModel model;
  model.kind = ModelKind::decision_tree;
  model.trees.push_back(fit_tree(x, y, cfg));
  model.n_features = x.cols();
  model.feature_names = default_names(std::move(feature_names), x.cols());
  model.config = to_json(cfg);
  return model;
}

TreeModel fit_forest(const Matrix& x, std::span<const int> y, const ForestConfig& cfg,
                     std::vector<std::string> feature_names) {
  cfg.validate();
  check_training_input(x, y);
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  const std::size_t mtry =
      cfg.max_features.value_or(static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p)))));

  TreeModel model;
  model.kind = ModelKind::random_forest;
  model.trees.resize(cfg.n_estimators);
  parallel_for(cfg.n_estimators, cfg.threads, [&](std::size_t t) {
    const std::uint64_t seed = derive_seed(cfg.seed, t);
    Rng rng(seed);
    std::vector<std::size_t> rows(n);
    if (cfg.bootstrap) {
      for (auto& r : rows) r = rng.index(n);
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    TreeConfig tc{cfg.max_depth, cfg.min_samples_split, cfg.min_samples_leaf, mtry,
                  derive_seed(seed, 1)};
    model.trees[t] = fit_tree(x, y, rows, tc);
  });
  model.n_features = p;
  model.feature_names = default_names(std::move(feature_names), p);
  model.config = to_json(cfg);
  return model;
}

TreeModel fit_boosted(const Matrix& x, std::span<const int> y, const BoostConfig& cfg,
                      std::vector<std::string> feature_names, const BoostObserver& observer) {
  cfg.validate();
  check_training_input(x, y);
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();

  std::vector<std::vector<std::uint32_t>> sorted(p, std::vector<std::uint32_t>(n));
  for (std::size_t f = 0; f < p; ++f) {
    std::iota(sorted[f].begin(), sorted[f].end(), 0U);
    std::stable_sort(sorted[f].begin(), sorted[f].end(),
                     [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
  }

  TreeModel model;
  model.kind = ModelKind::boosted;
  model.n_features = p;
  model.feature_names = default_names(std::move(feature_names), p);
  model.base_margin = std::log(cfg.base_score / (1.0 - cfg.base_score));
  model.learning_rate = cfg.learning_rate;
  model.config = to_json(cfg);

  std::vector<double> margin(n, model.base_margin);
  std::vector<double> g(n);
  std::vector<double> h(n);
  BoostGrower grower(x, y, sorted, cfg);
  for (std::size_t m = 0; m < cfg.n_estimators; ++m) {
    for (std::size_t r = 0; r < n; ++r) {
      const double prob = sigmoid(margin[r]);
      g[r] = prob - static_cast<double>(y[r]);
      h[r] = prob * (1.0 - prob);
    }
    Tree tree = grower.grow(g, h);
    for (std::size_t r = 0; r < n; ++r) margin[r] += cfg.learning_rate * tree.leaf(x.row(r)).value;
    model.trees.push_back(std::move(tree));
    if (observer) observer(m, model);
  }
  return model;
}

int tree_class(const TreeNode& leaf) { return leaf.counts[1] > leaf.counts[0] ? 1 : 0; }

double boosted_margin(const TreeModel& model, std::span<const double> row, std::size_t n_trees) {
  double margin = model.base_margin;
  const std::size_t count = std::min(n_trees, model.trees.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < count; ++t) sum += model.trees[t].leaf(row).value;
  return margin + model.learning_rate * sum;
}

double predict_proba_row(const TreeModel& model, std::span<const double> row) {
  switch (model.kind) {
    case ModelKind::decision_tree: return model.trees.front().leaf(row).value;
    case ModelKind::random_forest: {
      std::size_t votes = 0;
      for (const auto& t : model.trees) votes += static_cast<std::size_t>(tree_class(t.leaf(row)));
      return static_cast<double>(votes) / static_cast<double>(model.trees.size());
    }
    case ModelKind::boosted: return sigmoid(boosted_margin(model, row));
  }
  return 0.0;
}

int predict_row(const TreeModel& model, std::span<const double> row) {
  switch (model.kind) {
    case ModelKind::decision_tree: return tree_class(model.trees.front().leaf(row));
    case ModelKind::random_forest: {
      std::size_t votes = 0;
      for (const auto& t : model.trees) votes += static_cast<std::size_t>(tree_class(t.leaf(row)));
      return 2 * votes > model.trees.size() ? 1 : 0;
    }
    case ModelKind::boosted: return predict_proba_row(model, row) >= 0.5 ? 1 : 0;
  }
  return 0;
}

namespace {
void check_prediction_input(const TreeModel& model, const Matrix& x) {
  if (x.rows() > 0 && x.cols() != model.n_features) {
    throw ValidationError(fmt::format("model expects {} features, input has {}",
                                      model.n_features, x.cols()));
  }
}
}  // namespace

std::vector<double> predict_proba(const TreeModel& model, const Matrix& x) {
  check_prediction_input(model, x);
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict_proba_row(model, x.row(r));
  return out;
}

std::vector<int> predict(const TreeModel& model, const Matrix& x) {
  check_prediction_input(model, x);
  std::vector<int> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict_row(model, x.row(r));
  return out;
}

std::vector<double> mdi_importances(const TreeModel& model) {
  std::vector<double> total(model.n_features, 0.0);
  for (const auto& tree : model.trees) {
    if (tree.size() == 0) continue;
    const auto root_n = static_cast<double>(tree.node(0).samples());
    for (const auto& node : tree.nodes()) {
      if (node.is_leaf()) continue;
      double contribution = 0.0;
      if (model.kind == ModelKind::boosted) {
        contribution = node.gain;
      } else {
        const auto& l = tree.node(static_cast<std::size_t>(node.left));
        const auto& r = tree.node(static_cast<std::size_t>(node.right));
        const auto n = static_cast<double>(node.samples());
        const double decrease = gini(node.counts[0], node.counts[1]) -
                                static_cast<double>(l.samples()) / n * gini(l.counts[0], l.counts[1]) -
                                static_cast<double>(r.samples()) / n * gini(r.counts[0], r.counts[1]);
        contribution = n / root_n * decrease;
      }
      total[static_cast<std::size_t>(node.feature)] += contribution;
    }
  }
  const double trees = static_cast<double>(std::max<std::size_t>(1, model.trees.size()));
  for (auto& v : total) v /= trees;
  const double sum = std::accumulate(total.begin(), total.end(), 0.0);
  if (!(sum > 0.0)) {
    std::fill(total.begin(), total.end(),
              total.empty() ? 0.0 : 1.0 / static_cast<double>(total.size()));
  } else {
    for (auto& v : total) v /= sum;
  }
  return total;
}

double log_loss(std::span<const double> proba, std::span<const int> y) {
  if (proba.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < proba.size(); ++i) {
    const double p = std::clamp(proba[i], 1e-15, 1.0 - 1e-15);
    total -= y[i] == 1 ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<double>(proba.size());
}

namespace {

nlohmann::ordered_json depth_json(int depth) {
  return depth == kUnboundedDepth ? nlohmann::ordered_json() : nlohmann::ordered_json(depth);
}

}  // namespace

nlohmann::ordered_json to_json(const TreeConfig& cfg) {
  nlohmann::ordered_json j;
  j["max_depth"] = depth_json(cfg.max_depth);
  j["min_samples_split"] = cfg.min_samples_split;
  j["min_samples_leaf"] = cfg.min_samples_leaf;
  j["max_features"] = cfg.max_features ? nlohmann::ordered_json(*cfg.max_features)
                                       : nlohmann::ordered_json();
  j["seed"] = cfg.seed;
  return j;
}

nlohmann::ordered_json to_json(const ForestConfig& cfg) {
  nlohmann::ordered_json j;
  j["n_estimators"] = cfg.n_estimators;
  j["max_depth"] = depth_json(cfg.max_depth);
  j["min_samples_split"] = cfg.min_samples_split;
  j["min_samples_leaf"] = cfg.min_samples_leaf;
  j["bootstrap"] = cfg.bootstrap;
  j["max_features"] = cfg.max_features ? nlohmann::ordered_json(*cfg.max_features)
                                       : nlohmann::ordered_json();
  j["seed"] = cfg.seed;
  return j;
}

nlohmann::ordered_json to_json(const BoostConfig& cfg) {
  nlohmann::ordered_json j;
  j["n_estimators"] = cfg.n_estimators;
  j["max_depth"] = depth_json(cfg.max_depth);
  j["learning_rate"] = cfg.learning_rate;
  j["lambda_l2"] = cfg.lambda_l2;
  j["base_score"] = cfg.base_score;
  j["min_samples_leaf"] = cfg.min_samples_leaf;
  j["seed"] = cfg.seed;
  return j;
}

nlohmann::ordered_json to_json(const TreeModel& model) {
  nlohmann::ordered_json doc;
  doc["model_kind"] = to_string(model.kind);
  doc["config"] = model.config;
  doc["n_features"] = model.n_features;
  doc["feature_names"] = model.feature_names;
  doc["base_margin"] = model.base_margin;
  doc["learning_rate"] = model.learning_rate;
  auto trees = nlohmann::ordered_json::array();
  for (const auto& tree : model.trees) {
    auto nodes = nlohmann::ordered_json::array();
    for (const auto& n : tree.nodes()) {
      nlohmann::ordered_json node;
      if (n.is_leaf()) {
        node["leaf"] = true;
      } else {
        node["feature"] = n.feature;
        node["threshold"] = n.threshold;
        node["left"] = n.left;
        node["right"] = n.right;
        if (model.kind == ModelKind::boosted) node["gain"] = n.gain;
      }
      // Internal values are kept so a reload is exact.
      node["value"] = n.value;
      node["counts"] = {n.counts[0], n.counts[1]};
      nodes.push_back(std::move(node));
    }
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  doc["trees"] = std::move(trees);
  return doc;
}

TreeModel model_from_json(const nlohmann::json& doc) {
  try {
    TreeModel model;
    model.kind = parse_model_kind(doc.at("model_kind").get<std::string>());
    model.config = nlohmann::ordered_json(doc.at("config"));
    model.n_features = doc.at("n_features").get<std::size_t>();
    model.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    model.base_margin = doc.at("base_margin").get<double>();
    model.learning_rate = doc.at("learning_rate").get<double>();
    if (model.feature_names.size() != model.n_features) {
      throw ValidationError("feature_names length differs from n_features");
    }
    for (const auto& t : doc.at("trees")) {
      std::vector<TreeNode> nodes;
      for (const auto& j : t.at("nodes")) {
        TreeNode n;
        n.counts = {j.at("counts").at(0).get<std::size_t>(), j.at("counts").at(1).get<std::size_t>()};
        n.value = j.at("value").get<double>();
        if (!j.value("leaf", false)) {
          n.feature = j.at("feature").get<int>();
          n.threshold = j.at("threshold").get<double>();
          n.left = j.at("left").get<int>();
          n.right = j.at("right").get<int>();
          n.gain = j.value("gain", 0.0);
        }
        nodes.push_back(n);
      }
      for (std::size_t id = 0; id < nodes.size(); ++id) {
        const auto& n = nodes[id];
        if (n.is_leaf()) continue;
        const auto valid = [&](int c) {
          return c > static_cast<int>(id) && c < static_cast<int>(nodes.size());
        };
        if (!valid(n.left) || !valid(n.right) ||
            static_cast<std::size_t>(n.feature) >= model.n_features) {
          throw ValidationError(fmt::format("tree node {} has invalid links", id));
        }
      }
      if (nodes.empty()) throw ValidationError("tree without nodes");
      model.trees.emplace_back(std::move(nodes));
    }
    if (model.trees.empty()) throw ValidationError("model without trees");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("malformed model JSON: {}", e.what()));
  }
}

}  // namespace rca
