#include "rca/evalkit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <fmt/core.h>

#include "rca/error.hpp"
#include "rca/parallel.hpp"
#include "rca/preprocess.hpp"
#include "rca/random.hpp"
#include "rca/stats.hpp"

namespace rca {

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

Matrix take_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

std::vector<int> take(std::span<const int> y, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(y[r]);
  return out;
}

std::string cell_text(const std::optional<double>& v) {
  return v ? fmt::format("{:.4f}", *v) : std::string();
}

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json();
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct FoldData {
  Dataset train;
  Dataset test;
};

FoldData scaled_fold(const Dataset& ds, const CVPlan& plan, std::size_t f) {
  const auto train_rows = plan.training_rows(f);
  const Dataset train = ds.select_rows(train_rows);
  const Dataset test = ds.select_rows(plan.folds[f]);
  ScaledDataset scaled = minmax_fit_transform(train);
  return {std::move(scaled.dataset), minmax_apply(test, scaled.params)};
}

}  // namespace

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw ValidationError(fmt::format("label length {} differs from prediction length {}",
                                      y_true.size(), y_pred.size()));
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i];
    const int p = y_pred[i];
    if ((t != 0 && t != 1) || (p != 0 && p != 1)) {
      throw ValidationError(fmt::format("non-binary entry at position {}", i));
    }
    if (t == 1) {
      ++(p == 1 ? cm.tp : cm.fn);
    } else {
      ++(p == 1 ? cm.fp : cm.tn);
    }
  }
  return cm;
}

std::optional<double> f1_score(double precision, double recall) {
  if (precision + recall == 0.0) return std::nullopt;
  return 2.0 * precision * recall / (precision + recall);
}

Metrics metrics(const ConfusionMatrix& cm) {
  Metrics m;
  m.precision = ratio(cm.tp, cm.tp + cm.fp);
  m.recall = ratio(cm.tp, cm.tp + cm.fn);
  m.fpr = ratio(cm.fp, cm.fp + cm.tn);
  if (m.precision && m.recall) m.f1 = f1_score(*m.precision, *m.recall);
  return m;
}

std::vector<std::size_t> CVPlan::training_rows(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (f != fold) out.insert(out.end(), folds[f].begin(), folds[f].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

CVPlan stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("fold count must be at least 2");
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError("labels must be 0 or 1");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (int c = 0; c < 2; ++c) {
    const auto& members = by_class[static_cast<std::size_t>(c)];
    if (!members.empty() && members.size() < k) {
      throw ValidationError(fmt::format("class {} has {} rows, fewer than {} folds", c,
                                        members.size(), k));
    }
  }
  if (labels.size() < k) throw ValidationError("fewer rows than folds");

  CVPlan plan;
  plan.seed = seed;
  plan.folds.resize(k);
  Rng rng(seed);
  std::size_t next = 0;
  for (auto& members : by_class) {
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t idx : members) {
      plan.folds[next].push_back(idx);
      next = (next + 1) % k;
    }
  }
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

nlohmann::ordered_json ModelSpec::params_json() const {
  switch (kind) {
    case ModelKind::decision_tree: return to_json(tree);
    case ModelKind::random_forest: return to_json(forest);
    case ModelKind::boosted: return to_json(boost);
  }
  return {};
}

TreeModel fit_model(const ModelSpec& spec, const Matrix& x, std::span<const int> y,
                    std::uint64_t seed, std::vector<std::string> names, std::size_t threads) {
  switch (spec.kind) {
    case ModelKind::decision_tree: {
      TreeConfig cfg = spec.tree;
      cfg.seed = seed;
      return fit_decision_tree(x, y, cfg, std::move(names));
    }
    case ModelKind::random_forest: {
      ForestConfig cfg = spec.forest;
      cfg.seed = seed;
      cfg.threads = threads;
      return fit_forest(x, y, cfg, std::move(names));
    }
    case ModelKind::boosted: {
      BoostConfig cfg = spec.boost;
      cfg.seed = seed;
      return fit_boosted(x, y, cfg, std::move(names));
    }
  }
  throw Error("unknown model kind");
}

nlohmann::ordered_json SelectorSpec::params_json() const {
  nlohmann::ordered_json j;
  j["method"] = to_string(method);
  switch (method) {
    case SelectionMethod::none: break;
    case SelectionMethod::chi2_kbest: j["k"] = k; break;
    case SelectionMethod::pearson:
      j["target_threshold"] = target_threshold;
      j["redundancy_threshold"] = redundancy_threshold;
      break;
    case SelectionMethod::boruta:
      j["n_iterations"] = boruta.n_iterations;
      j["alpha"] = boruta.alpha;
      j["keep_tentative"] = boruta.keep_tentative;
      j["forest"] = to_json(boruta.forest);
      break;
  }
  return j;
}

SelectionResult run_selector(const SelectorSpec& spec, const Matrix& x, std::span<const int> y,
                             std::uint64_t seed, std::size_t threads) {
  switch (spec.method) {
    case SelectionMethod::none: return select_all(x.cols());
    case SelectionMethod::chi2_kbest: return chi2_kbest(x, y, std::min(spec.k, x.cols()));
    case SelectionMethod::pearson:
      return pcc_filter(x, y, spec.target_threshold, spec.redundancy_threshold);
    case SelectionMethod::boruta: {
      BorutaConfig cfg = spec.boruta;
      cfg.seed = seed;
      cfg.threads = threads;
      return boruta(x, y, cfg);
    }
  }
  throw Error("unknown selection method");
}

void SearchSpace::validate() const {
  if (depth_choices.empty() && !(depth_lo >= 1 && depth_lo <= depth_hi)) {
    throw ValidationError("search depth range must satisfy 1 <= lo <= hi");
  }
  for (int d : depth_choices) {
    if (d < 1) throw ValidationError("search depth choices must be positive");
  }
  if (!(estimators_lo >= 1 && estimators_lo <= estimators_hi)) {
    throw ValidationError("search estimator range must satisfy 1 <= lo <= hi");
  }
  if (learning_rates.empty()) throw ValidationError("search learning-rate list is empty");
  for (double lr : learning_rates) {
    if (!(lr > 0.0 && lr <= 1.0)) throw ValidationError("learning rates must lie in (0, 1]");
  }
  if (n_draws < 1) throw ValidationError("search needs at least one draw");
}

nlohmann::ordered_json SearchSpace::to_json() const {
  nlohmann::ordered_json j;
  if (depth_choices.empty()) {
    j["max_depth"] = {depth_lo, depth_hi};
  } else {
    auto choices = nlohmann::ordered_json::array();
    for (int d : depth_choices) {
      choices.push_back(d == kUnboundedDepth ? nlohmann::ordered_json("unbounded")
                                             : nlohmann::ordered_json(d));
    }
    j["max_depth_choices"] = std::move(choices);
  }
  j["n_estimators"] = {estimators_lo, estimators_hi};
  j["learning_rate"] = learning_rates;
  j["n_draws"] = n_draws;
  j["seed"] = seed;
  return j;
}

ModelSpec apply_draw(const ModelSpec& base, const SearchDraw& draw) {
  ModelSpec spec = base;
  spec.tree.max_depth = draw.max_depth;
  spec.forest.max_depth = draw.max_depth;
  spec.forest.n_estimators = static_cast<std::size_t>(draw.n_estimators);
  spec.boost.max_depth = draw.max_depth;
  spec.boost.n_estimators = static_cast<std::size_t>(draw.n_estimators);
  spec.boost.learning_rate = draw.learning_rate;
  return spec;
}

SearchResult random_search(const SearchSpace& space, const ModelSpec& base, const Matrix& x,
                           std::span<const int> y, std::size_t inner_k, std::size_t threads) {
  space.validate();
  const CVPlan inner = stratified_kfold(y, inner_k, derive_seed(space.seed, 0x5ea7c4ULL));

  SearchResult result;
  result.leaderboard.resize(space.n_draws);
  for (std::size_t d = 0; d < space.n_draws; ++d) {
    Rng rng(derive_seed(space.seed, d));
    SearchDraw& draw = result.leaderboard[d];
    draw.max_depth = space.depth_choices.empty()
                         ? static_cast<int>(rng.integer(space.depth_lo, space.depth_hi))
                         : space.depth_choices[rng.index(space.depth_choices.size())];
    draw.n_estimators = static_cast<int>(rng.integer(space.estimators_lo, space.estimators_hi));
    draw.learning_rate = space.learning_rates[rng.index(space.learning_rates.size())];
  }

  parallel_for(space.n_draws, threads, [&](std::size_t d) {
    const ModelSpec spec = apply_draw(base, result.leaderboard[d]);
    std::vector<std::optional<double>> f1s;
    for (std::size_t f = 0; f < inner.k(); ++f) {
      const auto train = inner.training_rows(f);
      const auto& test = inner.folds[f];
      const Matrix xt = take_rows(x, train);
      const auto yt = take(y, train);
      const TreeModel m = fit_model(spec, xt, yt, derive_seed(space.seed, f + 1));
      const auto pred = predict(m, take_rows(x, test));
      f1s.push_back(metrics(confusion(take(y, test), pred)).f1);
    }
    result.leaderboard[d].score = summarize(f1s).mean;
  });

  std::size_t best = 0;
  for (std::size_t d = 1; d < space.n_draws; ++d) {
    const auto& s = result.leaderboard[d].score;
    const auto& b = result.leaderboard[best].score;
    if (s && (!b || *s > *b)) best = d;
  }
  result.best_index = best;
  result.best = result.leaderboard[best];
  return result;
}

MetricSummary summarize(std::span<const std::optional<double>> values) {
  MetricSummary s;
  s.total = values.size();
  std::vector<double> defined;
  for (const auto& v : values) {
    if (v) defined.push_back(*v);
  }
  s.defined = defined.size();
  if (!defined.empty()) {
    s.mean = stats::mean(defined);
    s.std = defined.size() > 1 ? stats::stddev(defined) : 0.0;
  }
  return s;
}

MetricsSummary summarize(std::span<const FoldResult> folds) {
  std::vector<std::optional<double>> p, r, f, fp;
  for (const auto& fold : folds) {
    p.push_back(fold.metrics.precision);
    r.push_back(fold.metrics.recall);
    f.push_back(fold.metrics.f1);
    fp.push_back(fold.metrics.fpr);
  }
  return {summarize(p), summarize(r), summarize(f), summarize(fp)};
}

std::vector<SelectionResult> fold_selections(const SelectorSpec& selector, const Dataset& ds,
                                             const CVPlan& plan, std::size_t threads) {
  std::vector<SelectionResult> out(plan.k());
  parallel_for(plan.k(), threads, [&](std::size_t f) {
    try {
      const FoldData data = scaled_fold(ds, plan, f);
      out[f] = run_selector(selector, data.train.values(), data.train.labels(),
                            derive_seed(plan.seed, f, 1));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("fold {}: {}", f, e.what()));
    } catch (const Error& e) {
      throw Error(fmt::format("fold {}: {}", f, e.what()));
    }
  });
  return out;
}

CVResult cross_validate(const ModelSpec& model, const SelectorSpec& selector, const Dataset& ds,
                        const CVPlan& plan, const CVOptions& opt,
                        const std::vector<SelectionResult>* selections) {
  if (selections && selections->size() != plan.k()) {
    throw ValidationError("cached selections do not match the fold count");
  }
  CVResult result;
  result.seed = plan.seed;
  result.folds.resize(plan.k());
  std::vector<std::vector<std::string>> fold_warnings(plan.k());

  parallel_for(plan.k(), opt.threads, [&](std::size_t f) {
    try {
      const FoldData data = scaled_fold(ds, plan, f);
      const auto& y_train = data.train.labels();
      const SelectionResult selection =
          selections ? (*selections)[f]
                     : run_selector(selector, data.train.values(), y_train,
                                    derive_seed(plan.seed, f, 1));
      FoldResult& fr = result.folds[f];
      fr.fold = f;
      fr.n_selected = selection.selected.size();

      std::vector<int> pred;
      if (selection.selected.empty()) {
        // Nothing to fit on: predict the training majority.
        const auto pos = static_cast<std::size_t>(std::count(y_train.begin(), y_train.end(), 1));
        pred.assign(data.test.n_rows(), pos * 2 > y_train.size() ? 1 : 0);
        fold_warnings[f].push_back(
            fmt::format("fold {}: selector kept no features; predicted the majority class", f));
      } else {
        const Dataset train = data.train.select_columns(selection.selected);
        const Dataset test = data.test.select_columns(selection.selected);
        ModelSpec spec = model;
        if (opt.tune) {
          SearchSpace space = *opt.tune;
          space.seed = derive_seed(opt.tune->seed, plan.seed, f);
          const SearchResult sr = random_search(space, model, train.values(), y_train, opt.inner_k);
          spec = apply_draw(model, sr.best);
          fr.tuned = sr.best;
        }
        const TreeModel fitted = fit_model(spec, train.values(), y_train,
                                           derive_seed(plan.seed, f, 2), train.column_names());
        pred = predict(fitted, test.values());
      }
      fr.cm = confusion(data.test.labels(), pred);
      fr.metrics = metrics(fr.cm);
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("fold {}: {}", f, e.what()));
    } catch (const Error& e) {
      throw Error(fmt::format("fold {}: {}", f, e.what()));
    }
  });

  for (auto& w : fold_warnings) {
    result.warnings.insert(result.warnings.end(), w.begin(), w.end());
  }
  result.summary = summarize(result.folds);
  const std::pair<const char*, const MetricSummary*> named[] = {
      {"precision", &result.summary.precision},
      {"recall", &result.summary.recall},
      {"f1", &result.summary.f1},
      {"fpr", &result.summary.fpr}};
  for (const auto& [name, s] : named) {
    if (s->defined < s->total) {
      result.warnings.push_back(fmt::format("{} undefined in {} of {} folds; excluded from mean",
                                            name, s->total - s->defined, s->total));
    }
  }
  return result;
}

CellResult make_cell(ModelKind model, SelectionMethod selector, std::vector<CVResult> runs) {
  CellResult cell;
  cell.model = model;
  cell.selector = selector;
  cell.runs = std::move(runs);
  std::vector<FoldResult> pooled;
  double selected = 0.0;
  for (const auto& run : cell.runs) {
    for (const auto& f : run.folds) {
      pooled.push_back(f);
      selected += static_cast<double>(f.n_selected);
    }
  }
  cell.summary = summarize(pooled);
  cell.mean_selected = pooled.empty() ? 0.0 : selected / static_cast<double>(pooled.size());
  return cell;
}

nlohmann::ordered_json to_json(const Metrics& m) {
  return {{"precision", opt_json(m.precision)},
          {"recall", opt_json(m.recall)},
          {"f1", opt_json(m.f1)},
          {"fpr", opt_json(m.fpr)}};
}

nlohmann::ordered_json to_json(const MetricSummary& s) {
  return {{"mean", opt_json(s.mean)},
          {"std", opt_json(s.std)},
          {"defined", s.defined},
          {"total", s.total}};
}

namespace {

nlohmann::ordered_json summary_json(const MetricsSummary& s) {
  return {{"precision", to_json(s.precision)},
          {"recall", to_json(s.recall)},
          {"f1", to_json(s.f1)},
          {"fpr", to_json(s.fpr)}};
}

}  // namespace

nlohmann::ordered_json to_json(const CVResult& r) {
  nlohmann::ordered_json j;
  j["seed"] = r.seed;
  auto folds = nlohmann::ordered_json::array();
  for (const auto& f : r.folds) {
    nlohmann::ordered_json fj;
    fj["fold"] = f.fold;
    fj["confusion"] = {{"tp", f.cm.tp}, {"fp", f.cm.fp}, {"fn", f.cm.fn}, {"tn", f.cm.tn}};
    fj["metrics"] = to_json(f.metrics);
    fj["n_selected"] = f.n_selected;
    if (f.tuned) {
      fj["tuned"] = {{"max_depth", f.tuned->max_depth == kUnboundedDepth
                                       ? nlohmann::ordered_json("unbounded")
                                       : nlohmann::ordered_json(f.tuned->max_depth)},
                     {"n_estimators", f.tuned->n_estimators},
                     {"learning_rate", f.tuned->learning_rate},
                     {"inner_f1", opt_json(f.tuned->score)}};
    }
    folds.push_back(std::move(fj));
  }
  j["folds"] = std::move(folds);
  j["summary"] = summary_json(r.summary);
  j["warnings"] = r.warnings;
  return j;
}

nlohmann::ordered_json to_json(const CellResult& c) {
  nlohmann::ordered_json j;
  j["model"] = to_string(c.model);
  j["selector"] = to_string(c.selector);
  j["summary"] = summary_json(c.summary);
  j["mean_selected"] = c.mean_selected;
  auto runs = nlohmann::ordered_json::array();
  for (const auto& r : c.runs) runs.push_back(to_json(r));
  j["runs"] = std::move(runs);
  return j;
}

std::string table_csv(std::span<const CellResult> cells) {
  std::string out =
      "model,selector,precision,recall,f1,fpr,precision_std,recall_std,f1_std,fpr_std,"
      "mean_selected\n";
  for (const auto& c : cells) {
    const auto& s = c.summary;
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{:.1f}\n", to_string(c.model),
                       to_string(c.selector), cell_text(s.precision.mean),
                       cell_text(s.recall.mean), cell_text(s.f1.mean), cell_text(s.fpr.mean),
                       cell_text(s.precision.std), cell_text(s.recall.std),
                       cell_text(s.f1.std), cell_text(s.fpr.std), c.mean_selected);
  }
  return out;
}

std::vector<TableRow> parse_table_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("table CSV is empty");
  const auto header = split_line(line);
  auto col = [&](std::string_view name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError(fmt::format("table CSV lacks column '{}'", name));
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t cm = col("model"), cs = col("selector"), cp = col("precision"),
                    cr = col("recall"), cf = col("f1");
  auto number = [](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    try {
      return std::stod(s);
    } catch (const std::exception&) {
      throw ParseError(fmt::format("bad number '{}' in table CSV", s));
    }
  };
  std::vector<TableRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() < header.size()) throw ParseError("short line in table CSV");
    rows.push_back({f[cm], f[cs], number(f[cp]), number(f[cr]), number(f[cf])});
  }
  return rows;
}

std::string render_table(std::span<const TableRow> rows) {
  std::vector<std::string> models;
  std::vector<std::string> selectors;
  std::map<std::pair<std::string, std::string>, const TableRow*> cell;
  for (const auto& r : rows) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    if (std::find(selectors.begin(), selectors.end(), r.selector) == selectors.end()) {
      selectors.push_back(r.selector);
    }
    cell[{r.model, r.selector}] = &r;
  }
  std::map<std::string, double> best;
  for (const auto& r : rows) {
    if (!r.f1) continue;
    auto [it, fresh] = best.emplace(r.selector, *r.f1);
    if (!fresh) it->second = std::max(it->second, *r.f1);
  }
  auto num = [](const std::optional<double>& v) {
    return v ? fmt::format("{:.2f}", *v) : std::string("n/a");
  };

  constexpr int kGroup = 18;
  std::string out = fmt::format("{:<6}", "model");
  for (const auto& s : selectors) out += fmt::format("| {:<{}}", s, kGroup);
  out += '\n' + fmt::format("{:<6}", "");
  for (std::size_t i = 0; i < selectors.size(); ++i) {
    out += fmt::format("| {:<5} {:<5} {:<6}", "P", "R", "F1");
  }
  out += '\n';
  for (const auto& m : models) {
    out += fmt::format("{:<6}", m);
    for (const auto& s : selectors) {
      auto it = cell.find({m, s});
      if (it == cell.end()) {
        out += fmt::format("| {:<{}}", "-", kGroup);
        continue;
      }
      const TableRow& r = *it->second;
      auto b = best.find(s);
      const bool top = r.f1 && b != best.end() && *r.f1 == b->second;
      out += fmt::format("| {:<5} {:<5} {:<6}", num(r.precision), num(r.recall),
                         num(r.f1) + (top ? "*" : ""));
    }
    out += '\n';
  }
  out += "* best F1 per selector\n";
  return out;
}

}  // namespace rca
