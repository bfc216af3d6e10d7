#include "rca/feature_select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

#include "rca/error.hpp"
#include "rca/parallel.hpp"
#include "rca/random.hpp"
#include "rca/stats.hpp"

namespace rca {

namespace {

// Indices ordered by descending score, ties to the lower index.
std::vector<std::size_t> rank_desc(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

void check_xy(const Matrix& x, std::span<const int> y) {
  if (y.size() != x.rows()) {
    throw ValidationError(fmt::format("{} labels for {} rows", y.size(), x.rows()));
  }
  if (x.cols() == 0) throw ValidationError("no features to select from");
}

std::string_view decision_name(BorutaDecision d) {
  switch (d) {
    case BorutaDecision::confirmed: return "confirmed";
    case BorutaDecision::tentative: return "tentative";
    case BorutaDecision::rejected: return "rejected";
  }
  return "unknown";
}

}  // namespace

std::string_view to_string(SelectionMethod method) {
  switch (method) {
    case SelectionMethod::none: return "none";
    case SelectionMethod::chi2_kbest: return "chi2";
    case SelectionMethod::pearson: return "pearson";
    case SelectionMethod::boruta: return "boruta";
  }
  return "unknown";
}

SelectionMethod parse_selection_method(std::string_view text) {
  if (text == "none") return SelectionMethod::none;
  if (text == "chi2" || text == "chi2_kbest") return SelectionMethod::chi2_kbest;
  if (text == "pearson") return SelectionMethod::pearson;
  if (text == "boruta") return SelectionMethod::boruta;
  throw ValidationError(
      fmt::format("unknown selector '{}' (expected none, chi2, pearson, boruta)", text));
}

nlohmann::ordered_json to_json(const SelectionResult& result, std::span<const std::string> names) {
  if (names.size() != result.scores.size()) {
    throw ValidationError("feature names do not match selection scores");
  }
  std::vector<std::string> decision(result.scores.size(), "dropped");
  for (std::size_t i : result.selected) decision[i] = "selected";
  if (result.diagnostics.contains("decisions")) {
    const auto& d = result.diagnostics["decisions"];
    for (std::size_t i = 0; i < decision.size(); ++i) {
      if (decision[i] != "selected") decision[i] = d[i].get<std::string>();
    }
  }
  nlohmann::ordered_json doc;
  doc["method"] = to_string(result.method);
  doc["params"] = result.params;
  auto features = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < result.scores.size(); ++i) {
    features.push_back({{"index", i},
                        {"name", names[i]},
                        {"score", result.scores[i]},
                        {"decision", decision[i]}});
  }
  doc["features"] = std::move(features);
  doc["selected"] = result.selected;
  auto selected_names = nlohmann::ordered_json::array();
  for (std::size_t i : result.selected) selected_names.push_back(names[i]);
  doc["selected_names"] = std::move(selected_names);
  doc["diagnostics"] = result.diagnostics;
  doc["warnings"] = result.warnings;
  return doc;
}

SelectionResult selection_from_json(const nlohmann::json& doc) {
  try {
    SelectionResult r;
    r.method = parse_selection_method(doc.at("method").get<std::string>());
    r.params = nlohmann::ordered_json(doc.at("params"));
    for (const auto& f : doc.at("features")) r.scores.push_back(f.at("score").get<double>());
    r.selected = doc.at("selected").get<std::vector<std::size_t>>();
    r.diagnostics = nlohmann::ordered_json(doc.at("diagnostics"));
    r.warnings = doc.at("warnings").get<std::vector<std::string>>();
    for (std::size_t i : r.selected) {
      if (i >= r.scores.size()) throw ValidationError("selected index out of range");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("malformed selection JSON: {}", e.what()));
  }
}

SelectionResult select_all(std::size_t n_features) {
  SelectionResult r;
  r.method = SelectionMethod::none;
  r.scores.assign(n_features, 0.0);
  r.selected.resize(n_features);
  std::iota(r.selected.begin(), r.selected.end(), 0);
  return r;
}

Chi2Scores chi2_scores(const Matrix& x, std::span<const int> y) {
  check_xy(x, y);
  const std::size_t n = x.rows();
  std::array<double, 2> class_n{0.0, 0.0};
  for (int v : y) class_n[static_cast<std::size_t>(v)] += 1.0;

  Chi2Scores out;
  out.statistics.assign(x.cols(), 0.0);
  out.p_values.assign(x.cols(), 1.0);
  for (std::size_t f = 0; f < x.cols(); ++f) {
    std::array<double, 2> observed{0.0, 0.0};
    bool constant = true;
    for (std::size_t r = 0; r < n; ++r) {
      const double v = x(r, f);
      if (v < 0.0) {
        throw ValidationError(fmt::format("chi2 needs non-negative features; column {} row {} is {}",
                                          f, r, v));
      }
      constant = constant && v == x(0, f);
      observed[static_cast<std::size_t>(y[r])] += v;
    }
    if (constant) continue;
    const double total = observed[0] + observed[1];
    double stat = 0.0;
    for (std::size_t c = 0; c < 2; ++c) {
      const double expected = class_n[c] / static_cast<double>(n) * total;
      if (expected > 0.0) stat += (observed[c] - expected) * (observed[c] - expected) / expected;
    }
    out.statistics[f] = stat;
    out.p_values[f] = stats::chi2_sf_df1(stat);
  }
  return out;
}

SelectionResult select_k_best(std::span<const double> scores, std::size_t k) {
  if (k < 1 || k > scores.size()) {
    throw ValidationError(fmt::format("k = {} outside [1, {}]", k, scores.size()));
  }
  SelectionResult r;
  r.method = SelectionMethod::chi2_kbest;
  r.scores.assign(scores.begin(), scores.end());
  auto order = rank_desc(scores);
  r.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  r.params["k"] = k;
  return r;
}

SelectionResult chi2_kbest(const Matrix& x, std::span<const int> y, std::size_t k) {
  auto chi = chi2_scores(x, y);
  auto r = select_k_best(chi.statistics, std::min(k, x.cols()));
  r.params["k"] = k;
  if (k > x.cols()) {
    r.warnings.push_back(fmt::format("k = {} exceeds {} features; keeping all", k, x.cols()));
  }
  std::size_t dependent = 0;
  for (double p : chi.p_values) dependent += p < 0.05 ? 1 : 0;
  r.diagnostics["p_values"] = chi.p_values;
  r.diagnostics["dependent_at_0.05"] = dependent;
  return r;
}

Correlation pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ValidationError(fmt::format("pearson_r length mismatch: {} vs {}", x.size(), y.size()));
  }
  if (x.size() < 2) throw ValidationError("pearson_r needs at least two observations");
  const double mx = stats::mean(x);
  const double my = stats::mean(y);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return {0.0, true};
  if (std::equal(x.begin(), x.end(), y.begin())) return {1.0, false};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

SelectionResult pcc_filter(const Matrix& x, std::span<const int> y, double target_threshold,
                           double redundancy_threshold) {
  check_xy(x, y);
  if (!(target_threshold > 0.0 && target_threshold <= 1.0) ||
      !(redundancy_threshold > 0.0 && redundancy_threshold <= 1.0)) {
    throw ValidationError("pearson thresholds must lie in (0, 1]");
  }
  std::vector<double> target(y.begin(), y.end());
  std::vector<std::vector<double>> cols(x.cols());
  SelectionResult r;
  r.method = SelectionMethod::pearson;
  r.scores.resize(x.cols());
  std::size_t degenerate = 0;
  for (std::size_t f = 0; f < x.cols(); ++f) {
    cols[f] = x.column(f);
    const auto c = pearson_r(cols[f], target);
    r.scores[f] = std::abs(c.r);
    degenerate += c.degenerate ? 1 : 0;
  }
  r.params["target_threshold"] = target_threshold;
  r.params["redundancy_threshold"] = redundancy_threshold;

  auto dropped_pairs = nlohmann::ordered_json::array();
  for (std::size_t f : rank_desc(r.scores)) {
    if (r.scores[f] < target_threshold) break;
    bool redundant = false;
    for (std::size_t kept : r.selected) {
      const double rr = std::abs(pearson_r(cols[f], cols[kept]).r);
      // At 1.0 rounding could make merely collinear columns collide.
      const bool collide = redundancy_threshold >= 1.0
                               ? std::equal(cols[f].begin(), cols[f].end(), cols[kept].begin())
                               : rr >= redundancy_threshold;
      if (collide) {
        dropped_pairs.push_back({{"dropped", f}, {"kept", kept}, {"abs_r", rr}});
        redundant = true;
        break;
      }
    }
    if (!redundant) r.selected.push_back(f);
  }
  if (r.selected.empty()) {
    throw ValidationError(fmt::format(
        "no feature reaches |r| >= {} with the target; lower the target threshold",
        target_threshold));
  }
  r.diagnostics["dropped_redundant"] = std::move(dropped_pairs);
  r.diagnostics["zero_variance_features"] = degenerate;
  return r;
}

void BorutaConfig::validate() const {
  if (n_iterations < 1) throw ValidationError("boruta needs at least one iteration");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  forest.validate();
}

int boruta_confirmation_threshold(int n_iterations, double alpha) {
  for (int h = 0; h <= n_iterations; ++h) {
    if (stats::binomial_upper_tail(n_iterations, h, 0.5) < alpha) return h;
  }
  return n_iterations + 1;
}

int boruta_rejection_threshold(int n_iterations, double alpha) {
  int best = -1;
  for (int h = 0; h <= n_iterations; ++h) {
    if (stats::binomial_lower_tail(n_iterations, h, 0.5) < alpha) best = h;
  }
  return best;
}

SelectionResult boruta(const Matrix& x, std::span<const int> y, const BorutaConfig& cfg) {
  cfg.validate();
  check_xy(x, y);
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();

  const std::size_t workers = std::min(resolve_threads(cfg.threads), cfg.n_iterations);
  std::vector<std::vector<std::uint8_t>> hits(cfg.n_iterations);
  std::vector<std::vector<double>> importance(cfg.n_iterations);
  parallel_for(cfg.n_iterations, workers, [&](std::size_t it) {
    Rng rng(derive_seed(cfg.seed, it));
    Matrix augmented(n, 2 * p);
    std::vector<std::size_t> perm(n);
    for (std::size_t f = 0; f < p; ++f) {
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(std::span<std::size_t>(perm));
      for (std::size_t r = 0; r < n; ++r) {
        augmented(r, f) = x(r, f);
        augmented(r, p + f) = x(perm[r], f);
      }
    }
    ForestConfig fc = cfg.forest;
    fc.seed = derive_seed(cfg.seed, it, 1);
    fc.threads = workers > 1 ? 1 : cfg.forest.threads;
    const auto forest = fit_forest(augmented, y, fc);
    auto imp = mdi_importances(forest);
    const double best_shadow = *std::max_element(imp.begin() + static_cast<std::ptrdiff_t>(p), imp.end());
    hits[it].resize(p);
    for (std::size_t f = 0; f < p; ++f) hits[it][f] = imp[f] > best_shadow ? 1 : 0;
    imp.resize(p);
    importance[it] = std::move(imp);
  });

  SelectionResult r;
  r.method = SelectionMethod::boruta;
  r.scores.assign(p, 0.0);
  std::vector<double> mean_importance(p, 0.0);
  for (std::size_t it = 0; it < cfg.n_iterations; ++it) {
    for (std::size_t f = 0; f < p; ++f) {
      r.scores[f] += hits[it][f];
      mean_importance[f] += importance[it][f] / static_cast<double>(cfg.n_iterations);
    }
  }
  const int n_iter = static_cast<int>(cfg.n_iterations);
  const int confirm_at = boruta_confirmation_threshold(n_iter, cfg.alpha);
  const int reject_at = boruta_rejection_threshold(n_iter, cfg.alpha);
  auto decisions = nlohmann::ordered_json::array();
  std::vector<BorutaDecision> decision(p);
  std::size_t confirmed = 0;
  for (std::size_t f = 0; f < p; ++f) {
    const auto h = static_cast<int>(r.scores[f]);
    decision[f] = h >= confirm_at  ? BorutaDecision::confirmed
                  : h <= reject_at ? BorutaDecision::rejected
                                   : BorutaDecision::tentative;
    confirmed += decision[f] == BorutaDecision::confirmed ? 1 : 0;
    decisions.push_back(decision_name(decision[f]));
  }
  for (std::size_t f : rank_desc(r.scores)) {
    if (decision[f] == BorutaDecision::confirmed ||
        (cfg.keep_tentative && decision[f] == BorutaDecision::tentative)) {
      r.selected.push_back(f);
    }
  }
  if (confirmed == 0) r.warnings.push_back("boruta confirmed no features");

  r.params["n_iterations"] = cfg.n_iterations;
  r.params["alpha"] = cfg.alpha;
  r.params["keep_tentative"] = cfg.keep_tentative;
  r.params["seed"] = cfg.seed;
  r.params["forest"] = to_json(cfg.forest);
  r.diagnostics["confirmation_threshold"] = confirm_at;
  r.diagnostics["rejection_threshold"] = reject_at;
  r.diagnostics["decisions"] = std::move(decisions);
  r.diagnostics["mean_importance"] = mean_importance;
  return r;
}

}  // namespace rca
