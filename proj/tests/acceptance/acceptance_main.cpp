// Acceptance suite: one PASS/FAIL line per criterion, details indented below.
// Usage: rca_acceptance [--criterion N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rca/evalkit.hpp"
#include "rca/feature_select.hpp"
#include "rca/pipeline.hpp"
#include "rca/preprocess.hpp"
#include "rca/random.hpp"
#include "rca/rules.hpp"
#include "rca/synthgen.hpp"
#include "rca/trees.hpp"

using namespace rca;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  void check(bool ok, std::string what) {
    pass = pass && ok;
    details.push_back(fmt::format("{} {}", ok ? "ok  " : "FAIL", std::move(what)));
  }
};

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(fixture::slurp(p)); }

// The default synthetic study with the RF + Boruta pipeline of configs/.
ExperimentConfig synth_study(const fs::path& root) {
  const SynthSpec spec;
  write_synth(generate(spec), spec, root / "synth");
  ExperimentConfig cfg;
  cfg.data = root / "synth" / "data.csv";
  cfg.groups = root / "synth" / "groups.csv";
  cfg.metadata = root / "synth" / "metadata.json";
  cfg.truth = root / "synth" / "truth.json";
  cfg.preprocess.emit_min_max_features = false;
  cfg.selectors = {SelectionMethod::boruta};
  cfg.selector.boruta.n_iterations = 100;
  cfg.selector.boruta.alpha = 0.05;
  cfg.models = {ModelKind::random_forest};
  cfg.model.forest.n_estimators = 92;
  cfg.model.forest.max_depth = 75;
  cfg.folds = 10;
  cfg.seed = 42;
  cfg.explainer.min_rule_precision = 0.95;
  cfg.explainer.max_stages = 3;
  cfg.out = root / "run";
  return cfg;
}

// --- 1: F1 consistency of the reference precision/recall table -------------

struct RefCell {
  const char* model;
  const char* selector;
  double p, r, f1;
};

constexpr RefCell kReference[] = {
    {"DT", "All", 0.74, 0.68, 0.71},  {"DT", "SelectKBest", 0.69, 0.68, 0.68},
    {"DT", "Pearson", 0.67, 0.68, 0.67}, {"DT", "Boruta", 0.70, 0.70, 0.70},
    {"RF", "All", 0.73, 0.63, 0.67},  {"RF", "SelectKBest", 0.76, 0.69, 0.72},
    {"RF", "Pearson", 0.76, 0.65, 0.69}, {"RF", "Boruta", 0.81, 0.71, 0.76},
    {"XGB", "All", 0.73, 0.68, 0.70}, {"XGB", "SelectKBest", 0.77, 0.72, 0.74},
    {"XGB", "Pearson", 0.73, 0.62, 0.66}, {"XGB", "Boruta", 0.77, 0.70, 0.73},
};

Outcome criterion1() {
  Outcome o;
  for (const auto& c : kReference) {
    const double f1 = *f1_score(c.p, c.r);
    const double oracle = 2.0 * c.p * c.r / (c.p + c.r);
    const double gap = std::abs(f1 - c.f1);
    o.check(gap <= 0.005 + 1e-12 && std::abs(f1 - oracle) < 1e-15,
            fmt::format("{:<3} {:<11} P={:.2f} R={:.2f} -> F1={:.4f}, table {:.2f}, |diff|={:.4f}",
                        c.model, c.selector, c.p, c.r, f1, c.f1, gap));
  }
  o.check(std::round(*f1_score(0.81, 0.71) * 100.0) == 76.0, "(0.81, 0.71) rounds to 0.76");
  o.check(std::round(*f1_score(0.77, 0.72) * 100.0) == 74.0, "(0.77, 0.72) rounds to 0.74");
  return o;
}

// --- 2: Boruta threshold and behaviour --------------------------------------

Outcome criterion2() {
  Outcome o;
  const int lib = boruta_confirmation_threshold(20, 0.05);
  const int orc = oracle::confirmation_threshold(20, 0.05);
  o.check(lib == 15 && orc == 15,
          fmt::format("threshold(20, 0.05): library {}, binomial oracle {}, tail(15)={:.6f}, "
                      "tail(14)={:.6f}",
                      lib, orc, oracle::half_binomial_upper_tail(20, 15),
                      oracle::half_binomial_upper_tail(20, 14)));

  std::size_t label_confirmed = 0;
  double noise_confirmed = 0;
  for (std::uint64_t run = 0; run < 20; ++run) {
    const std::size_t n = 100;
    Matrix x = fixture::random_matrix(n, 11, 500 + run);
    std::vector<int> y(n);
    Rng rng(900 + run);
    for (std::size_t r = 0; r < n; ++r) {
      y[r] = rng.bernoulli(0.3) ? 1 : 0;
      x(r, 0) = y[r];
    }
    BorutaConfig cfg;
    cfg.n_iterations = 20;
    cfg.seed = run;
    const auto sel = boruta(x, y, cfg);
    label_confirmed += std::count(sel.selected.begin(), sel.selected.end(), 0u) == 1;

    const Matrix noise = fixture::random_matrix(n, 10, 700 + run);
    noise_confirmed += static_cast<double>(boruta(noise, y, cfg).selected.size());
  }
  o.check(label_confirmed == 20, fmt::format("label copy confirmed in {}/20 runs", label_confirmed));
  o.check(noise_confirmed / 20.0 < 1.0,
          fmt::format("pure noise: {:.2f} features confirmed on average", noise_confirmed / 20.0));
  return o;
}

// --- 3: tree correctness ----------------------------------------------------

Outcome criterion3() {
  Outcome o;
  std::size_t agree = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(10'000 + seed);
    Matrix x(12, 4);
    std::vector<int> y(12);
    for (std::size_t r = 0; r < 12; ++r) {
      for (std::size_t c = 0; c < 4; ++c) x(r, c) = rng.uniform();
      y[r] = rng.bernoulli(0.5) ? 1 : 0;
    }
    std::vector<std::size_t> rows(12);
    std::iota(rows.begin(), rows.end(), 0);
    const std::vector<std::size_t> feats{0, 1, 2, 3};
    const auto got = best_split(x, y, rows, feats, TreeConfig{});
    const auto want = oracle::brute_force_split(x, y, rows, feats);
    const bool same = got.has_value() == want.has_value() &&
                      (!got || (got->feature == want->feature && got->threshold == want->threshold &&
                                std::abs(got->impurity_decrease - want->decrease) < 1e-12));
    agree += same;
  }
  o.check(agree == 100, fmt::format("best_split equals brute force on {}/100 nodes", agree));

  std::size_t perfect = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix x = fixture::random_matrix(200, 6, 40 + seed);
    std::vector<int> y(200);
    Rng rng(seed);
    for (auto& v : y) v = rng.bernoulli(0.3) ? 1 : 0;
    const auto pred = predict(fit_decision_tree(x, y, TreeConfig{}), x);
    perfect += pred == y;
  }
  o.check(perfect == 10, fmt::format("unbounded tree training accuracy 1.0 on {}/10 datasets", perfect));

  SynthSpec spec;
  const auto data = generate(spec);
  const auto scaled = minmax_fit_transform(impute_median(data.batches));
  const Matrix& x = scaled.dataset.values();
  const auto& y = scaled.dataset.labels();
  BoostConfig bc;
  bc.n_estimators = 121;
  std::vector<double> losses{log_loss(std::vector<double>(y.size(), bc.base_score), y)};
  fit_boosted(x, y, bc, {}, [&](std::size_t, const TreeModel& m) {
    losses.push_back(log_loss(predict_proba(m, x), y));
  });
  std::size_t ups = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) ups += losses[i] > losses[i - 1] + 1e-12;
  o.check(losses.size() == 122 && ups == 0,
          fmt::format("boosted log-loss over {} rounds: {:.4f} -> {:.6f}, {} increases",
                      losses.size() - 1, losses.front(), losses.back(), ups));
  return o;
}

// --- 4: rule-extraction fidelity --------------------------------------------

Outcome criterion4() {
  Outcome o;
  Matrix grid(32 * 32, 2);
  for (std::size_t i = 0; i < 32; ++i) {
    for (std::size_t j = 0; j < 32; ++j) {
      grid(i * 32 + j, 0) = (static_cast<double>(i) + 0.5) / 32.0;
      grid(i * 32 + j, 1) = (static_cast<double>(j) + 0.5) / 32.0;
    }
  }
  using Target = std::function<int(double, double)>;
  const std::vector<std::pair<const char*, Target>> targets{
      {"diagonal", [](double a, double b) { return a + b > 1.0 ? 1 : 0; }},
      {"disc", [](double a, double b) { return (a - 0.5) * (a - 0.5) + (b - 0.5) * (b - 0.5) < 0.1 ? 1 : 0; }},
      {"corner", [](double a, double b) { return a > 0.6 || b > 0.7 ? 1 : 0; }},
  };
  for (const auto& [name, target] : targets) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed * 31 + 7);
      Matrix x(200, 2);
      std::vector<int> y(200);
      for (std::size_t r = 0; r < 200; ++r) {
        x(r, 0) = rng.uniform();
        x(r, 1) = rng.uniform();
        y[r] = target(x(r, 0), x(r, 1));
      }
      ForestConfig fc;
      fc.n_estimators = 5;
      fc.max_depth = 3;
      fc.seed = seed;
      const auto m = fit_forest(x, y, fc);
      const auto pred = predict(m, grid);
      const auto e = explain(m, grid, ExplainerConfig{});

      std::set<std::pair<std::size_t, double>> thresholds;
      for (const auto& t : m.trees) {
        for (const auto& n : t.nodes()) {
          if (!n.is_leaf()) thresholds.emplace(static_cast<std::size_t>(n.feature), n.threshold);
        }
      }
      std::size_t covered = 0, hit = 0, pos = 0, foreign = 0;
      for (std::size_t r = 0; r < grid.rows(); ++r) {
        const bool in = std::any_of(e.rules.rules.begin(), e.rules.rules.end(),
                                    [&](const Rule& rule) { return rule.satisfied_by(grid.row(r)); });
        pos += pred[r];
        covered += in;
        hit += in && pred[r];
      }
      for (const auto& rule : e.rules.rules) {
        for (const auto& c : rule.conditions) foreign += thresholds.count({c.feature, c.threshold}) == 0;
      }
      if (pos == 0) {
        o.check(covered == 0, fmt::format("{} seed {}: model predicts no positives", name, seed));
        continue;
      }
      const double precision = covered ? static_cast<double>(hit) / static_cast<double>(covered) : 0.0;
      const double recall = static_cast<double>(hit) / static_cast<double>(pos);
      o.check(precision >= 0.95 && recall >= 0.95 && foreign == 0,
              fmt::format("{:<8} seed {}: {} rules, precision {:.3f}, recall {:.3f}, {} foreign "
                          "thresholds",
                          name, seed, e.rules.rules.size(), precision, recall, foreign));
    }
  }
  return o;
}

// --- 5: synthetic end-to-end recovery --------------------------------------

Outcome criterion5() {
  Outcome o;
  fixture::TempDir dir("rca-acc5");
  const auto cfg = synth_study(dir.path());
  run_experiment(cfg);

  const auto metrics = read_json(cfg.out / "metrics.json");
  const auto& f1 = metrics["cells"][0]["summary"]["f1"];
  const double mean_f1 = f1["mean"].is_null() ? 0.0 : f1["mean"].get<double>();
  o.check(mean_f1 >= 0.90, fmt::format("10-fold mean F1 {:.4f} (>= 0.90)", mean_f1));

  const auto truth = read_json(*cfg.truth);
  const auto informative = truth["informative"].get<std::vector<std::string>>();
  const auto selected = read_json(cfg.out / "selection.json")["selected_names"].get<std::vector<std::string>>();
  std::size_t hits = 0;
  for (const auto& s : selected) hits += std::count(informative.begin(), informative.end(), s);
  const std::size_t nuisance = selected.size() - hits;
  o.check(hits >= 8, fmt::format("Boruta confirmed {}/10 informative features", hits));
  o.check(nuisance <= 2, fmt::format("Boruta confirmed {} nuisance features", nuisance));

  const double agreement = read_json(cfg.out / "recovery.json")["agreement"].get<double>();
  o.check(agreement >= 0.85, fmt::format("rule recovery score {:.4f} (>= 0.85)", agreement));
  return o;
}

// --- 6: model x selector sweep ---------------------------------------------

Outcome criterion6() {
  Outcome o;
  fixture::TempDir dir("rca-acc6");
  auto cfg = synth_study(dir.path());
  cfg.models = {ModelKind::decision_tree, ModelKind::random_forest, ModelKind::boosted};
  cfg.selectors = {SelectionMethod::none, SelectionMethod::chi2_kbest, SelectionMethod::pearson,
                   SelectionMethod::boruta};
  cfg.explain = false;
  stage_preprocess(cfg);
  stage_evaluate(cfg);

  const auto rows = parse_table_csv(fixture::slurp(cfg.out / "table.csv"));
  std::set<std::pair<std::string, std::string>> cells;
  for (const auto& r : rows) cells.emplace(r.model, r.selector);
  o.check(rows.size() == 12 && cells.size() == 12,
          fmt::format("table.csv has {} rows over {} distinct cells", rows.size(), cells.size()));

  std::map<std::string, double> best;
  for (const auto& r : rows) {
    if (r.f1) best[r.model] = std::max(best[r.model], *r.f1);
  }
  const std::string table = render_table(rows);
  o.details.push_back("table:");
  std::size_t start = 0;
  while (start < table.size()) {
    const auto end = table.find('\n', start);
    o.details.push_back("  " + table.substr(start, end - start));
    start = end == std::string::npos ? table.size() : end + 1;
  }
  const double ensemble = std::max(best["rf"], best["xgb"]);
  o.check(ensemble >= best["dt"],
          fmt::format("best ensemble F1 {:.4f} vs best decision tree F1 {:.4f}", ensemble, best["dt"]));
  return o;
}

// --- 7: determinism ---------------------------------------------------------

Outcome criterion7() {
  Outcome o;
  fixture::TempDir dir("rca-acc7");
  SynthSpec spec;
  spec.n_batches = 150;
  spec.n_features = 60;
  spec.n_informative = 4;
  spec.colour_triplets = 2;
  spec.seed = 17;

  auto configure = [&](const fs::path& root, std::size_t threads) {
    write_synth(generate(spec), spec, root / "synth");
    ExperimentConfig cfg;
    cfg.data = root / "synth" / "data.csv";
    cfg.groups = root / "synth" / "groups.csv";
    cfg.metadata = root / "synth" / "metadata.json";
    cfg.truth = root / "synth" / "truth.json";
    cfg.split_coloured = false;
    cfg.models = {ModelKind::decision_tree, ModelKind::random_forest, ModelKind::boosted};
    cfg.selectors = {SelectionMethod::boruta, SelectionMethod::none, SelectionMethod::chi2_kbest,
                     SelectionMethod::pearson};
    cfg.selector.k = 20;
    cfg.selector.boruta.n_iterations = 20;
    cfg.selector.boruta.forest.n_estimators = 40;
    cfg.model.forest.n_estimators = 30;
    cfg.model.boost.n_estimators = 30;
    cfg.tune = true;
    cfg.search.n_draws = 3;
    cfg.search.estimators_hi = 30;
    cfg.inner_folds = 3;
    cfg.folds = 5;
    cfg.repeats = 2;
    cfg.seed = 2024;
    cfg.threads = threads;
    cfg.out = root / "run";
    return cfg;
  };

  // Same root every time so paths recorded in artifacts match too.
  std::vector<std::vector<std::pair<std::string, std::string>>> snaps;
  const fs::path root = dir / "study";
  for (std::size_t threads : {1u, 1u, 2u, 4u}) {
    fs::remove_all(root);
    const auto cfg = configure(root, threads);
    run_experiment(cfg);
    snaps.push_back(fixture::snapshot(root));
    o.details.push_back(fmt::format("run with {} thread(s): {} artifacts", threads, snaps.back().size()));
  }
  for (std::size_t i = 1; i < snaps.size(); ++i) {
    std::vector<std::string> differ;
    for (std::size_t f = 0; f < std::min(snaps[0].size(), snaps[i].size()); ++f) {
      if (snaps[0][f] != snaps[i][f]) differ.push_back(snaps[0][f].first);
    }
    o.check(snaps[0].size() == snaps[i].size() && differ.empty(),
            fmt::format("run {} vs run 0: {} differing files{}", i, differ.size(),
                        differ.empty() ? "" : " (first: " + differ.front() + ")"));
  }
  return o;
}

// --- 8: stratification --------------------------------------------------------

Outcome criterion8() {
  Outcome o;
  std::vector<int> y(300, 0);
  std::fill(y.begin(), y.begin() + 90, 1);
  std::size_t good = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    rng.shuffle(std::span<int>(y));
    const auto plan = stratified_kfold(y, 10, seed);
    for (const auto& fold : plan.folds) {
      const auto pos = std::count_if(fold.begin(), fold.end(), [&](auto i) { return y[i] == 1; });
      good += pos == 9 && fold.size() == 30;
      ++total;
    }
  }
  o.check(good == total, fmt::format("{}/{} folds over 50 seeds hold 21 negatives and 9 positives", good, total));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rca acceptance suite"};
  int only = 0;
  app.add_option("--criterion", only, "Run a single criterion (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"F1 consistency of the reference table", criterion1},
      {"Boruta threshold and behaviour", criterion2},
      {"tree correctness", criterion3},
      {"rule-extraction fidelity", criterion4},
      {"synthetic end-to-end recovery", criterion5},
      {"model x selector sweep", criterion6},
      {"determinism across reruns and threads", criterion7},
      {"stratified folds", criterion8},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<std::size_t>(only) != i + 1) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out.check(false, fmt::format("threw: {}", e.what()));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& d : out.details) fmt::print("    {}\n", d);
    fmt::print("[{}] criterion {}: {} ({:.1f} s)\n", out.pass ? "PASS" : "FAIL", i + 1,
               criteria[i].first, secs);
    std::fflush(stdout);
    all = all && out.pass;
  }
  return all ? 0 : 1;
}
