#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "rca/error.hpp"
#include "rca/pipeline.hpp"
#include "rca/synthgen.hpp"

using namespace rca;
namespace fs = std::filesystem;

namespace {

// Small synthetic study written to `dir`; returns a config reading it.
ExperimentConfig small_study(const fs::path& dir, const fs::path& out) {
  SynthSpec spec;
  spec.n_batches = 80;
  spec.n_features = 30;
  spec.n_informative = 2;
  spec.colour_triplets = 1;
  spec.seed = 9;
  write_synth(generate(spec), spec, dir);

  std::istringstream text(fmt::format(R"(
[input]
data = {0}/data.csv
groups = {0}/groups.csv
metadata = {0}/metadata.json
truth = {0}/truth.json

[preprocess]
emit_min_max = false

[select]
methods = pearson
target_threshold = 0.1
redundancy_threshold = 0.9

[model]
kinds = rf
rf_trees = 15
rf_max_depth = 4

[evaluation]
folds = 4
seed = 5

[output]
dir = {1}
)",
                                      dir.string(), out.string()));
  return parse_config(text);
}

int run_cli(const std::string& args) {
#ifdef RCA_CLI_PATH
  const char* cli = RCA_CLI_PATH;
#else
  const char* cli = std::getenv("RCA_CLI_PATH");
#endif
  REQUIRE_MESSAGE(cli != nullptr, "RCA_CLI_PATH is not set");
  const int status = std::system(fmt::format("\"{}\" {} >/dev/null 2>&1", cli, args).c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

}  // namespace

TEST_SUITE("cli-runner") {

TEST_CASE("config parsing") {
  std::istringstream ok(R"(
; comment
[input]
data = a.csv
[select]
methods = none, chi2, boruta
k = 20   ; top features
[model]
kinds = dt, xgb
xgb_max_depth = unbounded
[evaluation]
folds = 5
repeats = 2
)");
  const auto cfg = parse_config(ok, "/base");
  CHECK(cfg.data == fs::path("/base/a.csv"));
  CHECK(cfg.selectors == std::vector<SelectionMethod>{SelectionMethod::none,
                                                      SelectionMethod::chi2_kbest,
                                                      SelectionMethod::boruta});
  CHECK(cfg.selector.k == 20);
  CHECK(cfg.models == std::vector<ModelKind>{ModelKind::decision_tree, ModelKind::boosted});
  CHECK(cfg.model.boost.max_depth == kUnboundedDepth);
  CHECK(cfg.folds == 5);
  CHECK(cfg.repeats == 2);

  std::istringstream bad_key("[select]\nmethod = boruta\n");
  CHECK_THROWS_AS(parse_config(bad_key), ValidationError);
  std::istringstream bad_section("[selection]\nmethods = boruta\n");
  CHECK_THROWS_AS(parse_config(bad_section), ValidationError);
  std::istringstream bad_value("[evaluation]\nfolds = ten\n");
  CHECK_THROWS_AS(parse_config(bad_value), ValidationError);
  std::istringstream orphan("folds = 3\n");
  CHECK_THROWS_AS(parse_config(orphan), ValidationError);
}

TEST_CASE("config validation and hashing") {
  fixture::TempDir dir;
  auto cfg = small_study(dir / "synth", dir / "out");
  CHECK_NOTHROW(cfg.validate());
  const auto h = cfg.hash();
  cfg.threads = 4;
  cfg.out = dir / "elsewhere";
  CHECK(cfg.hash() == h);
  cfg.seed = 6;
  CHECK(cfg.hash() != h);

  auto broken = cfg;
  broken.folds = 1;
  CHECK_THROWS_AS(broken.validate(), ValidationError);
  broken = cfg;
  broken.data = dir / "missing.csv";
  CHECK_THROWS_AS(broken.validate(), ValidationError);
  broken = cfg;
  broken.models = {ModelKind::random_forest, ModelKind::random_forest};
  CHECK_THROWS_AS(broken.validate(), ValidationError);

  CHECK(parse_recipe("hue", "hue: a, b, c").inputs.size() == 3);
  CHECK_THROWS_AS(parse_recipe("hue", "hue a b"), ValidationError);
}

TEST_CASE("a run writes every artifact and is reproducible") {
  fixture::TempDir dir;
  const auto cfg = small_study(dir / "synth", dir / "out");
  run_experiment(cfg);
  for (const char* name : {"manifest.json", "metrics.json", "model.json", "prepared.csv",
                           "preprocess.json", "processed.csv", "recovery.json", "rules.json",
                           "rules.txt", "scaler.json", "selection.json", "table.csv",
                           "cells/rf-pearson/metrics.json"}) {
    CHECK_MESSAGE(fs::exists(cfg.out / name), name);
  }
  const auto rows = parse_table_csv(fixture::slurp(cfg.out / "table.csv"));
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].model == "rf");
  CHECK(rows[0].selector == "pearson");

  const auto manifest = nlohmann::json::parse(fixture::slurp(cfg.out / "manifest.json"));
  CHECK(manifest["config_hash"] == cfg.hash());
  CHECK(manifest["seed"] == 5);

  auto again = cfg;
  again.out = dir / "again";
  again.threads = 2;
  run_experiment(again);
  CHECK(fixture::snapshot(cfg.out) == fixture::snapshot(again.out));
}

TEST_CASE("a sweep covers every model and selector pair") {
  fixture::TempDir dir;
  auto cfg = small_study(dir / "synth", dir / "out");
  cfg.models = {ModelKind::decision_tree, ModelKind::random_forest, ModelKind::boosted};
  cfg.selectors = {SelectionMethod::none, SelectionMethod::chi2_kbest, SelectionMethod::pearson,
                   SelectionMethod::boruta};
  cfg.selector.k = 5;
  cfg.selector.boruta.n_iterations = 10;
  cfg.selector.boruta.forest.n_estimators = 15;
  cfg.model.boost.n_estimators = 10;
  cfg.explain = false;
  stage_preprocess(cfg);
  stage_evaluate(cfg);
  const auto rows = parse_table_csv(fixture::slurp(cfg.out / "table.csv"));
  CHECK(rows.size() == 12);
  const auto metrics = nlohmann::json::parse(fixture::slurp(cfg.out / "metrics.json"));
  CHECK(metrics["cells"].size() == 12);
  const std::string report = stage_report(cfg);
  CHECK(std::count(report.begin(), report.end(), '*') >= 5);
}

TEST_CASE("staged commands equal a one-shot run") {
  fixture::TempDir dir;
  const auto cfg = small_study(dir / "synth", dir / "oneshot");
  run_experiment(cfg);

  auto staged = cfg;
  staged.out = dir / "staged";
  stage_preprocess(staged);
  stage_evaluate(staged);
  stage_select(staged);
  stage_train(staged);
  stage_explain(staged);
  write_manifest(staged);
  CHECK(fixture::snapshot(cfg.out) == fixture::snapshot(staged.out));

  // explain alone reproduces rules.txt from model.json
  const std::string rules = fixture::slurp(cfg.out / "rules.txt");
  fs::remove(staged.out / "rules.txt");
  stage_explain(staged);
  CHECK(fixture::slurp(staged.out / "rules.txt") == rules);

  const std::string report = stage_report(cfg);
  CHECK(report.find("* best F1 per selector") != std::string::npos);
  CHECK(report.find(rules) != std::string::npos);
}

TEST_CASE("stages fail clearly without their inputs") {
  fixture::TempDir dir;
  auto cfg = small_study(dir / "synth", dir / "empty");
  CHECK_THROWS_AS(stage_train(cfg), ValidationError);
  CHECK_THROWS_AS(stage_explain(cfg), ValidationError);
  CHECK_THROWS_AS(stage_report(cfg), ValidationError);
  stage_preprocess(cfg);
  stage_select(cfg);
  cfg.selectors = {SelectionMethod::boruta};
  CHECK_THROWS_AS(stage_train(cfg), ValidationError);
}

TEST_CASE("command line exit codes") {
  fixture::TempDir dir;
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("--version") == 0);
  CHECK(run_cli("") == 1);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli(fmt::format("run --data {} --out {}", (dir / "nope.csv").string(),
                            (dir / "out").string())) == 1);
  CHECK(run_cli(fmt::format("synth --out {} --batches 60 --features 20 --informative 2",
                            (dir / "s").string())) == 0);
  CHECK(fs::exists(dir / "s" / "truth.json"));
  CHECK(run_cli(fmt::format("run --data {} --groups {} --folds 1 --out {}",
                            (dir / "s" / "data.csv").string(), (dir / "s" / "groups.csv").string(),
                            (dir / "out").string())) == 1);
  CHECK(run_cli(fmt::format("run --data {} --groups {} --folds 3 --model dt --select chi2 --k 4 "
                            "--no-explain --out {}",
                            (dir / "s" / "data.csv").string(), (dir / "s" / "groups.csv").string(),
                            (dir / "out").string())) == 0);
  CHECK(fs::exists(dir / "out" / "table.csv"));
}

}  // TEST_SUITE
