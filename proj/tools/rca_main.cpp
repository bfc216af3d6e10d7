#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "rca/error.hpp"
#include "rca/pipeline.hpp"
#include "rca/synthgen.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string data;
  std::string groups;
  std::string metadata;
  std::string truth;
  std::string out;
  std::vector<std::string> models;
  std::vector<std::string> selectors;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> folds;
  std::optional<std::size_t> repeats;
  bool tune = false;
  std::optional<bool> explain;
  std::optional<std::size_t> k;
  std::optional<double> target_thresh;
  std::optional<double> redundancy_thresh;
  std::optional<std::size_t> boruta_iters;
  std::optional<double> alpha;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Experiment config file");
  cmd->add_option("--data", o.data, "Data CSV");
  cmd->add_option("--groups", o.groups, "Batch groups CSV");
  cmd->add_option("--metadata", o.metadata, "Column metadata JSON");
  cmd->add_option("--truth", o.truth, "Planted-rule truth JSON (recovery scoring)");
  cmd->add_option("--out", o.out, "Work directory for artifacts");
  cmd->add_option("--model", o.models, "dt, rf or xgb (repeat or comma-separate for a sweep)")
      ->delimiter(',');
  cmd->add_option("--select", o.selectors, "none, chi2, pearson or boruta (repeatable)")
      ->delimiter(',');
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--folds", o.folds, "Outer cross-validation folds");
  cmd->add_option("--repeats", o.repeats, "Repeated CV with derived seeds");
  cmd->add_flag("--tune", o.tune, "Random-search hyperparameters in each training fold");
  cmd->add_flag("--explain,!--no-explain", o.explain, "Extract rules from the refitted model");
  cmd->add_option("--k", o.k, "SelectKBest k");
  cmd->add_option("--target-thresh", o.target_thresh, "Pearson |r| to target threshold");
  cmd->add_option("--redundancy-thresh", o.redundancy_thresh, "Pearson redundancy threshold");
  cmd->add_option("--boruta-iters", o.boruta_iters, "Boruta iterations");
  cmd->add_option("--alpha", o.alpha, "Boruta significance level");
  cmd->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
}

rca::ExperimentConfig resolve(const Overrides& o) {
  rca::ExperimentConfig cfg = o.config.empty() ? rca::ExperimentConfig{} : rca::load_config(o.config);
  if (!o.data.empty()) cfg.data = o.data;
  if (!o.groups.empty()) cfg.groups = o.groups;
  if (!o.metadata.empty()) cfg.metadata = o.metadata;
  if (!o.truth.empty()) cfg.truth = o.truth;
  if (!o.out.empty()) cfg.out = o.out;
  if (!o.models.empty()) {
    cfg.models.clear();
    for (const auto& m : o.models) cfg.models.push_back(rca::parse_model_kind(m));
  }
  if (!o.selectors.empty()) {
    cfg.selectors.clear();
    for (const auto& s : o.selectors) cfg.selectors.push_back(rca::parse_selection_method(s));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.folds) cfg.folds = *o.folds;
  if (o.repeats) cfg.repeats = *o.repeats;
  if (o.tune) cfg.tune = true;
  if (o.explain) cfg.explain = *o.explain;
  if (o.k) cfg.selector.k = *o.k;
  if (o.target_thresh) cfg.selector.target_threshold = *o.target_thresh;
  if (o.redundancy_thresh) cfg.selector.redundancy_threshold = *o.redundancy_thresh;
  if (o.boruta_iters) cfg.selector.boruta.n_iterations = *o.boruta_iters;
  if (o.alpha) cfg.selector.boruta.alpha = *o.alpha;
  if (o.threads) cfg.threads = *o.threads;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Root-cause analysis for tabular batch data: preprocess, select, train, evaluate, explain"};
  app.set_version_flag("--version", rca::kVersion);
  app.require_subcommand(1);

  Overrides o;
  auto* run = app.add_subcommand("run", "Full pipeline: preprocess, evaluate, refit, explain");
  auto* pre = app.add_subcommand("preprocess", "Write prepared.csv, processed.csv, scaler.json");
  auto* sel = app.add_subcommand("select", "Fit the first selector on processed.csv");
  auto* train = app.add_subcommand("train", "Fit the first model on the selected features");
  auto* eval = app.add_subcommand("evaluate", "Stratified CV sweep over models x selectors");
  auto* expl = app.add_subcommand("explain", "Extract a rule list from model.json");
  auto* report = app.add_subcommand("report", "Print table.csv and rules.txt");
  for (auto* cmd : {run, pre, sel, train, eval, expl, report}) add_common(cmd, o);

  rca::SynthSpec spec;
  std::string synth_out = "synth";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with planted rules");
  synth->add_option("--out", synth_out, "Output directory");
  synth->add_option("--seed", spec.seed, "Generator seed");
  synth->add_option("--batches", spec.n_batches, "Number of batches");
  synth->add_option("--features", spec.n_features, "Feature columns");
  synth->add_option("--informative", spec.n_informative, "Informative features");
  synth->add_option("--positive-fraction", spec.positive_fraction, "Target positive fraction");
  synth->add_option("--rule-threshold", spec.rule_threshold, "Threshold of the default planted rules");
  synth->add_option("--label-noise", spec.label_noise, "Label flip probability");
  synth->add_option("--min-sub", spec.min_sub_instances, "Fewest sub-instances per batch");
  synth->add_option("--max-sub", spec.max_sub_instances, "Most sub-instances per batch");
  synth->add_option("--missing-rate", spec.missing_rate, "Missing fraction of nuisance cells");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      const rca::SynthData data = rca::generate(spec);
      rca::write_synth(data, spec, synth_out);
      fmt::print("wrote {} sub-instances in {} batches ({} positive) to {}\n",
                 data.sub_instances.n_rows(), data.batches.n_rows(), data.positives, synth_out);
      return 0;
    }
    const rca::ExperimentConfig cfg = resolve(o);
    if (run->parsed()) {
      rca::run_experiment(cfg);
      fmt::print("artifacts written to {}\n", cfg.out.string());
      fmt::print("{}", rca::stage_report(cfg));
    } else if (pre->parsed()) {
      cfg.validate();
      rca::stage_preprocess(cfg);
    } else if (sel->parsed()) {
      rca::stage_select(cfg);
    } else if (train->parsed()) {
      rca::stage_train(cfg);
    } else if (eval->parsed()) {
      rca::stage_evaluate(cfg);
    } else if (expl->parsed()) {
      rca::stage_explain(cfg);
    } else if (report->parsed()) {
      fmt::print("{}", rca::stage_report(cfg));
    }
    return 0;
  } catch (const rca::ValidationError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  } catch (const rca::ParseError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
}
