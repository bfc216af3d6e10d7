#include "rca/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/core.h>

#include "rca/error.hpp"
#include "rca/random.hpp"
#include "rca/synthgen.hpp"

namespace rca {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const std::string t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ValidationError(fmt::format("config key '{}': '{}' is not a valid number", key, text));
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  std::string t = trim(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
  if (t == "false" || t == "no" || t == "off" || t == "0") return false;
  throw ValidationError(fmt::format("config key '{}': '{}' is not a boolean", key, text));
}

int parse_depth(const std::string& key, const std::string& text) {
  if (trim(text) == "unbounded") return kUnboundedDepth;
  const int d = parse_number<int>(key, text);
  if (d < 1) throw ValidationError(fmt::format("config key '{}': depth must be positive", key));
  return d;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("missing upstream artifact {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_json(const fs::path& path, const ojson& doc) { write_text(path, doc.dump(2) + "\n"); }

fs::path require(const fs::path& path) {
  if (!fs::exists(path)) {
    throw ValidationError(fmt::format("missing upstream artifact {}", path.string()));
  }
  return path;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Rethrows with the stage name prefixed, keeping the error category.
template <typename Fn>
auto staged(std::string_view stage, Fn&& fn) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("[{}] {}", stage, e.what()));
  } catch (const ParseError& e) {
    throw ParseError(fmt::format("[{}] {}", stage, e.what()));
  } catch (const DomainError& e) {
    throw DomainError(fmt::format("[{}] {}", stage, e.what()));
  } catch (const Error& e) {
    throw Error(fmt::format("[{}] {}", stage, e.what()));
  } catch (const std::exception& e) {
    throw Error(fmt::format("[{}] {}", stage, e.what()));
  }
}

std::uint64_t plan_seed(const ExperimentConfig& cfg, std::size_t repeat) {
  return repeat == 0 ? cfg.seed : derive_seed(cfg.seed, repeat);
}

constexpr std::uint64_t kSelectStream = 0x73656cULL;
constexpr std::uint64_t kTrainStream = 0x747261ULL;

Dataset load_processed(const ExperimentConfig& cfg) {
  return load_csv(require(cfg.out / "processed.csv"), cfg.label_column);
}

SelectorSpec selector_for(const ExperimentConfig& cfg, SelectionMethod method) {
  SelectorSpec s = cfg.selector;
  s.method = method;
  return s;
}

ModelSpec model_for(const ExperimentConfig& cfg, ModelKind kind) {
  ModelSpec m = cfg.model;
  m.kind = kind;
  return m;
}

void check_known(const boost::property_tree::ptree& section, const std::string& name,
                 const std::set<std::string>& keys) {
  for (const auto& [key, value] : section) {
    if (!keys.contains(key)) {
      throw ValidationError(fmt::format("unknown key '{}' in section [{}]", key, name));
    }
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (data.empty()) throw ValidationError("no data file given");
  if (!fs::exists(data)) throw ValidationError(fmt::format("data file {} does not exist", data.string()));
  for (const auto& p : {groups, metadata, truth}) {
    if (p && !fs::exists(*p)) throw ValidationError(fmt::format("file {} does not exist", p->string()));
  }
  if (split_coloured && !groups) throw ValidationError("split_coloured needs a groups file");
  preprocess.validate();
  if (selectors.empty()) throw ValidationError("no selector configured");
  if (models.empty()) throw ValidationError("no model configured");
  for (std::size_t i = 0; i < selectors.size(); ++i) {
    for (std::size_t j = i + 1; j < selectors.size(); ++j) {
      if (selectors[i] == selectors[j]) throw ValidationError("selector listed twice");
    }
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = i + 1; j < models.size(); ++j) {
      if (models[i] == models[j]) throw ValidationError("model listed twice");
    }
  }
  if (selector.k < 1) throw ValidationError("k must be positive");
  if (!(selector.target_threshold >= 0.0 && selector.target_threshold <= 1.0) ||
      !(selector.redundancy_threshold > 0.0 && selector.redundancy_threshold <= 1.0)) {
    throw ValidationError("Pearson thresholds must lie in [0, 1]");
  }
  selector.boruta.validate();
  model.tree.validate();
  model.forest.validate();
  model.boost.validate();
  if (tune) search.validate();
  if (inner_folds < 2) throw ValidationError("inner_folds must be at least 2");
  if (folds < 2) throw ValidationError("folds must be at least 2");
  if (repeats < 1) throw ValidationError("repeats must be at least 1");
  explainer.validate();
}

ojson ExperimentConfig::to_json() const {
  ojson j;
  j["input"] = {{"data", data.generic_string()},
                {"groups", groups ? ojson(groups->generic_string()) : ojson()},
                {"metadata", metadata ? ojson(metadata->generic_string()) : ojson()},
                {"truth", truth ? ojson(truth->generic_string()) : ojson()},
                {"label", label_column}};
  j["preprocess"] = {
      {"sparse_drop_threshold", preprocess.sparse_drop_threshold},
      {"outlier_iqr_multiplier", preprocess.outlier_iqr_multiplier},
      {"quantity_column", preprocess.quantity_column ? ojson(*preprocess.quantity_column) : ojson()},
      {"quantity_filter", preprocess.quantity_filter},
      {"emit_min_max", preprocess.emit_min_max_features},
      {"batch_label", preprocess.batch_label == BatchLabelRule::max ? "max" : "majority"},
      {"split_coloured", split_coloured}};
  auto recipes_json = ojson::array();
  for (const auto& r : recipes) {
    recipes_json.push_back({{"name", r.name}, {"kind", colour::to_string(r.kind)}, {"inputs", r.inputs}});
  }
  j["recipes"] = std::move(recipes_json);
  auto sel = ojson::array();
  for (auto s : selectors) sel.push_back(selector_for(*this, s).params_json());
  j["select"] = std::move(sel);
  auto mods = ojson::array();
  for (auto m : models) {
    mods.push_back({{"kind", to_string(m)}, {"params", model_for(*this, m).params_json()}});
  }
  j["model"] = {{"kinds", std::move(mods)},
                {"tune", tune},
                {"search", tune ? search.to_json() : ojson()},
                {"inner_folds", inner_folds}};
  j["evaluation"] = {{"folds", folds}, {"repeats", repeats}, {"seed", seed}};
  j["explain"] = {{"enabled", explain},
                  {"min_precision", explainer.min_rule_precision},
                  {"min_support", explainer.min_support},
                  {"max_stages", explainer.max_stages},
                  {"coverage_target", explainer.coverage_target},
                  {"max_candidates", explainer.max_candidates_per_stage}};
  return j;
}

std::string ExperimentConfig::hash() const {
  return fmt::format("{:016x}", fnv1a(to_json().dump()));
}

colour::Recipe parse_recipe(const std::string& name, const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw ValidationError(fmt::format("recipe '{}': expected 'kind: inputs'", name));
  }
  colour::Recipe r;
  r.name = trim(name);
  r.kind = colour::parse_recipe_kind(trim(text.substr(0, colon)));
  r.inputs = split_list(text.substr(colon + 1));
  const std::size_t want = r.kind == colour::RecipeKind::delta_e ? 6 : 3;
  if (r.inputs.size() != want) {
    throw ValidationError(fmt::format("recipe '{}' needs {} input columns, got {}", r.name, want,
                                      r.inputs.size()));
  }
  return r;
}

ExperimentConfig parse_config(std::istream& in, const fs::path& base_dir) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(fmt::format("config line {}: {}", e.line(), e.message()));
  }
  // Trailing "; ..." after a value is a comment; the ini reader keeps it.
  for (auto& [name, section] : tree) {
    for (auto& [key, v] : section) {
      std::string value = v.data();
      for (std::size_t at = value.find(';'); at != std::string::npos; at = value.find(';', at + 1)) {
        if (at > 0 && (value[at - 1] == ' ' || value[at - 1] == '\t')) {
          value.erase(at);
          break;
        }
      }
      v.data() = trim(value);
    }
  }

  ExperimentConfig cfg;
  auto path_of = [&](const std::string& text) {
    fs::path p(trim(text));
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };

  const std::set<std::string> sections{"input", "preprocess", "recipes", "select",
                                       "model", "search", "evaluation", "explain", "output"};
  for (const auto& [name, section] : tree) {
    if (!sections.contains(name)) {
      throw ValidationError(fmt::format("unknown config section [{}]", name));
    }
    if (section.empty() && !section.data().empty()) {
      throw ValidationError(fmt::format("key '{}' outside any section", name));
    }
  }

  if (auto s = tree.get_child_optional("input")) {
    check_known(*s, "input", {"data", "groups", "metadata", "truth", "label"});
    for (const auto& [key, v] : *s) {
      const std::string value = v.data();
      if (key == "data") cfg.data = path_of(value);
      if (key == "groups") cfg.groups = path_of(value);
      if (key == "metadata") cfg.metadata = path_of(value);
      if (key == "truth") cfg.truth = path_of(value);
      if (key == "label") cfg.label_column = trim(value);
    }
  }
  if (auto s = tree.get_child_optional("preprocess")) {
    check_known(*s, "preprocess",
                {"sparse_drop_threshold", "outlier_iqr_multiplier", "quantity_column",
                 "quantity_filter", "emit_min_max", "batch_label", "split_coloured"});
    auto& p = cfg.preprocess;
    for (const auto& [key, v] : *s) {
      const std::string value = v.data();
      const std::string k = "preprocess." + key;
      if (key == "sparse_drop_threshold") p.sparse_drop_threshold = parse_number<double>(k, value);
      if (key == "outlier_iqr_multiplier") p.outlier_iqr_multiplier = parse_number<double>(k, value);
      if (key == "quantity_column") p.quantity_column = trim(value);
      if (key == "quantity_filter") p.quantity_filter = split_list(value);
      if (key == "emit_min_max") p.emit_min_max_features = parse_bool(k, value);
      if (key == "split_coloured") cfg.split_coloured = parse_bool(k, value);
      if (key == "batch_label") {
        const std::string t = trim(value);
        if (t == "max") {
          p.batch_label = BatchLabelRule::max;
        } else if (t == "majority") {
          p.batch_label = BatchLabelRule::majority;
        } else {
          throw ValidationError(fmt::format("config key '{}': expected max or majority", k));
        }
      }
    }
  }
  if (auto s = tree.get_child_optional("recipes")) {
    for (const auto& [key, v] : *s) cfg.recipes.push_back(parse_recipe(key, v.data()));
  }
  if (auto s = tree.get_child_optional("select")) {
    check_known(*s, "select",
                {"methods", "k", "target_threshold", "redundancy_threshold", "boruta_iterations",
                 "alpha", "keep_tentative", "boruta_trees", "boruta_max_depth"});
    auto& sel = cfg.selector;
    for (const auto& [key, v] : *s) {
      const std::string value = v.data();
      const std::string k = "select." + key;
      if (key == "methods") {
        cfg.selectors.clear();
        for (const auto& m : split_list(value)) cfg.selectors.push_back(parse_selection_method(m));
      }
      if (key == "k") sel.k = parse_number<std::size_t>(k, value);
      if (key == "target_threshold") sel.target_threshold = parse_number<double>(k, value);
      if (key == "redundancy_threshold") sel.redundancy_threshold = parse_number<double>(k, value);
      if (key == "boruta_iterations") sel.boruta.n_iterations = parse_number<std::size_t>(k, value);
      if (key == "alpha") sel.boruta.alpha = parse_number<double>(k, value);
      if (key == "keep_tentative") sel.boruta.keep_tentative = parse_bool(k, value);
      if (key == "boruta_trees") sel.boruta.forest.n_estimators = parse_number<std::size_t>(k, value);
      if (key == "boruta_max_depth") sel.boruta.forest.max_depth = parse_depth(k, value);
    }
  }
  if (auto s = tree.get_child_optional("model")) {
    check_known(*s, "model",
                {"kinds", "tune", "dt_max_depth", "rf_trees", "rf_max_depth", "rf_max_features",
                 "xgb_trees", "xgb_max_depth", "xgb_learning_rate", "xgb_lambda",
                 "min_samples_leaf"});
    auto& m = cfg.model;
    for (const auto& [key, v] : *s) {
      const std::string value = v.data();
      const std::string k = "model." + key;
      if (key == "kinds") {
        cfg.models.clear();
        for (const auto& t : split_list(value)) cfg.models.push_back(parse_model_kind(t));
      }
      if (key == "tune") cfg.tune = parse_bool(k, value);
      if (key == "dt_max_depth") m.tree.max_depth = parse_depth(k, value);
      if (key == "rf_trees") m.forest.n_estimators = parse_number<std::size_t>(k, value);
      if (key == "rf_max_depth") m.forest.max_depth = parse_depth(k, value);
      if (key == "rf_max_features") m.forest.max_features = parse_number<std::size_t>(k, value);
      if (key == "xgb_trees") m.boost.n_estimators = parse_number<std::size_t>(k, value);
      if (key == "xgb_max_depth") m.boost.max_depth = parse_depth(k, value);
      if (key == "xgb_learning_rate") m.boost.learning_rate = parse_number<double>(k, value);
      if (key == "xgb_lambda") m.boost.lambda_l2 = parse_number<double>(k, value);
      if (key == "min_samples_leaf") {
        const auto leaf = parse_number<std::size_t>(k, value);
        m.tree.min_samples_leaf = leaf;
        m.forest.min_samples_leaf = leaf;
        m.boost.min_samples_leaf = leaf;
      }
    }
  }
  if (auto s = tree.get_child_optional("search")) {
    check_known(*s, "search",
                {"depth_range", "depth_choices", "estimators_range", "learning_rates", "draws",
                 "inner_folds", "seed"});
    auto& sp = cfg.search;
    for (const auto& [key, v] : *s) {
      const std::string value = v.data();
      const std::string k = "search." + key;
      auto pair = [&](int& lo, int& hi) {
        const auto items = split_list(value);
        if (items.size() != 2) throw ValidationError(fmt::format("config key '{}' needs 'lo, hi'", k));
        lo = parse_number<int>(k, items[0]);
        hi = parse_number<int>(k, items[1]);
      };
      if (key == "depth_range") pair(sp.depth_lo, sp.depth_hi);
      if (key == "estimators_range") pair(sp.estimators_lo, sp.estimators_hi);
      if (key == "depth_choices") {
        sp.depth_choices.clear();
        for (const auto& d : split_list(value)) sp.depth_choices.push_back(parse_depth(k, d));
      }
      if (key == "learning_rates") {
        sp.learning_rates.clear();
        for (const auto& lr : split_list(value)) sp.learning_rates.push_back(parse_number<double>(k, lr));
      }
      if (key == "draws") sp.n_draws = parse_number<std::size_t>(k, value);
      if (key == "inner_folds") cfg.inner_folds = parse_number<std::size_t>(k, value);
      if (key == "seed") sp.seed = parse_number<std::uint64_t>(k, value);
    }
  }
  if (auto s = tree.get_child_optional("evaluation")) {
    check_known(*s, "evaluation", {"folds", "repeats", "seed", "threads"});
    for (const auto& [key, v] : *s) {
      const std::string value = v.data();
      const std::string k = "evaluation." + key;
      if (key == "folds") cfg.folds = parse_number<std::size_t>(k, value);
      if (key == "repeats") cfg.repeats = parse_number<std::size_t>(k, value);
      if (key == "seed") cfg.seed = parse_number<std::uint64_t>(k, value);
      if (key == "threads") cfg.threads = parse_number<std::size_t>(k, value);
    }
  }
  if (auto s = tree.get_child_optional("explain")) {
    check_known(*s, "explain",
                {"enabled", "min_precision", "min_support", "max_stages", "coverage_target",
                 "max_candidates"});
    auto& e = cfg.explainer;
    for (const auto& [key, v] : *s) {
      const std::string value = v.data();
      const std::string k = "explain." + key;
      if (key == "enabled") cfg.explain = parse_bool(k, value);
      if (key == "min_precision") e.min_rule_precision = parse_number<double>(k, value);
      if (key == "min_support") e.min_support = parse_number<std::size_t>(k, value);
      if (key == "max_stages") e.max_stages = parse_number<std::size_t>(k, value);
      if (key == "coverage_target") e.coverage_target = parse_number<double>(k, value);
      if (key == "max_candidates") e.max_candidates_per_stage = parse_number<std::size_t>(k, value);
    }
  }
  if (auto s = tree.get_child_optional("output")) {
    check_known(*s, "output", {"dir"});
    if (auto d = s->get_optional<std::string>("dir")) cfg.out = path_of(*d);
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open config {}", path.string()));
  return parse_config(in, path.parent_path());
}

PreparedData prepare(const ExperimentConfig& cfg) {
  PreparedData out;
  auto& report = out.report;
  Dataset raw = load_csv(cfg.data, cfg.label_column);
  if (!raw.has_labels()) throw ValidationError(fmt::format("no label column '{}'", cfg.label_column));
  if (cfg.metadata) raw = apply_metadata(raw, load_metadata(*cfg.metadata));
  report["input_rows"] = raw.n_rows();
  report["input_columns"] = raw.n_cols();

  Dataset ds;
  if (cfg.groups) {
    const GroupTable groups = load_groups(*cfg.groups);
    ds = aggregate_batches(raw, groups.groups, cfg.preprocess);
    if (cfg.split_coloured) {
      if (!groups.coloured) throw ValidationError("groups file has no 'coloured' column");
      const Dataset split = colour::split_coloured_uncoloured(raw, *groups.coloured, groups.groups);
      ds = ds.append_columns(split.columns(), split.values(), split.missing_mask());
    }
    report["batches"] = ds.n_rows();
  } else {
    ds = raw;
  }
  report["aggregated_columns"] = ds.n_cols();

  SparseDropResult dropped = drop_sparse_columns(ds, cfg.preprocess);
  report["dropped_sparse"] = dropped.dropped;
  ds = impute_median(dropped.dataset);
  if (!cfg.recipes.empty()) ds = colour::append_calculated_features(ds, cfg.recipes);
  ds = clip_outliers(ds, cfg.preprocess);
  if (cfg.preprocess.quantity_column) {
    ds = normalize_by_quantity(ds, *cfg.preprocess.quantity_column,
                               name_filter(cfg.preprocess.quantity_filter));
  }
  const auto& y = ds.labels();
  report["rows"] = ds.n_rows();
  report["columns"] = ds.n_cols();
  report["positives"] = std::count(y.begin(), y.end(), 1);
  out.dataset = std::move(ds);
  return out;
}

void stage_preprocess(const ExperimentConfig& cfg) {
  staged("preprocess", [&] {
    PreparedData prepared = prepare(cfg);
    fs::create_directories(cfg.out);
    write_csv(cfg.out / "prepared.csv", prepared.dataset, cfg.label_column);
    ScaledDataset scaled = minmax_fit_transform(prepared.dataset);
    write_csv(cfg.out / "processed.csv", scaled.dataset, cfg.label_column);
    write_json(cfg.out / "scaler.json", to_json(scaled.params));
    write_json(cfg.out / "preprocess.json", prepared.report);
  });
}

void stage_select(const ExperimentConfig& cfg) {
  staged("select", [&] {
    const Dataset ds = load_processed(cfg);
    const SelectorSpec spec = selector_for(cfg, cfg.selectors.front());
    const SelectionResult result = run_selector(spec, ds.values(), ds.labels(),
                                                derive_seed(cfg.seed, kSelectStream), cfg.threads);
    write_json(cfg.out / "selection.json", to_json(result, ds.column_names()));
  });
}

void stage_train(const ExperimentConfig& cfg) {
  staged("train", [&] {
    const Dataset ds = load_processed(cfg);
    SelectionResult selection;
    const fs::path sel_path = cfg.out / "selection.json";
    if (fs::exists(sel_path)) {
      selection = selection_from_json(read_json(sel_path));
      if (selection.method != cfg.selectors.front()) {
        throw ValidationError(fmt::format("{} was produced by selector '{}' but '{}' is configured",
                                          sel_path.string(), to_string(selection.method),
                                          to_string(cfg.selectors.front())));
      }
      if (selection.scores.size() != ds.n_cols()) {
        throw ValidationError(fmt::format("{} does not match the columns of processed.csv",
                                          sel_path.string()));
      }
    } else {
      selection = run_selector(selector_for(cfg, cfg.selectors.front()), ds.values(), ds.labels(),
                               derive_seed(cfg.seed, kSelectStream), cfg.threads);
    }
    if (selection.selected.empty()) throw DomainError("the selector kept no features");
    const Dataset x = ds.select_columns(selection.selected);
    ModelSpec spec = model_for(cfg, cfg.models.front());
    if (cfg.tune) {
      const SearchResult sr = random_search(cfg.search, spec, x.values(), x.labels(),
                                            cfg.inner_folds, cfg.threads);
      spec = apply_draw(spec, sr.best);
    }
    const TreeModel model = fit_model(spec, x.values(), x.labels(),
                                      derive_seed(cfg.seed, kTrainStream), x.column_names(),
                                      cfg.threads);
    write_json(cfg.out / "model.json", to_json(model));
  });
}

void stage_evaluate(const ExperimentConfig& cfg) {
  staged("evaluate", [&] {
    const Dataset ds = load_csv(require(cfg.out / "prepared.csv"), cfg.label_column);
    CVOptions opt;
    opt.threads = cfg.threads;
    opt.inner_k = cfg.inner_folds;
    if (cfg.tune) opt.tune = cfg.search;

    // runs[model][selector]
    std::vector<std::vector<std::vector<CVResult>>> runs(
        cfg.models.size(), std::vector<std::vector<CVResult>>(cfg.selectors.size()));
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
      const CVPlan plan = stratified_kfold(ds.labels(), cfg.folds, plan_seed(cfg, r));
      for (std::size_t s = 0; s < cfg.selectors.size(); ++s) {
        const SelectorSpec sel = selector_for(cfg, cfg.selectors[s]);
        const auto selections = fold_selections(sel, ds, plan, cfg.threads);
        for (std::size_t m = 0; m < cfg.models.size(); ++m) {
          runs[m][s].push_back(
              cross_validate(model_for(cfg, cfg.models[m]), sel, ds, plan, opt, &selections));
        }
      }
    }

    std::vector<CellResult> cells;
    ojson cells_json = ojson::array();
    for (std::size_t m = 0; m < cfg.models.size(); ++m) {
      for (std::size_t s = 0; s < cfg.selectors.size(); ++s) {
        cells.push_back(make_cell(cfg.models[m], cfg.selectors[s], std::move(runs[m][s])));
        const ojson cell = to_json(cells.back());
        write_json(cfg.out / "cells" /
                       fmt::format("{}-{}", to_string(cfg.models[m]), to_string(cfg.selectors[s])) /
                       "metrics.json",
                   cell);
        cells_json.push_back(cell);
      }
    }
    ojson doc;
    doc["config_hash"] = cfg.hash();
    doc["seed"] = cfg.seed;
    doc["folds"] = cfg.folds;
    doc["repeats"] = cfg.repeats;
    doc["cells"] = std::move(cells_json);
    write_json(cfg.out / "metrics.json", doc);
    write_text(cfg.out / "table.csv", table_csv(cells));
  });
}

void stage_explain(const ExperimentConfig& cfg) {
  staged("explain", [&] {
    const TreeModel model = model_from_json(read_json(require(cfg.out / "model.json")));
    const ScalerParams scaler = scaler_from_json(read_json(require(cfg.out / "scaler.json")));
    const Dataset ds = load_processed(cfg);
    std::vector<std::size_t> cols;
    for (const auto& name : model.feature_names) cols.push_back(ds.column_index(name));
    const Dataset x = ds.select_columns(cols);

    const Explanation ex = explain(model, x.values(), cfg.explainer);
    RuleList raw = ex.rules;
    for (auto& r : raw.rules) r = denormalize(r, scaler);
    write_text(cfg.out / "rules.txt",
               "# thresholds in original units; statistics against the model's predictions\n" +
                   render_rules(raw));
    ojson doc = to_json(raw);
    doc["candidates_per_stage"] = ex.candidates_per_stage;
    write_json(cfg.out / "rules.json", doc);

    if (cfg.truth) {
      const Dataset prepared = load_csv(require(cfg.out / "prepared.csv"), cfg.label_column);
      const auto planted = load_planted_rules(*cfg.truth);
      const Recovery rec = recovery_score(raw.rules, planted, prepared);
      write_json(cfg.out / "recovery.json",
                 {{"agreement", rec.agreement},
                  {"jaccard", rec.jaccard_defined ? ojson(rec.jaccard) : ojson()}});
    }
  });
}

void write_manifest(const ExperimentConfig& cfg) {
  staged("manifest", [&] {
    ojson doc;
    doc["tool"] = "rca";
    doc["version"] = kVersion;
    doc["seed"] = cfg.seed;
    doc["config_hash"] = cfg.hash();
    doc["config"] = cfg.to_json();
    ojson inputs = ojson::object();
    auto add_input = [&](const char* key, const std::optional<fs::path>& p) {
      if (!p) return;
      inputs[key] = {{"path", p->generic_string()},
                     {"fnv1a", fmt::format("{:016x}", fnv1a(read_text(*p)))}};
    };
    add_input("data", cfg.data);
    add_input("groups", cfg.groups);
    add_input("metadata", cfg.metadata);
    add_input("truth", cfg.truth);
    doc["inputs"] = std::move(inputs);
    doc["libraries"] = {
        {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR,
                                      NLOHMANN_JSON_VERSION_MINOR, NLOHMANN_JSON_VERSION_PATCH)},
        {"fmt", fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100,
                            FMT_VERSION % 100)}};
    std::vector<std::string> artifacts;
    for (const auto& entry : fs::recursive_directory_iterator(cfg.out)) {
      if (!entry.is_regular_file()) continue;
      const auto rel = fs::relative(entry.path(), cfg.out).generic_string();
      if (rel != "manifest.json") artifacts.push_back(rel);
    }
    std::sort(artifacts.begin(), artifacts.end());
    doc["artifacts"] = artifacts;
    write_json(cfg.out / "manifest.json", doc);
  });
}

std::string stage_report(const ExperimentConfig& cfg) {
  return staged("report", [&] {
    const fs::path table = cfg.out / "table.csv";
    const fs::path rules = cfg.out / "rules.txt";
    if (!fs::exists(table) && !fs::exists(rules)) {
      throw ValidationError(fmt::format("missing upstream artifact {} (and {})", table.string(),
                                        rules.string()));
    }
    std::string out;
    if (fs::exists(table)) {
      const auto rows = parse_table_csv(read_text(table));
      out += render_table(rows);
    }
    if (fs::exists(rules)) {
      if (!out.empty()) out += '\n';
      out += read_text(rules);
    }
    return out;
  });
}

void run_experiment(const ExperimentConfig& cfg) {
  staged("config", [&] { cfg.validate(); });
  stage_preprocess(cfg);
  stage_evaluate(cfg);
  stage_select(cfg);
  stage_train(cfg);
  if (cfg.explain) stage_explain(cfg);
  write_manifest(cfg);
}

}  // namespace rca
