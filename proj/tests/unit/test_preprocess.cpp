#include <doctest.h>

#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rca/error.hpp"
#include "rca/preprocess.hpp"
#include "rca/random.hpp"

using namespace rca;

namespace {

Dataset one_col(std::vector<double> v, std::vector<std::uint8_t> missing = {}) {
  const std::size_t n = v.size();
  if (missing.empty()) missing.assign(n, 0);
  return Dataset({ColumnMeta{"x"}}, Matrix(n, 1, std::move(v)), std::move(missing));
}

PreprocessConfig no_min_max() {
  PreprocessConfig cfg;
  cfg.emit_min_max_features = false;
  return cfg;
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("quantity-weighted batch mean with min and max") {
  const Dataset ds = Dataset::dense({ColumnMeta{"v"}}, Matrix(3, 1, {9.0, 2.0, 4.0}),
                                    std::vector<int>{0, 0, 1});
  const std::vector<BatchGroup> groups{{"b", {{1, 1.0}, {2, 3.0}}}, {"c", {{0, 2.0}}}};
  const Dataset out = aggregate_batches(ds, groups, PreprocessConfig{});
  REQUIRE(out.n_rows() == 2);
  REQUIRE(out.column_names() == std::vector<std::string>{"v", "v_min", "v_max"});
  CHECK(out.value(0, 0) == doctest::Approx(3.5));
  CHECK(out.value(0, 1) == 2.0);
  CHECK(out.value(0, 2) == 4.0);
  CHECK(out.column(1).provenance == Provenance::statistical_min);
  CHECK(out.column(2).provenance == Provenance::statistical_max);
  // A single sub-instance: mean, min and max coincide.
  CHECK(out.value(1, 0) == 9.0);
  CHECK(out.value(1, 1) == 9.0);
  CHECK(out.value(1, 2) == 9.0);
  // Batch label is the worst sub-instance label by default.
  CHECK(out.labels() == std::vector<int>{1, 0});
}

TEST_CASE("weighted mean matches a direct loop over random sub-instances") {
  Rng rng(21);
  std::vector<double> v(10), q(10);
  std::vector<BatchGroup> groups(1);
  groups[0].batch_id = "b";
  for (std::size_t i = 0; i < 10; ++i) {
    v[i] = rng.normal(5.0, 3.0);
    q[i] = rng.uniform(0.1, 20.0);
    groups[0].members.push_back({i, q[i]});
  }
  const Dataset out = aggregate_batches(one_col(v), groups, no_min_max());
  CHECK(std::abs(out.value(0, 0) - oracle::weighted_mean(v, q)) < 1e-12);
}

TEST_CASE("missing sub-instance cells are skipped when aggregating") {
  const Dataset ds = one_col({1.0, 0.0, 5.0}, {0, 1, 0});
  const std::vector<BatchGroup> groups{{"b", {{0, 1.0}, {1, 100.0}, {2, 1.0}}}};
  const Dataset out = aggregate_batches(ds, groups, no_min_max());
  CHECK(out.value(0, 0) == 3.0);

  const std::vector<BatchGroup> only_missing{{"b", {{1, 1.0}}}};
  CHECK(aggregate_batches(ds, only_missing, no_min_max()).is_missing(0, 0));
}

TEST_CASE("sparse columns are dropped above the threshold") {
  std::istringstream in(
      "sparse,full,empty\n"
      "1,1,\n,2,\n,3,\n,4,\n,5,\n,6,\n,7,\n,8,\n,9,\n10,10,\n");
  const Dataset ds = parse_csv(in, std::nullopt);  // sparse: 80% missing
  PreprocessConfig cfg;
  auto r = drop_sparse_columns(ds, cfg);
  CHECK(r.dropped == std::vector<std::string>{"sparse", "empty"});
  CHECK(r.dataset.column_names() == std::vector<std::string>{"full"});

  cfg.sparse_drop_threshold = 1.0;
  r = drop_sparse_columns(ds, cfg);
  CHECK(r.dropped == std::vector<std::string>{"empty"});

  std::vector<std::uint8_t> mask(10, 0);
  for (int i = 0; i < 6; ++i) mask[static_cast<std::size_t>(i)] = 1;
  const Dataset sixty = one_col(std::vector<double>(10, 1.0), mask);
  cfg.sparse_drop_threshold = 0.55;
  const Dataset keep = Dataset::dense({ColumnMeta{"y"}}, Matrix(10, 1, 2.0));
  const Dataset both = sixty.append_columns(keep.columns(), keep.values());
  CHECK(drop_sparse_columns(both, cfg).dropped == std::vector<std::string>{"x"});
}

TEST_CASE("median imputation") {
  const Dataset ds = one_col({1.0, 0.0, 3.0}, {0, 1, 0});
  const Dataset out = impute_median(ds);
  CHECK_FALSE(out.any_missing());
  CHECK(out.value(1, 0) == 2.0);
  CHECK(out.value(0, 0) == 1.0);

  const Dataset full = one_col({4.0, 5.0});
  CHECK(impute_median(full) == full);
}

TEST_CASE("imputed values equal the per-column sort oracle") {
  const Matrix m = fixture::random_matrix(50, 6, 8);
  Rng rng(9);
  std::vector<std::uint8_t> mask(m.rows() * m.cols());
  for (auto& b : mask) b = rng.bernoulli(0.2) ? 1 : 0;
  std::vector<ColumnMeta> cols(6);
  for (std::size_t c = 0; c < 6; ++c) cols[c].name = "c" + std::to_string(c);
  const Dataset ds(cols, m, mask);
  const Dataset out = impute_median(ds);
  for (std::size_t c = 0; c < 6; ++c) {
    const double med = oracle::sorted_median(ds.observed(c));
    for (std::size_t r = 0; r < 50; ++r) {
      if (ds.is_missing(r, c)) CHECK(out.value(r, c) == med);
      else CHECK(out.value(r, c) == m(r, c));
    }
  }
}

TEST_CASE("outliers are clipped to the most extreme in-fence value") {
  PreprocessConfig cfg;
  const Dataset out = clip_outliers(one_col({1, 2, 3, 4, 100}), cfg);
  CHECK(out.values().column(0) == std::vector<double>{1, 2, 3, 4, 4});

  const Dataset constant = one_col({7, 7, 7, 7});
  CHECK(clip_outliers(constant, cfg) == constant);
  const Dataset tame = one_col({1, 2, 3, 4, 5});
  CHECK(clip_outliers(tame, cfg) == tame);

  CHECK_THROWS_AS(clip_outliers(one_col({1, 2}, {0, 1}), cfg), ValidationError);
}

TEST_CASE("normalisation by quantity") {
  const Dataset ds = Dataset::dense({ColumnMeta{"v"}, ColumnMeta{"kg"}}, Matrix(1, 2, {10.0, 2.0}));
  const Dataset out = normalize_by_quantity(ds, "kg", name_filter({}));
  CHECK(out.value(0, 0) == 5.0);
  CHECK(out.value(0, 1) == 2.0);

  const Matrix m = fixture::random_matrix(15, 4, 13);
  Matrix with_q(15, 5);
  for (std::size_t r = 0; r < 15; ++r) {
    for (std::size_t c = 0; c < 4; ++c) with_q(r, c) = m(r, c);
    with_q(r, 4) = 1.0;
  }
  std::vector<ColumnMeta> cols(5);
  for (std::size_t c = 0; c < 5; ++c) cols[c].name = c == 4 ? "kg" : "c" + std::to_string(c);
  const Dataset unit = Dataset::dense(cols, with_q);
  CHECK(normalize_by_quantity(unit, "kg", name_filter({})) == unit);

  Rng rng(4);
  Matrix scaled = with_q;
  for (std::size_t r = 0; r < 15; ++r) scaled(r, 4) = rng.uniform(0.5, 30.0);
  const Dataset q = Dataset::dense(cols, scaled);
  const Dataset qn = normalize_by_quantity(q, "kg", name_filter({"c1", "c3*"}));
  for (std::size_t r = 0; r < 15; ++r) {
    CHECK(qn.value(r, 0) == scaled(r, 0));
    CHECK(qn.value(r, 1) == scaled(r, 1) / scaled(r, 4));
    CHECK(qn.value(r, 3) == scaled(r, 3) / scaled(r, 4));
  }
}

TEST_CASE("min-max scaling and stored ranges") {
  const auto fit = minmax_fit_transform(one_col({2, 4, 6}));
  CHECK(fit.dataset.values().column(0) == std::vector<double>{0.0, 0.5, 1.0});
  REQUIRE(fit.params.ranges.size() == 1);
  CHECK(fit.params.ranges[0].min == 2.0);
  CHECK(fit.params.ranges[0].max == 6.0);

  CHECK(minmax_fit_transform(one_col({7, 7})).dataset.values().column(0) ==
        std::vector<double>{0.0, 0.0});

  const Dataset applied = minmax_apply(one_col({8, 1, 3}), fit.params);
  CHECK(applied.values().column(0) == std::vector<double>{1.0, 0.0, 0.25});

  CHECK(scaler_from_json(to_json(fit.params)) == fit.params);
}

TEST_CASE("config validation") {
  PreprocessConfig cfg;
  cfg.sparse_drop_threshold = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = PreprocessConfig{};
  cfg.outlier_iqr_multiplier = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

}  // TEST_SUITE
