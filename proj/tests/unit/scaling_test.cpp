#include <gtest/gtest.h>

#include <cmath>

#include <json.hpp>

#include "navil/scaling.hpp"

using namespace navil;

namespace {

ModelConfig tiny_model(int enc_depth) {
  ModelConfig m;
  m.encoder = {enc_depth, 16, 24, 2, 16, 2, 16};
  m.decoder = {1, 16, 32, 2, 12};
  m.packing.area_threshold = 1024;
  return m;
}

ExperimentSpec tiny_spec() {
  ExperimentSpec spec;
  spec.data = {8, 4, {2, 4, 32}, 0.0};
  StageSchedule s;
  s.stage = Stage::kS2;
  s.peak_lr = 1e-3;
  s.steps = 3;
  spec.plan = {{s}, 4, 3};
  spec.seed = 21;
  return spec;
}

}  // namespace

TEST(ParamCount, Formula) {
  EXPECT_EQ(param_count(24, 1472), 12ull * 24 * 1472 * 1472);
  EXPECT_EQ(param_count(1, 1), 12u);
  EXPECT_EQ(param_count(0, 4096), 0u);
}

TEST(ParamCount, WidthForBudgetInvertsFormula) {
  for (auto p : sweep_grid()) {
    const int w = width_for_budget(static_cast<double>(param_count(p.d, p.w)), p.d);
    EXPECT_EQ(w, p.w);
  }
  EXPECT_EQ(width_for_budget(12.0 * 2 * 30 * 30, 2, 8), 32);
  EXPECT_THROW(width_for_budget(-1.0, 2), std::invalid_argument);
}

TEST(ParamCount, SweepGridWithinFivePercent) {
  const auto g = sweep_grid();
  ASSERT_EQ(g.size(), 5u);
  for (auto p : g) {
    const double n = static_cast<double>(param_count(p.d, p.w));
    EXPECT_LT(std::abs(n - 6.04e8) / 6.04e8, 0.05) << "d=" << p.d;
  }
}

TEST(OptimalSize, WorkedExample) {
  // Gains 0.20, 0.05, 0.01 against λ·L0 = 0.03: the 2nd step is the first below.
  const std::map<double, double> l{{75e6, 3.0}, {150e6, 2.8}, {300e6, 2.75}, {600e6, 2.74}};
  const auto o = optimal_encoder_size(l, 0.01);
  EXPECT_EQ(o.size, 300e6);
  EXPECT_TRUE(o.saturated);
}

TEST(OptimalSize, UnsaturatedReturnsLargest) {
  const std::map<double, double> l{{1, 4.0}, {2, 3.0}, {4, 2.0}};
  const auto o = optimal_encoder_size(l, 0.01);
  EXPECT_EQ(o.size, 4.0);
  EXPECT_FALSE(o.saturated);
}

TEST(OptimalSize, RejectsBadInput) {
  EXPECT_THROW(optimal_encoder_size({{1, 1.0}}), std::invalid_argument);
  EXPECT_THROW(optimal_encoder_size({{1, 1.0}, {3, 0.5}}), std::invalid_argument);
  EXPECT_THROW(optimal_encoder_size({{1, 1.0}, {2, 0.5}}, -0.1), std::invalid_argument);
}

TEST(OptimalSize, NonDecreasingInLambdaInverse) {
  const std::map<double, double> l{{1, 5.0}, {2, 4.0}, {4, 3.6}, {8, 3.5}, {16, 3.48}};
  double prev = 0;
  for (double lambda : {0.3, 0.1, 0.05, 0.01, 0.001}) {
    const double s = optimal_encoder_size(l, lambda).size;
    EXPECT_GE(s, prev);
    prev = s;
  }
}

TEST(Fit, RecoversPlantedLogLinear) {
  std::vector<std::pair<double, double>> pts;
  for (double x : {1e6, 1e7, 1e8, 1e9}) pts.emplace_back(x, 4.0 - 0.25 * std::log(x));
  const auto f = fit_loglinear(pts);
  EXPECT_NEAR(f.slope, -0.25, 1e-12);
  EXPECT_NEAR(f.intercept, 4.0, 1e-10);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);

  std::vector<std::pair<double, double>> pw;
  for (double x : {1.0, 2.0, 4.0, 8.0}) pw.emplace_back(x, 3.0 * std::pow(x, 0.7));
  const auto g = fit_loglinear(pw, true);
  EXPECT_NEAR(g.slope, 0.7, 1e-12);
  EXPECT_NEAR(std::exp(g.intercept), 3.0, 1e-12);
}

TEST(Fit, RejectsDegenerateInput) {
  EXPECT_THROW(fit_loglinear({{1.0, 2.0}}), std::invalid_argument);
  EXPECT_THROW(fit_loglinear({{2.0, 1.0}, {2.0, 3.0}}), std::invalid_argument);
  EXPECT_THROW(fit_loglinear({{0.0, 1.0}, {2.0, 3.0}}), std::invalid_argument);
}

TEST(Records, CsvRoundTripIsExact) {
  const std::vector<ScalingRecord> recs{{"a", 1000, 2000, 64, 1.0 / 3.0}, {"b", 4000, 2000, 64, 0.1}};
  const auto back = parse_records_csv(records_csv(recs));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].id, "a");
  EXPECT_EQ(back[0].val_loss, 1.0 / 3.0);
  EXPECT_EQ(back[1].encoder_params, 4000u);
  EXPECT_EQ(records_csv(back), records_csv(recs));
}

TEST(Records, FitReportPicksOptimalEncoder) {
  std::vector<ScalingRecord> recs;
  const double losses[] = {3.0, 2.8, 2.75, 2.74};
  for (int i = 0; i < 4; ++i) {
    recs.push_back({"e" + std::to_string(i), 75'000'000ull << i, 1'000'000'000, 10, losses[i]});
  }
  const auto j = nlohmann::json::parse(fit_report_json(recs));
  ASSERT_EQ(j["optimal_encoder"].size(), 1u);
  EXPECT_EQ(j["optimal_encoder"][0]["optimal_encoder_params"].get<std::uint64_t>(), 300'000'000u);
  EXPECT_EQ(j["loss_vs_encoder"].size(), 1u);
  EXPECT_TRUE(j["optimal_vs_llm"].is_null());
}

TEST(Sweep, SinglePointEqualsDirectRun) {
  auto spec = tiny_spec();
  spec.points = {{"only", tiny_model(1), 8}};
  const auto recs = run_sweep(spec);
  ASSERT_EQ(recs.size(), 1u);

  NavilModel model(spec.points[0].model);
  auto store = model.make_params(spec.seed);
  auto data = spec.data;
  data.n_train = 8;
  const auto direct = run_training(model, store, data, spec.plan, spec.seed);
  EXPECT_EQ(recs[0].val_loss, direct.final_val);
  EXPECT_EQ(recs[0].encoder_params, encoder_size(spec.points[0].model.encoder));
  EXPECT_EQ(recs[0].llm_params, llm_size(spec.points[0].model.decoder));
}

TEST(Sweep, OneRecordPerPointSorted) {
  auto spec = tiny_spec();
  spec.points = {{"deep", tiny_model(2), 8}, {"shallow", tiny_model(1), 8}, {"zero", tiny_model(0), 8}};
  const auto recs = run_sweep(spec);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].id, "zero");
  EXPECT_EQ(recs[2].id, "deep");
}

TEST(Sweep, RejectsDuplicatesAndNamesFailingPoint) {
  auto spec = tiny_spec();
  spec.points = {{"a", tiny_model(1), 8}, {"a", tiny_model(2), 8}};
  EXPECT_THROW(run_sweep(spec), std::invalid_argument);
  spec.points = {{"a", tiny_model(1), 8}, {"b", tiny_model(1), 8}};
  EXPECT_THROW(run_sweep(spec), std::invalid_argument);
  auto bad = tiny_model(1);
  bad.packing.tau = 2.0;
  spec.points = {{"ok", tiny_model(1), 8}, {"broken", bad, 8}};
  try {
    run_sweep(spec);
    FAIL() << "expected failure";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("broken"), std::string::npos) << e.what();
  }
}
