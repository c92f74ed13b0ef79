#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "navil/model.hpp"
#include "navil/training.hpp"

namespace navil {

// Nominal transformer parameter count N = 12·d·w².
std::uint64_t param_count(std::uint64_t d, std::uint64_t w);

// Inverse of param_count: round(sqrt(N / 12d)), then to the nearest multiple of `heads`.
int width_for_budget(double n, int d, int heads = 1);

struct SweepPoint {
  int d = 0;
  int w = 0;
  std::uint64_t n_target = 0;
};

// The five equal-budget (depth, width) encoder shapes around 6.04e8 parameters.
inline constexpr std::uint64_t kSweepBudget = 604'000'000;
std::vector<SweepPoint> sweep_grid();

struct OptimalSize {
  double size = 0.0;
  bool saturated = true;  // false when no ladder step gains less than λ·loss(base)
};

inline constexpr double kDefaultLambda = 0.01;

// Smallest s with loss(s) − loss(2s) < λ·loss(smallest). Keys must form a doubling ladder.
OptimalSize optimal_encoder_size(const std::map<double, double>& losses, double lambda = kDefaultLambda);

struct LogLinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

// Least squares of y on ln x (log_y = false) or ln y on ln x (log_y = true).
LogLinearFit fit_loglinear(const std::vector<std::pair<double, double>>& points, bool log_y = false);

struct ScalingRecord {
  std::string id;
  std::uint64_t encoder_params = 0;
  std::uint64_t llm_params = 0;
  int data_size = 0;
  double val_loss = 0.0;
};

struct ExperimentPoint {
  std::string id;
  ModelConfig model;
  int data_size = 0;  // training samples
};

struct ExperimentSpec {
  std::vector<ExperimentPoint> points;
  DataSpec data;  // n_train is overridden per point
  TrainingPlan plan;
  std::uint64_t seed = 0;
};

// Nominal sizes used on the scaling axes.
std::uint64_t encoder_size(const EncoderConfig& cfg);
std::uint64_t llm_size(const DecoderConfig& cfg);

// Trains and evaluates one point exactly as a direct run_training call would.
ScalingRecord run_point(const ExperimentPoint& point, const ExperimentSpec& spec);

// Points run concurrently; records come back sorted by (encoder, llm, data).
// A failing point aborts the sweep with an error naming its id.
std::vector<ScalingRecord> run_sweep(const ExperimentSpec& spec);

std::string records_csv(const std::vector<ScalingRecord>& records);
std::vector<ScalingRecord> parse_records_csv(const std::string& text);

// JSON report: per-LLM loss-vs-encoder fits, per-encoder loss-vs-LLM fits,
// optimal encoder size per LLM and the optimal-size-vs-LLM log-log fit.
std::string fit_report_json(const std::vector<ScalingRecord>& records, double lambda = kDefaultLambda);

}  // namespace navil
