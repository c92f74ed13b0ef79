#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "navil/model.hpp"
#include "navil/params.hpp"
#include "navil/synthetic.hpp"

namespace navil {

// Mean cross-entropy over positions with mask != 0. Throws on an empty mask.
double ntp_loss(const Tensor& logits, std::span<const int> targets, std::span<const std::uint8_t> mask);

enum class Stage { kS1_1, kS1_2, kS2 };

std::string_view stage_name(Stage s);
std::optional<Stage> parse_stage(std::string_view name);
// S1.1: vision + visual experts; S1.2 adds text attention; S2 trains everything.
std::vector<ParamGroup> trainable_groups(Stage s);

enum class LrKind { kConstantWithWarmup, kCosine };

std::string_view lr_kind_name(LrKind k);
std::optional<LrKind> parse_lr_kind(std::string_view name);

struct AdamWParams {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct StageSchedule {
  Stage stage = Stage::kS2;
  AdamWParams adam;
  double peak_lr = 1e-3;
  LrKind kind = LrKind::kConstantWithWarmup;
  int warmup_steps = 0;
  int steps = 100;

  // Learning rate for 0-based step within the stage.
  double lr_at(int step) const;
};

// Marks exactly the stage's groups trainable.
void apply_stage(const StageSchedule& schedule, ParameterStore& store);

// Decoupled-weight-decay Adam over the trainable groups of a store.
// Norm gains and biases (ParamEntry::decay == false) are not decayed.
class AdamW {
 public:
  void reset();
  void step(ParameterStore& store, double lr, const AdamWParams& hp);
  long steps_taken() const { return t_; }

 private:
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

// Computes the loss, writes store gradients (after zeroing them) and returns the loss.
using Objective = std::function<double(ParameterStore&)>;

// One forward/backward/update. Frozen groups are never written.
double train_step(const Objective& objective, ParameterStore& store, AdamW& opt, const StageSchedule& schedule,
                  int step);

struct ActivationRms {
  double visual = 0.0;
  double text = 0.0;
};

// Mean per-sample NTP loss over the batch; accumulates gradients into the store.
double batch_loss_and_grad(const NavilModel& model, ParameterStore& store,
                           std::span<const SyntheticSample* const> batch, ActivationRms* rms = nullptr);

double sample_loss(const NavilModel& model, const ParameterStore& store, const SyntheticSample& sample);

// Teacher-forcing loss averaged over held-out samples; no parameter update.
double validation_loss(const NavilModel& model, const ParameterStore& store, std::span<const SyntheticSample> heldout);

struct DataSpec {
  int n_train = 256;
  int n_val = 32;
  GridSpec grid;
  // Pure-language samples per multimodal sample during S1 stages (r in 1:r).
  double text_ratio = 0.0;
};

struct TrainingPlan {
  std::vector<StageSchedule> stages;
  int batch_size = 8;
  int eval_every = 50;
};

struct MetricsRow {
  int step = 0;
  Stage stage = Stage::kS1_1;
  std::optional<double> train_loss;
  std::optional<double> val_loss;
  ActivationRms rms;
};

std::string metrics_csv_header();
std::string format_metrics_row(const MetricsRow& row);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

struct TrainResult {
  std::vector<MetricsRow> metrics;
  double initial_val = 0.0;
  double final_val = 0.0;
  int steps_run = 0;
  bool stopped_early = false;
};

// Callback per metrics row; returning true stops training after that row.
using MetricsSink = std::function<bool(const MetricsRow&)>;

// Runs every stage in order. Data, order and init all derive from `seed`
// through named streams ("data", "heldout", "text", "order").
TrainResult run_training(const NavilModel& model, ParameterStore& store, const DataSpec& data,
                         const TrainingPlan& plan, std::uint64_t seed, const MetricsSink& sink = {});

}  // namespace navil
