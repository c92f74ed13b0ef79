#include "navil/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "navil/rng.hpp"

namespace navil {

double ntp_loss(const Tensor& logits, std::span<const int> targets, std::span<const std::uint8_t> mask) {
  GradTape t;
  auto tg = std::make_shared<const std::vector<int>>(targets.begin(), targets.end());
  auto mk = std::make_shared<const std::vector<std::uint8_t>>(mask.begin(), mask.end());
  return t.value(ag::cross_entropy(t, t.constant(logits), tg, mk))[0];
}

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kS1_1: return "S1.1";
    case Stage::kS1_2: return "S1.2";
    case Stage::kS2: return "S2";
  }
  return "?";
}

std::optional<Stage> parse_stage(std::string_view name) {
  for (auto s : {Stage::kS1_1, Stage::kS1_2, Stage::kS2}) {
    if (stage_name(s) == name) return s;
  }
  return std::nullopt;
}

std::vector<ParamGroup> trainable_groups(Stage s) {
  switch (s) {
    case Stage::kS1_1: return {ParamGroup::kVision, ParamGroup::kVisualExperts};
    case Stage::kS1_2: return {ParamGroup::kVision, ParamGroup::kVisualExperts, ParamGroup::kTextAttn};
    case Stage::kS2: return {kAllGroups.begin(), kAllGroups.end()};
  }
  throw std::invalid_argument("unknown stage");
}

std::string_view lr_kind_name(LrKind k) { return k == LrKind::kCosine ? "cosine" : "constant_with_warmup"; }

std::optional<LrKind> parse_lr_kind(std::string_view name) {
  if (name == "cosine") return LrKind::kCosine;
  if (name == "constant_with_warmup") return LrKind::kConstantWithWarmup;
  return std::nullopt;
}

double StageSchedule::lr_at(int step) const {
  if (warmup_steps > 0 && step < warmup_steps) return peak_lr * (step + 1) / warmup_steps;
  if (kind == LrKind::kConstantWithWarmup) return peak_lr;
  const int span = std::max(1, steps - warmup_steps);
  const double progress = std::min(1.0, static_cast<double>(step - warmup_steps) / span);
  return peak_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

void apply_stage(const StageSchedule& schedule, ParameterStore& store) {
  store.set_all_trainable(false);
  for (auto g : trainable_groups(schedule.stage)) store.set_trainable(g, true);
}

void AdamW::reset() {
  m_.clear();
  v_.clear();
  t_ = 0;
}

void AdamW::step(ParameterStore& store, double lr, const AdamWParams& hp) {
  if (m_.size() != store.size()) {
    m_.clear();
    v_.clear();
    for (const auto& e : store.entries()) {
      m_.emplace_back(e.value.shape());
      v_.emplace_back(e.value.shape());
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < store.size(); ++k) {
    auto& e = store.at(k);
    if (!store.trainable(e.group)) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    const double decay = e.decay ? lr * hp.weight_decay : 0.0;
    for (std::size_t i = 0; i < e.value.numel(); ++i) {
      const double g = e.grad[i];
      m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
      v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      e.value[i] -= decay * e.value[i];
      e.value[i] -= lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
  }
}

double train_step(const Objective& objective, ParameterStore& store, AdamW& opt, const StageSchedule& schedule,
                  int step) {
  store.zero_grad();
  const double loss = objective(store);
  if (!std::isfinite(loss)) {
    throw NumericError("train_step: non-finite loss at stage " + std::string(stage_name(schedule.stage)) +
                       " step " + std::to_string(step));
  }
  const double lr = schedule.lr_at(step);
  if (lr > 0.0) opt.step(store, lr, schedule.adam);
  return loss;
}

namespace {

void accumulate_rms(const Tensor& hidden, std::span<const Modality> mask, ActivationRms& sum, std::array<int, 2>& n) {
  std::array<double, 2> ss{0.0, 0.0};
  std::array<std::size_t, 2> count{0, 0};
  for (std::size_t r = 0; r < hidden.rows(); ++r) {
    const auto m = static_cast<std::size_t>(mask[r]);
    for (double v : hidden.row(r)) ss[m] += v * v;
    count[m] += hidden.cols();
  }
  if (count[0]) {
    sum.visual += std::sqrt(ss[0] / static_cast<double>(count[0]));
    ++n[0];
  }
  if (count[1]) {
    sum.text += std::sqrt(ss[1] / static_cast<double>(count[1]));
    ++n[1];
  }
}

}  // namespace

double batch_loss_and_grad(const NavilModel& model, ParameterStore& store,
                           std::span<const SyntheticSample* const> batch, ActivationRms* rms) {
  if (batch.empty()) throw std::invalid_argument("batch_loss_and_grad: empty batch");
  GradTape t;
  std::vector<Var> losses;
  ActivationRms sum;
  std::array<int, 2> n{0, 0};
  for (const auto* s : batch) {
    auto g = model.build(t, store, s->image, s->caption, rms != nullptr);
    if (!g.loss.valid()) throw std::invalid_argument("batch_loss_and_grad: sample without NTP targets");
    losses.push_back(g.loss);
    if (rms) accumulate_rms(t.value(g.trace.hidden), g.seq.modality, sum, n);
  }
  Var loss = ag::mean(t, losses);
  t.backward(loss);
  t.accumulate_param_grads(store);
  if (rms) {
    rms->visual = n[0] ? sum.visual / n[0] : 0.0;
    rms->text = n[1] ? sum.text / n[1] : 0.0;
  }
  return t.value(loss)[0];
}

double sample_loss(const NavilModel& model, const ParameterStore& store, const SyntheticSample& sample) {
  GradTape t;
  auto g = model.build(t, store, sample.image, sample.caption);
  if (!g.loss.valid()) throw std::invalid_argument("sample_loss: sample without NTP targets");
  return t.value(g.loss)[0];
}

double validation_loss(const NavilModel& model, const ParameterStore& store, std::span<const SyntheticSample> heldout) {
  if (heldout.empty()) throw std::invalid_argument("validation_loss: empty held-out set");
  double total = 0.0;
  for (const auto& s : heldout) total += sample_loss(model, store, s);
  return total / static_cast<double>(heldout.size());
}

std::string metrics_csv_header() { return "step,stage,train_loss,val_loss,rms_visual,rms_text"; }

std::string format_metrics_row(const MetricsRow& row) {
  auto num = [](std::optional<double> v) {
    if (!v) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", *v);
    return std::string(buf);
  };
  std::string out = std::to_string(row.step) + "," + std::string(stage_name(row.stage)) + ",";
  out += num(row.train_loss) + "," + num(row.val_loss) + "," + num(row.rms.visual) + "," + num(row.rms.text);
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != metrics_csv_header()) {
    throw std::invalid_argument("metrics csv: missing or unexpected header");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 6) throw std::invalid_argument("metrics csv: expected 6 fields in '" + line + "'");
    MetricsRow r;
    r.step = std::stoi(f[0]);
    auto st = parse_stage(f[1]);
    if (!st) throw std::invalid_argument("metrics csv: unknown stage " + f[1]);
    r.stage = *st;
    if (!f[2].empty()) r.train_loss = std::stod(f[2]);
    if (!f[3].empty()) r.val_loss = std::stod(f[3]);
    r.rms.visual = f[4].empty() ? 0.0 : std::stod(f[4]);
    r.rms.text = f[5].empty() ? 0.0 : std::stod(f[5]);
    rows.push_back(r);
  }
  return rows;
}

TrainResult run_training(const NavilModel& model, ParameterStore& store, const DataSpec& data,
                         const TrainingPlan& plan, std::uint64_t seed, const MetricsSink& sink) {
  if (plan.stages.empty()) throw std::invalid_argument("training plan has no stages");
  if (plan.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  const auto train = gen_synthetic(derive_seed(seed, "data"), data.n_train, data.grid);
  const auto heldout = gen_synthetic(derive_seed(seed, "heldout"), data.n_val, data.grid);
  std::vector<SyntheticSample> text_pool;
  const int text_per_batch =
      data.text_ratio > 0.0
          ? static_cast<int>(std::lround(plan.batch_size * data.text_ratio / (1.0 + data.text_ratio)))
          : 0;
  if (text_per_batch > 0) text_pool = gen_text_only(derive_seed(seed, "text"), data.n_train, data.grid);

  Rng order_rng(seed, "order");
  std::vector<std::size_t> order(train.size());
  std::size_t cursor = order.size();
  std::size_t text_cursor = 0;
  auto next_sample = [&]() -> const SyntheticSample* {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), order_rng.engine());
      cursor = 0;
    }
    return &train[order[cursor++]];
  };

  TrainResult result;
  result.initial_val = validation_loss(model, store, heldout);
  result.final_val = result.initial_val;
  auto emit = [&](const MetricsRow& row) {
    result.metrics.push_back(row);
    return sink ? sink(row) : false;
  };
  if (emit(MetricsRow{0, plan.stages.front().stage, std::nullopt, result.initial_val, {}})) {
    result.stopped_early = true;
    return result;
  }

  AdamW opt;
  int global = 0;
  for (const auto& schedule : plan.stages) {
    apply_stage(schedule, store);
    opt.reset();
    const bool s1 = schedule.stage != Stage::kS2;
    for (int step = 0; step < schedule.steps; ++step) {
      std::vector<const SyntheticSample*> batch;
      const int n_text = s1 ? std::min(text_per_batch, plan.batch_size - 1) : 0;
      for (int i = 0; i < plan.batch_size - n_text; ++i) batch.push_back(next_sample());
      for (int i = 0; i < n_text; ++i) batch.push_back(&text_pool[text_cursor++ % text_pool.size()]);

      ActivationRms rms;
      const Objective objective = [&](ParameterStore& s) { return batch_loss_and_grad(model, s, batch, &rms); };
      MetricsRow row;
      row.train_loss = train_step(objective, store, opt, schedule, step);
      row.step = ++global;
      row.stage = schedule.stage;
      row.rms = rms;
      const bool last = step + 1 == schedule.steps;
      if (last || (plan.eval_every > 0 && global % plan.eval_every == 0)) {
        row.val_loss = validation_loss(model, store, heldout);
        result.final_val = *row.val_loss;
      }
      result.steps_run = global;
      if (emit(row)) {
        result.stopped_early = true;
        return result;
      }
    }
  }
  return result;
}

}  // namespace navil
