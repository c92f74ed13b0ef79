#include "navil/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

namespace navil {

std::uint64_t param_count(std::uint64_t d, std::uint64_t w) { return 12 * d * w * w; }

int width_for_budget(double n, int d, int heads) {
  if (!(n > 0.0) || d < 1 || heads < 1) throw std::invalid_argument("width_for_budget: N, d and heads must be positive");
  const double w = std::round(std::sqrt(n / (12.0 * d)));
  const long h = heads;
  const long snapped = std::lround(w / static_cast<double>(h)) * h;
  return static_cast<int>(std::max(h, snapped));
}

std::vector<SweepPoint> sweep_grid() {
  const std::pair<int, int> dw[] = {{3, 4096}, {6, 2880}, {12, 2048}, {24, 1472}, {48, 1024}};
  std::vector<SweepPoint> out;
  for (auto [d, w] : dw) out.push_back({d, w, kSweepBudget});
  return out;
}

OptimalSize optimal_encoder_size(const std::map<double, double>& losses, double lambda) {
  if (losses.size() < 2) throw std::invalid_argument("optimal_encoder_size: ladder needs at least 2 sizes");
  if (!(lambda >= 0.0)) throw std::invalid_argument("optimal_encoder_size: lambda must be non-negative");
  for (auto it = std::next(losses.begin()); it != losses.end(); ++it) {
    const double prev = std::prev(it)->first;
    if (!(prev > 0.0) || std::abs(it->first - 2.0 * prev) > 1e-9 * it->first) {
      throw std::invalid_argument("optimal_encoder_size: sizes do not form a doubling ladder");
    }
  }
  const double threshold = lambda * losses.begin()->second;
  for (auto it = losses.begin(); std::next(it) != losses.end(); ++it) {
    if (it->second - std::next(it)->second < threshold) return {it->first, true};
  }
  return {losses.rbegin()->first, false};
}

LogLinearFit fit_loglinear(const std::vector<std::pair<double, double>>& points, bool log_y) {
  if (points.size() < 2) throw std::invalid_argument("fit_loglinear: need at least 2 points");
  std::vector<double> xs, ys;
  for (auto [x, y] : points) {
    if (!(x > 0.0)) throw std::invalid_argument("fit_loglinear: x must be positive");
    if (log_y && !(y > 0.0)) throw std::invalid_argument("fit_loglinear: y must be positive for a log-log fit");
    xs.push_back(std::log(x));
    ys.push_back(log_y ? std::log(y) : y);
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx <= 1e-300) throw std::invalid_argument("fit_loglinear: degenerate x (all values equal)");
  LogLinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (f.intercept + f.slope * xs[i]);
    ss_res += r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

std::uint64_t encoder_size(const EncoderConfig& cfg) {
  return param_count(static_cast<std::uint64_t>(cfg.depth), static_cast<std::uint64_t>(cfg.width));
}

std::uint64_t llm_size(const DecoderConfig& cfg) {
  return param_count(static_cast<std::uint64_t>(cfg.depth), static_cast<std::uint64_t>(cfg.width));
}

ScalingRecord run_point(const ExperimentPoint& point, const ExperimentSpec& spec) {
  NavilModel model(point.model);
  auto store = model.make_params(spec.seed);
  DataSpec data = spec.data;
  data.n_train = point.data_size;
  const auto result = run_training(model, store, data, spec.plan, spec.seed);
  return {point.id, encoder_size(point.model.encoder), llm_size(point.model.decoder), point.data_size,
          result.final_val};
}

std::vector<ScalingRecord> run_sweep(const ExperimentSpec& spec) {
  if (spec.points.empty()) throw std::invalid_argument("sweep has no points");
  std::set<std::tuple<std::uint64_t, std::uint64_t, int>> seen;
  std::set<std::string> ids;
  for (const auto& p : spec.points) {
    if (!ids.insert(p.id).second) throw std::invalid_argument("sweep: duplicate point id " + p.id);
    if (p.data_size < 1) throw std::invalid_argument("sweep point " + p.id + ": data_size must be >= 1");
    try {
      p.model.validate();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("sweep point " + p.id + ": " + e.what());
    }
    if (!seen.insert({encoder_size(p.model.encoder), llm_size(p.model.decoder), p.data_size}).second) {
      throw std::invalid_argument("sweep point " + p.id + ": duplicate (encoder, llm, data) triple");
    }
  }
  const auto n = static_cast<long>(spec.points.size());
  std::vector<ScalingRecord> records(spec.points.size());
  std::vector<std::string> errors(spec.points.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    try {
      records[i] = run_point(spec.points[i], spec);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw std::runtime_error("sweep point " + spec.points[i].id + " failed: " + errors[i]);
  }
  std::sort(records.begin(), records.end(), [](const ScalingRecord& a, const ScalingRecord& b) {
    return std::tie(a.encoder_params, a.llm_params, a.data_size) < std::tie(b.encoder_params, b.llm_params, b.data_size);
  });
  return records;
}

std::string records_csv(const std::vector<ScalingRecord>& records) {
  std::string out = "id,encoder_params,llm_params,data_size,val_loss\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.17g", r.val_loss);
    out += r.id + "," + std::to_string(r.encoder_params) + "," + std::to_string(r.llm_params) + "," +
           std::to_string(r.data_size) + "," + buf + "\n";
  }
  return out;
}

std::vector<ScalingRecord> parse_records_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "id,encoder_params,llm_params,data_size,val_loss") {
    throw std::invalid_argument("records csv: missing or unexpected header");
  }
  std::vector<ScalingRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw std::invalid_argument("records csv: expected 5 fields in '" + line + "'");
    out.push_back({f[0], std::stoull(f[1]), std::stoull(f[2]), std::stoi(f[3]), std::stod(f[4])});
  }
  return out;
}

namespace {

nlohmann::ordered_json fit_json(const LogLinearFit& f) {
  return {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}};
}

}  // namespace

std::string fit_report_json(const std::vector<ScalingRecord>& records, double lambda) {
  using Key = std::pair<std::uint64_t, int>;
  std::map<Key, std::map<double, double>> by_llm, by_encoder;
  for (const auto& r : records) {
    by_llm[{r.llm_params, r.data_size}][static_cast<double>(r.encoder_params)] = r.val_loss;
    by_encoder[{r.encoder_params, r.data_size}][static_cast<double>(r.llm_params)] = r.val_loss;
  }
  auto fits = [](const std::map<Key, std::map<double, double>>& groups, const char* fixed) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& [key, curve] : groups) {
      if (curve.size() < 2) continue;
      nlohmann::ordered_json j;
      j[fixed] = key.first;
      j["data_size"] = key.second;
      j["points"] = curve.size();
      j["fit"] = fit_json(fit_loglinear({curve.begin(), curve.end()}));
      arr.push_back(j);
    }
    return arr;
  };

  nlohmann::ordered_json report;
  report["lambda"] = lambda;
  report["loss_vs_encoder"] = fits(by_llm, "llm_params");
  report["loss_vs_llm"] = fits(by_encoder, "encoder_params");
  nlohmann::ordered_json optimal = nlohmann::ordered_json::array();
  std::vector<std::pair<double, double>> opt_points;
  for (const auto& [key, curve] : by_llm) {
    if (curve.size() < 2) continue;
    nlohmann::ordered_json j;
    j["llm_params"] = key.first;
    j["data_size"] = key.second;
    try {
      const auto o = optimal_encoder_size(curve, lambda);
      j["optimal_encoder_params"] = static_cast<std::uint64_t>(o.size);
      j["saturated"] = o.saturated;
      opt_points.emplace_back(static_cast<double>(key.first), o.size);
    } catch (const std::invalid_argument& e) {
      j["optimal_encoder_params"] = nullptr;
      j["error"] = e.what();
    }
    optimal.push_back(j);
  }
  report["optimal_encoder"] = optimal;
  std::set<double> distinct_llm;
  for (const auto& p : opt_points) distinct_llm.insert(p.first);
  if (distinct_llm.size() >= 2) {
    report["optimal_vs_llm"] = fit_json(fit_loglinear(opt_points, true));
  } else {
    report["optimal_vs_llm"] = nullptr;
  }
  return report.dump(2) + "\n";
}

}  // namespace navil
