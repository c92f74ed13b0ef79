#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "navil/model.hpp"
#include "navil/scaling.hpp"
#include "navil/training.hpp"

namespace navil {

// Invalid or incomplete configuration; `field` is the dotted path of the culprit.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct SweepShape {
  int depth = 1;
  int width = 32;
  int heads = 1;
};

struct SweepEntry {
  std::string id;
  SweepShape encoder;
  SweepShape decoder;
  int data_size = 0;
};

struct RunConfig {
  std::string name;
  std::uint64_t seed = 0;
  std::string out_dir;
  // Fixture presets describe shapes too large to train here.
  bool runnable = true;
  ModelConfig model;
  DataSpec data;
  TrainingPlan plan;
  std::vector<SweepEntry> sweep;

  void validate() const;
};

// Encoder FFN width that keeps a layer at ~12w² parameters.
int encoder_mlp_width(int width);

std::vector<std::string> preset_names();
// Throws ConfigError for an unknown name.
RunConfig preset(std::string_view name);

// Strict parsing: every field is required and unknown keys are rejected.
RunConfig config_from_json(const nlohmann::ordered_json& j);
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

// Model config of one sweep point, inheriting everything else from `base`.
ModelConfig sweep_model(const ModelConfig& base, const SweepEntry& e);
ExperimentSpec experiment_spec(const RunConfig& cfg);

}  // namespace navil
