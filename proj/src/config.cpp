#include "navil/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace navil {

namespace {

using json = nlohmann::ordered_json;

constexpr const char* kDeskTiny = R"({
  "name": "desk-tiny",
  "seed": 0,
  "out_dir": "runs/desk-tiny",
  "runnable": true,
  "model": {
    "encoder": {"depth": 2, "width": 32, "mlp_width": 85, "heads": 2, "patch_stride": 16},
    "decoder": {"depth": 4, "width": 64, "mlp_width": 128, "heads": 4, "vocab": 32, "experts": 2},
    "packing": {"tau": 0.70710678118654752, "area_threshold": 1024, "factor": 2}
  },
  "data": {"n_train": 256, "n_val": 32, "grid": 2, "colors": 4, "image_size": 64, "text_ratio": 0},
  "training": {
    "batch_size": 8,
    "eval_every": 25,
    "stages": [
      {"stage": "S1.1", "steps": 100, "schedule": "constant_with_warmup", "peak_lr": 0.002, "warmup": 20,
       "beta1": 0.9, "beta2": 0.95, "eps": 1e-8, "weight_decay": 0.05},
      {"stage": "S1.2", "steps": 100, "schedule": "constant_with_warmup", "peak_lr": 0.002, "warmup": 20,
       "beta1": 0.9, "beta2": 0.95, "eps": 1e-8, "weight_decay": 0.1},
      {"stage": "S2", "steps": 100, "schedule": "cosine", "peak_lr": 0.001, "warmup": 20,
       "beta1": 0.9, "beta2": 0.95, "eps": 1e-8, "weight_decay": 0.01}
    ]
  },
  "sweep": [
    {"id": "enc1-dec32", "encoder": {"depth": 1, "width": 32, "heads": 2}, "decoder": {"depth": 4, "width": 32, "heads": 2}, "data_size": 256},
    {"id": "enc2-dec32", "encoder": {"depth": 2, "width": 32, "heads": 2}, "decoder": {"depth": 4, "width": 32, "heads": 2}, "data_size": 256},
    {"id": "enc4-dec32", "encoder": {"depth": 4, "width": 32, "heads": 2}, "decoder": {"depth": 4, "width": 32, "heads": 2}, "data_size": 256},
    {"id": "enc1-dec64", "encoder": {"depth": 1, "width": 32, "heads": 2}, "decoder": {"depth": 4, "width": 64, "heads": 4}, "data_size": 256},
    {"id": "enc2-dec64", "encoder": {"depth": 2, "width": 32, "heads": 2}, "decoder": {"depth": 4, "width": 64, "heads": 4}, "data_size": 256},
    {"id": "enc4-dec64", "encoder": {"depth": 4, "width": 32, "heads": 2}, "decoder": {"depth": 4, "width": 64, "heads": 4}, "data_size": 256}
  ]
})";

// Shapes and schedule of the 2B model; far too large to train here.
constexpr const char* kPaper2B = R"({
  "name": "navil-2b-paper",
  "seed": 0,
  "out_dir": "runs/navil-2b-paper",
  "runnable": false,
  "model": {
    "encoder": {"depth": 24, "width": 1472, "mlp_width": 5888, "heads": 23, "patch_stride": 16},
    "decoder": {"depth": 24, "width": 2048, "mlp_width": 8192, "heads": 16, "vocab": 92544, "experts": 2},
    "packing": {"tau": 0.70710678118654752, "area_threshold": 1024, "factor": 2}
  },
  "data": {"n_train": 500000000, "n_val": 10000, "grid": 2, "colors": 4, "image_size": 64, "text_ratio": 0},
  "training": {
    "batch_size": 7000,
    "eval_every": 1000,
    "stages": [
      {"stage": "S1.1", "steps": 70000, "schedule": "constant_with_warmup", "peak_lr": 5e-5, "warmup": 200,
       "beta1": 0.9, "beta2": 0.95, "eps": 1e-8, "weight_decay": 0.05},
      {"stage": "S1.2", "steps": 40000, "schedule": "constant_with_warmup", "peak_lr": 5e-5, "warmup": 200,
       "beta1": 0.9, "beta2": 0.95, "eps": 1e-8, "weight_decay": 0.1},
      {"stage": "S2", "steps": 30000, "schedule": "cosine", "peak_lr": 2e-5, "warmup": 200,
       "beta1": 0.9, "beta2": 0.95, "eps": 1e-8, "weight_decay": 0.01}
    ]
  },
  "sweep": []
})";

// Field-tracking view over one JSON object.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  const json& raw(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) throw ConfigError(field(key), "missing required field");
    return *it;
  }

  Section section(const std::string& key) { return Section(raw(key), field(key)); }

  int integer(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(field(key), "expected an integer");
    const auto x = v.get<long long>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      throw ConfigError(field(key), "integer out of range");
    }
    return static_cast<int>(x);
  }

  std::uint64_t unsigned_integer(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_number_unsigned()) throw ConfigError(field(key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  double number(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_number()) throw ConfigError(field(key), "expected a number");
    return v.get<double>();
  }

  std::string string(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_string()) throw ConfigError(field(key), "expected a string");
    return v.get<std::string>();
  }

  bool boolean(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(field(key), "expected true or false");
    return v.get<bool>();
  }

  const json& array(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_array()) throw ConfigError(field(key), "expected an array");
    return v;
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  // Rejects keys that were never read.
  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!used_.count(key)) throw ConfigError(field(key), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

SweepShape parse_shape(Section s) {
  SweepShape out;
  out.depth = s.integer("depth");
  out.width = s.integer("width");
  out.heads = s.integer("heads");
  s.finish();
  return out;
}

json shape_json(const SweepShape& s) { return {{"depth", s.depth}, {"width", s.width}, {"heads", s.heads}}; }

std::string stage_field(std::size_t i, const std::string& key) {
  return "training.stages[" + std::to_string(i) + "]." + key;
}

}  // namespace

int encoder_mlp_width(int width) { return static_cast<int>(std::lround(8.0 * width / 3.0)); }

void RunConfig::validate() const {
  require(!name.empty(), "name", "must not be empty");
  require(!out_dir.empty(), "out_dir", "must not be empty");
  const auto& e = model.encoder;
  const auto& d = model.decoder;
  require(e.depth >= 0, "model.encoder.depth", "must be >= 0");
  require(e.width >= 1, "model.encoder.width", "must be >= 1");
  require(e.mlp_width >= 1, "model.encoder.mlp_width", "must be >= 1");
  require(e.heads >= 1 && e.width % e.heads == 0, "model.encoder.heads", "must divide model.encoder.width");
  require(e.head_dim() % 4 == 0, "model.encoder.heads", "encoder head dim must be a multiple of 4 for 2D rotary");
  require(e.patch_stride >= 1 && kPadMultiple % e.patch_stride == 0, "model.encoder.patch_stride",
          "must divide 32");
  require(e.shuffle_factor >= 1 && (kPadMultiple / e.patch_stride) % e.shuffle_factor == 0, "model.packing.factor",
          "must divide the patch grid of a 32-pixel tile");
  require(d.depth >= 1, "model.decoder.depth", "must be >= 1");
  require(d.width >= 1, "model.decoder.width", "must be >= 1");
  require(d.mlp_width >= 1, "model.decoder.mlp_width", "must be >= 1");
  require(d.heads >= 1 && d.width % d.heads == 0, "model.decoder.heads", "must divide model.decoder.width");
  require(d.head_dim() % 2 == 0, "model.decoder.heads", "decoder head dim must be even for rotary");
  require(d.vocab > 4, "model.decoder.vocab", "must exceed the 4 reserved special tokens");
  require(model.packing.tau > 0.0 && model.packing.tau < 1.0, "model.packing.tau", "must lie in (0, 1)");
  require(model.packing.area_threshold > 0.0, "model.packing.area_threshold", "must be positive");
  require(data.n_train >= 1, "data.n_train", "must be >= 1");
  require(data.n_val >= 1, "data.n_val", "must be >= 1");
  require(data.grid.grid >= 1, "data.grid", "must be >= 1");
  require(data.grid.colors >= 1 && data.grid.colors <= kPaletteSize, "data.colors",
          "must lie in [1, " + std::to_string(kPaletteSize) + "]");
  require(data.grid.image_size >= data.grid.grid, "data.image_size", "must be >= data.grid");
  require(data.grid.caption_vocab() <= d.vocab - 4, "model.decoder.vocab",
          "too small for the caption vocabulary plus 4 special tokens");
  require(data.text_ratio >= 0.0, "data.text_ratio", "must be >= 0");
  require(plan.batch_size >= 1, "training.batch_size", "must be >= 1");
  require(plan.eval_every >= 0, "training.eval_every", "must be >= 0");
  require(!plan.stages.empty(), "training.stages", "must list at least one stage");
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    const auto& s = plan.stages[i];
    require(s.steps >= 1, stage_field(i, "steps"), "must be >= 1");
    require(s.warmup_steps >= 0, stage_field(i, "warmup"), "must be >= 0");
    require(s.peak_lr >= 0.0, stage_field(i, "peak_lr"), "must be >= 0");
    require(s.adam.beta1 >= 0.0 && s.adam.beta1 < 1.0, stage_field(i, "beta1"), "must lie in [0, 1)");
    require(s.adam.beta2 >= 0.0 && s.adam.beta2 < 1.0, stage_field(i, "beta2"), "must lie in [0, 1)");
    require(s.adam.eps > 0.0, stage_field(i, "eps"), "must be positive");
    require(s.adam.weight_decay >= 0.0, stage_field(i, "weight_decay"), "must be >= 0");
  }
  std::set<std::string> ids;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    const auto& p = sweep[i];
    const std::string f = "sweep[" + std::to_string(i) + "]";
    require(!p.id.empty() && p.id.find(',') == std::string::npos, f + ".id", "must be non-empty without commas");
    require(ids.insert(p.id).second, f + ".id", "duplicate id " + p.id);
    require(p.data_size >= 1, f + ".data_size", "must be >= 1");
    try {
      sweep_model(model, p).validate();
    } catch (const std::invalid_argument& err) {
      throw ConfigError(f, err.what());
    }
  }
}

std::vector<std::string> preset_names() { return {"desk-tiny", "navil-2b-paper"}; }

RunConfig preset(std::string_view name) {
  if (name == "desk-tiny") return parse_config(kDeskTiny);
  if (name == "navil-2b-paper") return parse_config(kPaper2B);
  throw ConfigError("preset", "unknown preset '" + std::string(name) + "'");
}

RunConfig config_from_json(const json& j) {
  Section root(j, "");
  RunConfig c;
  c.name = root.string("name");
  c.seed = root.unsigned_integer("seed");
  c.out_dir = root.string("out_dir");
  c.runnable = root.boolean("runnable");

  auto model = root.section("model");
  auto enc = model.section("encoder");
  c.model.encoder.depth = enc.integer("depth");
  c.model.encoder.width = enc.integer("width");
  c.model.encoder.mlp_width = enc.integer("mlp_width");
  c.model.encoder.heads = enc.integer("heads");
  c.model.encoder.patch_stride = enc.integer("patch_stride");
  enc.finish();
  auto dec = model.section("decoder");
  c.model.decoder.depth = dec.integer("depth");
  c.model.decoder.width = dec.integer("width");
  c.model.decoder.mlp_width = dec.integer("mlp_width");
  c.model.decoder.heads = dec.integer("heads");
  c.model.decoder.vocab = dec.integer("vocab");
  require(dec.integer("experts") == kNumModalities, dec.field("experts"),
          "must be 2 (one expert per modality group)");
  dec.finish();
  auto pack = model.section("packing");
  c.model.packing.tau = pack.number("tau");
  c.model.packing.area_threshold = pack.number("area_threshold");
  c.model.encoder.shuffle_factor = pack.integer("factor");
  pack.finish();
  model.finish();
  c.model.encoder.out_width = c.model.decoder.width;

  auto data = root.section("data");
  c.data.n_train = data.integer("n_train");
  c.data.n_val = data.integer("n_val");
  c.data.grid.grid = data.integer("grid");
  c.data.grid.colors = data.integer("colors");
  c.data.grid.image_size = data.integer("image_size");
  c.data.text_ratio = data.number("text_ratio");
  data.finish();

  auto training = root.section("training");
  c.plan.batch_size = training.integer("batch_size");
  c.plan.eval_every = training.integer("eval_every");
  const auto& stages = training.array("stages");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    Section s(stages[i], "training.stages[" + std::to_string(i) + "]");
    StageSchedule st;
    const auto name = s.string("stage");
    const auto stage = parse_stage(name);
    require(stage.has_value(), s.field("stage"), "unknown stage '" + name + "' (expected S1.1, S1.2 or S2)");
    st.stage = *stage;
    st.steps = s.integer("steps");
    const auto kind_name = s.string("schedule");
    const auto kind = parse_lr_kind(kind_name);
    require(kind.has_value(), s.field("schedule"),
            "unknown schedule '" + kind_name + "' (expected constant_with_warmup or cosine)");
    st.kind = *kind;
    st.peak_lr = s.number("peak_lr");
    st.warmup_steps = s.integer("warmup");
    st.adam.beta1 = s.number("beta1");
    st.adam.beta2 = s.number("beta2");
    st.adam.eps = s.number("eps");
    st.adam.weight_decay = s.number("weight_decay");
    s.finish();
    c.plan.stages.push_back(st);
  }
  training.finish();

  const auto& sweep = root.array("sweep");
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    Section s(sweep[i], "sweep[" + std::to_string(i) + "]");
    SweepEntry e;
    e.id = s.string("id");
    e.encoder = parse_shape(s.section("encoder"));
    e.decoder = parse_shape(s.section("decoder"));
    e.data_size = s.integer("data_size");
    s.finish();
    c.sweep.push_back(e);
  }
  root.finish();
  c.validate();
  return c;
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("malformed config: ") + e.what());
  }
  return config_from_json(j);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

json config_to_json(const RunConfig& c) {
  json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["runnable"] = c.runnable;
  const auto& e = c.model.encoder;
  const auto& d = c.model.decoder;
  j["model"]["encoder"] = {{"depth", e.depth},
                           {"width", e.width},
                           {"mlp_width", e.mlp_width},
                           {"heads", e.heads},
                           {"patch_stride", e.patch_stride}};
  j["model"]["decoder"] = {{"depth", d.depth},       {"width", d.width}, {"mlp_width", d.mlp_width},
                           {"heads", d.heads},       {"vocab", d.vocab}, {"experts", kNumModalities}};
  j["model"]["packing"] = {{"tau", c.model.packing.tau},
                           {"area_threshold", c.model.packing.area_threshold},
                           {"factor", e.shuffle_factor}};
  j["data"] = {{"n_train", c.data.n_train},         {"n_val", c.data.n_val},
               {"grid", c.data.grid.grid},          {"colors", c.data.grid.colors},
               {"image_size", c.data.grid.image_size}, {"text_ratio", c.data.text_ratio}};
  json stages = json::array();
  for (const auto& s : c.plan.stages) {
    stages.push_back({{"stage", stage_name(s.stage)},
                      {"steps", s.steps},
                      {"schedule", lr_kind_name(s.kind)},
                      {"peak_lr", s.peak_lr},
                      {"warmup", s.warmup_steps},
                      {"beta1", s.adam.beta1},
                      {"beta2", s.adam.beta2},
                      {"eps", s.adam.eps},
                      {"weight_decay", s.adam.weight_decay}});
  }
  j["training"] = {{"batch_size", c.plan.batch_size}, {"eval_every", c.plan.eval_every}, {"stages", stages}};
  json sweep = json::array();
  for (const auto& p : c.sweep) {
    sweep.push_back({{"id", p.id},
                     {"encoder", shape_json(p.encoder)},
                     {"decoder", shape_json(p.decoder)},
                     {"data_size", p.data_size}});
  }
  j["sweep"] = sweep;
  return j;
}

ModelConfig sweep_model(const ModelConfig& base, const SweepEntry& e) {
  ModelConfig m = base;
  m.encoder.depth = e.encoder.depth;
  m.encoder.width = e.encoder.width;
  m.encoder.heads = e.encoder.heads;
  m.encoder.mlp_width = encoder_mlp_width(e.encoder.width);
  m.decoder.depth = e.decoder.depth;
  m.decoder.width = e.decoder.width;
  m.decoder.heads = e.decoder.heads;
  m.decoder.mlp_width = 2 * e.decoder.width;
  m.encoder.out_width = m.decoder.width;
  return m;
}

ExperimentSpec experiment_spec(const RunConfig& cfg) {
  ExperimentSpec spec;
  spec.data = cfg.data;
  spec.plan = cfg.plan;
  spec.seed = cfg.seed;
  for (const auto& e : cfg.sweep) spec.points.push_back({e.id, sweep_model(cfg.model, e), e.data_size});
  return spec;
}

}  // namespace navil
