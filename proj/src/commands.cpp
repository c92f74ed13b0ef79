#include "navil/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "navil/checkpoint.hpp"
#include "navil/rng.hpp"

namespace navil {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  if (!out) throw std::runtime_error("short write to " + p.string());
}

void require_runnable(const RunConfig& cfg) {
  if (!cfg.runnable) {
    throw ConfigError("runnable", "config '" + cfg.name + "' is a reference fixture and cannot be trained here");
  }
}

}  // namespace

void cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  require_runnable(cfg);
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  write_text(out / "config.json", config_to_json(cfg).dump(2) + "\n");

  NavilModel model(cfg.model);
  auto store = model.make_params(cfg.seed);
  std::ofstream metrics(out / "metrics.csv", std::ios::binary | std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + (out / "metrics.csv").string());
  metrics << metrics_csv_header() << '\n';
  const auto result = run_training(model, store, cfg.data, cfg.plan, cfg.seed, [&](const MetricsRow& row) {
    metrics << format_metrics_row(row) << '\n';
    if (row.val_loss) log << "step " << row.step << " [" << stage_name(row.stage) << "] val_loss " << *row.val_loss
                          << '\n';
    return false;
  });
  metrics.close();
  save_checkpoint((out / "checkpoint").string(), store);
  log << "trained " << result.steps_run << " steps; val loss " << result.initial_val << " -> " << result.final_val
      << "; artifacts in " << out.string() << '\n';
}

void cmd_sweep(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  require_runnable(cfg);
  if (cfg.sweep.empty()) throw ConfigError("sweep", "must list at least one point");
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  const auto records = run_sweep(experiment_spec(cfg));
  write_text(out / "records.csv", records_csv(records));
  write_text(out / "fit_report.json", fit_report_json(records));
  log << "swept " << records.size() << " points; artifacts in " << out.string() << '\n';
}

std::string attention_csv(const AttentionStats& stats) {
  std::string csv = "layer,query,to_visual,to_text\n";
  char buf[128];
  for (std::size_t l = 0; l < stats.blocks.size(); ++l) {
    for (int q = 0; q < 2; ++q) {
      if (!stats.present[static_cast<std::size_t>(q)]) continue;
      const auto& b = stats.blocks[l][static_cast<std::size_t>(q)];
      std::snprintf(buf, sizeof buf, "%zu,%s,%.10f,%.10f\n", l, q == 0 ? "visual" : "text", b[0], b[1]);
      csv += buf;
    }
  }
  return csv;
}

void cmd_attn_dump(const RunConfig& cfg, const std::string& checkpoint_dir, std::ostream& log) {
  cfg.validate();
  require_runnable(cfg);
  NavilModel model(cfg.model);
  auto store = model.make_params(cfg.seed);
  load_checkpoint(checkpoint_dir, store);
  const auto sample = gen_synthetic(derive_seed(cfg.seed, "sample"), 1, cfg.data.grid).front();
  GradTape t;
  const auto g = model.build(t, store, sample.image, sample.caption, true);
  const auto stats = aggregate_attention(g.trace.attention, g.seq.modality);
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  write_text(out / "attention.csv", attention_csv(stats));
  log << "attention for " << stats.blocks.size() << " layers written to " << (out / "attention.csv").string()
      << '\n';
}

PackedSequence pack_layout(const ModelConfig& model, int height, int width) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("image dims must be positive");
  const int ph = (height + kPadMultiple - 1) / kPadMultiple * kPadMultiple;
  const int pw = (width + kPadMultiple - 1) / kPadMultiple * kPadMultiple;
  const int unit = model.encoder.patch_stride * model.encoder.shuffle_factor;
  std::vector<ScaleGrid> grids;
  for (const auto& [h, w] : pyramid_dims(ph, pw, model.packing.tau, model.packing.area_threshold)) {
    grids.push_back({h / unit, w / unit});
  }
  return assemble_sequence(grids, {}, SpecialTokens::for_vocab(model.decoder.vocab));
}

std::string cmd_pack_debug(const RunConfig& cfg, int height, int width) {
  cfg.validate();
  const auto seq = pack_layout(cfg.model, height, width);
  const auto text = sequence_to_json(seq, SpecialTokens::for_vocab(cfg.model.decoder.vocab));
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  write_text(out / ("pack_" + std::to_string(height) + "x" + std::to_string(width) + ".json"), text);
  return text;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Native multimodal model toolkit: training, scaling sweeps, attention dumps, packing layouts"};
  app.require_subcommand(1);
  std::string config_path, preset_name = "desk-tiny", out_dir, checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<double> area_threshold;
  int height = 64, width = 64;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run config (every field required)");
    sub->add_option("--preset", preset_name, "embedded preset: desk-tiny | navil-2b-paper");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "root seed");
    sub->add_option("--area-threshold", area_threshold, "override the packing area threshold (px^2)");
  };
  auto* train = app.add_subcommand("train", "run the staged training schedule");
  auto* sweep = app.add_subcommand("sweep", "train every sweep point and fit scaling curves");
  auto* attn = app.add_subcommand("attn-dump", "per-layer modality-block attention statistics");
  auto* pack = app.add_subcommand("pack-debug", "print the packed token layout for an image size");
  for (auto* sub : {train, sweep, attn, pack}) common(sub);
  attn->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  pack->add_option("--height", height, "image height");
  pack->add_option("--width", width, "image width");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg = config_path.empty() ? preset(preset_name) : load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (area_threshold) cfg.model.packing.area_threshold = *area_threshold;
    if (const char* env = std::getenv(kOutDirEnv); env && *env) cfg.out_dir = env;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    cfg.validate();

    if (train->parsed()) cmd_train(cfg, err);
    if (sweep->parsed()) cmd_sweep(cfg, err);
    if (attn->parsed()) cmd_attn_dump(cfg, checkpoint, err);
    if (pack->parsed()) out << cmd_pack_debug(cfg, height, width);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace navil
