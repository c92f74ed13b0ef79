#pragma once

#include <iosfwd>
#include <string>

#include "navil/config.hpp"
#include "navil/packing.hpp"

namespace navil {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

inline constexpr const char* kOutDirEnv = "NAVIL_OUT_DIR";

// Each command writes its artifacts under cfg.out_dir and throws on failure
// (ConfigError for configuration problems).

// metrics.csv, checkpoint/ and config.json.
void cmd_train(const RunConfig& cfg, std::ostream& log);
// records.csv and fit_report.json.
void cmd_sweep(const RunConfig& cfg, std::ostream& log);
// attention.csv: one row per (layer, query modality present in the sample).
void cmd_attn_dump(const RunConfig& cfg, const std::string& checkpoint_dir, std::ostream& log);
// Packed layout of an empty-caption H×W image; returns the JSON text and writes pack_<H>x<W>.json.
std::string cmd_pack_debug(const RunConfig& cfg, int height, int width);

// Layout-only sequence for an H×W image (no encoder run).
PackedSequence pack_layout(const ModelConfig& model, int height, int width);

std::string attention_csv(const AttentionStats& stats);

// Full command-line entry point; returns the process exit status.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace navil
