#pragma once

#include <span>
#include <string>
#include <vector>

#include "navil/params.hpp"
#include "navil/rng.hpp"
#include "navil/tape.hpp"
#include "navil/tensor.hpp"

namespace navil {

inline constexpr double kNormEps = 1e-6;
inline constexpr double kInitStd = 0.02;
inline constexpr int kPadMultiple = 32;

struct EncoderConfig {
  int depth = 2;
  int width = 32;
  int mlp_width = 85;
  int heads = 2;
  int patch_stride = 16;
  int shuffle_factor = 2;
  int out_width = 64;

  int head_dim() const { return width / heads; }
  // Throws ShapeError naming the offending field.
  void validate() const;
  // Parameters of the transformer layer stack only (no patch embed, no connector).
  std::size_t layer_stack_params() const;
};

// Encoder tokens laid out on the patch grid, row-major.
struct PatchGrid {
  int rows = 0;
  int cols = 0;
  Tensor embeddings;  // [rows·cols × width]
};

// Zero-pads H and W up to the next multiple of 32.
Tensor pad_image(const Tensor& img);

// Flattens each non-overlapping stride×stride×3 patch (row-major, channel
// fastest) into one row: [rows·cols × 3·stride²].
Tensor extract_patches(const Tensor& img, int stride);

// Row-major (row, col) annotations for a grid.
void grid_coordinates(int rows, int cols, std::vector<int>& row_idx, std::vector<int>& col_idx);

// Index map for pixel shuffle on a [rows·cols × width] grid. Applied with
// ag::permute it yields [(rows/f)·(cols/f) × width·f²].
std::vector<std::size_t> pixel_shuffle_index(int rows, int cols, int width, int factor);

// Parameter registration and graph construction for V_{d,w}. All names carry
// the "vision." prefix and live in ParamGroup::kVision.
class VisionEncoder {
 public:
  explicit VisionEncoder(EncoderConfig cfg);

  const EncoderConfig& config() const { return cfg_; }
  void init_params(ParameterStore& store, Rng& rng) const;

  Var embed_patches(GradTape& t, const ParameterStore& store, const Tensor& padded_img) const;
  Var layers(GradTape& t, const ParameterStore& store, Var x, std::span<const int> row_idx,
             std::span<const int> col_idx) const;
  Var shuffle(GradTape& t, Var x, int rows, int cols) const;
  Var connect(GradTape& t, const ParameterStore& store, Var shuffled) const;

  // Full image → connector tokens [(H/(16f))·(W/(16f)) × out_width]; grid dims of the output returned.
  Var encode(GradTape& t, const ParameterStore& store, const Tensor& padded_img, int& out_rows, int& out_cols) const;

 private:
  EncoderConfig cfg_;
};

// Tape-free forms of the encoder stages.
PatchGrid patch_embed(const Tensor& img, const EncoderConfig& cfg, const ParameterStore& params);
PatchGrid encoder_forward(const PatchGrid& grid, const EncoderConfig& cfg, const ParameterStore& params);
// Same as encoder_forward with explicit per-token (row, col) annotations.
Tensor encoder_layers(const Tensor& tokens, std::span<const int> row_idx, std::span<const int> col_idx,
                      const EncoderConfig& cfg, const ParameterStore& params);
PatchGrid pixel_shuffle(const PatchGrid& grid, int factor);
PatchGrid pixel_unshuffle(const PatchGrid& grid, int factor);
Tensor connector(const PatchGrid& grid, const EncoderConfig& cfg, const ParameterStore& params);
// pad → patch_embed → layers → pixel_shuffle → connector.
Tensor encode_image(const Tensor& img, const EncoderConfig& cfg, const ParameterStore& params);

}  // namespace navil
