#include "navil/encoder.hpp"

#include <memory>
#include <string>

#include "navil/block.hpp"
#include "navil/ops.hpp"

namespace navil {

namespace {

std::string layer_name(int i, const char* what) { return "vision.L" + std::to_string(i) + "." + what; }

void require_positive(int v, const char* field) {
  if (v <= 0) throw ShapeError(std::string("encoder.") + field + " must be positive, got " + std::to_string(v));
}

}  // namespace

void EncoderConfig::validate() const {
  if (depth < 0) throw ShapeError("encoder.depth must be >= 0, got " + std::to_string(depth));
  require_positive(width, "width");
  require_positive(mlp_width, "mlp_width");
  require_positive(heads, "heads");
  require_positive(patch_stride, "patch_stride");
  require_positive(shuffle_factor, "shuffle_factor");
  require_positive(out_width, "out_width");
  if (width % heads != 0) throw ShapeError("encoder.width must be divisible by encoder.heads");
  if (head_dim() % 4 != 0) throw ShapeError("encoder head dim (width/heads) must be divisible by 4 for 2D-RoPE");
  if (kPadMultiple % (patch_stride * shuffle_factor) != 0) {
    throw ShapeError("encoder.patch_stride·shuffle_factor must divide 32 so padded images shuffle evenly");
  }
}

std::size_t EncoderConfig::layer_stack_params() const {
  const auto w = static_cast<std::size_t>(width);
  const auto m = static_cast<std::size_t>(mlp_width);
  return static_cast<std::size_t>(depth) * (4 * w * w + 3 * w * m + 2 * w);
}

Tensor pad_image(const Tensor& img) {
  if (img.rank() != 3 || img.dim(2) != 3) throw ShapeError("pad_image: expected H×W×3, got " + shape_str(img.shape()));
  const std::size_t h = img.dim(0), w = img.dim(1);
  const std::size_t ph = (h + kPadMultiple - 1) / kPadMultiple * kPadMultiple;
  const std::size_t pw = (w + kPadMultiple - 1) / kPadMultiple * kPadMultiple;
  if (ph == h && pw == w) return img;
  Tensor out({ph, pw, 3});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out[(y * pw + x) * 3 + c] = img[(y * w + x) * 3 + c];
    }
  }
  return out;
}

Tensor extract_patches(const Tensor& img, int stride) {
  if (img.rank() != 3 || img.dim(2) != 3) throw ShapeError("patch_embed: expected H×W×3 image");
  const auto s = static_cast<std::size_t>(stride);
  const std::size_t h = img.dim(0), w = img.dim(1);
  if (h % s != 0 || w % s != 0) {
    throw ShapeError("patch_embed: image " + shape_str(img.shape()) + " not aligned to stride " +
                     std::to_string(stride));
  }
  const std::size_t rows = h / s, cols = w / s, dim = 3 * s * s;
  Tensor patches({rows * cols, dim});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double* dst = patches.data().data() + (r * cols + c) * dim;
      for (std::size_t dy = 0; dy < s; ++dy) {
        for (std::size_t dx = 0; dx < s; ++dx) {
          const std::size_t src = ((r * s + dy) * w + (c * s + dx)) * 3;
          for (std::size_t ch = 0; ch < 3; ++ch) dst[(dy * s + dx) * 3 + ch] = img[src + ch];
        }
      }
    }
  }
  return patches;
}

void grid_coordinates(int rows, int cols, std::vector<int>& row_idx, std::vector<int>& col_idx) {
  row_idx.clear();
  col_idx.clear();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      row_idx.push_back(r);
      col_idx.push_back(c);
    }
  }
}

std::vector<std::size_t> pixel_shuffle_index(int rows, int cols, int width, int factor) {
  if (factor <= 0 || rows % factor != 0 || cols % factor != 0) {
    throw ShapeError("pixel_shuffle: grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " not divisible by factor " + std::to_string(factor));
  }
  const auto f = static_cast<std::size_t>(factor);
  const auto w = static_cast<std::size_t>(width);
  const std::size_t out_rows = rows / f, out_cols = cols / f;
  std::vector<std::size_t> index;
  index.reserve(static_cast<std::size_t>(rows) * cols * w);
  for (std::size_t r = 0; r < out_rows; ++r) {
    for (std::size_t c = 0; c < out_cols; ++c) {
      for (std::size_t dy = 0; dy < f; ++dy) {
        for (std::size_t dx = 0; dx < f; ++dx) {
          const std::size_t src_tok = (r * f + dy) * static_cast<std::size_t>(cols) + (c * f + dx);
          for (std::size_t ch = 0; ch < w; ++ch) index.push_back(src_tok * w + ch);
        }
      }
    }
  }
  return index;
}

VisionEncoder::VisionEncoder(EncoderConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void VisionEncoder::init_params(ParameterStore& store, Rng& rng) const {
  const auto w = static_cast<std::size_t>(cfg_.width);
  const auto m = static_cast<std::size_t>(cfg_.mlp_width);
  const auto s = static_cast<std::size_t>(cfg_.patch_stride);
  const auto f2 = static_cast<std::size_t>(cfg_.shuffle_factor * cfg_.shuffle_factor);
  const auto out = static_cast<std::size_t>(cfg_.out_width);
  const auto g = ParamGroup::kVision;

  store.add("vision.patch.w", g, rng.normal_tensor({3 * s * s, w}, kInitStd));
  store.add("vision.patch.b", g, Tensor({w}), false);
  for (int i = 0; i < cfg_.depth; ++i) {
    store.add(layer_name(i, "attn_norm"), g, Tensor::filled({w}, 1.0), false);
    for (const char* p : {"q", "k", "v", "o"}) store.add(layer_name(i, p), g, rng.normal_tensor({w, w}, kInitStd));
    store.add(layer_name(i, "ffn_norm"), g, Tensor::filled({w}, 1.0), false);
    store.add(layer_name(i, "gate"), g, rng.normal_tensor({w, m}, kInitStd));
    store.add(layer_name(i, "up"), g, rng.normal_tensor({w, m}, kInitStd));
    store.add(layer_name(i, "down"), g, rng.normal_tensor({m, w}, kInitStd));
  }
  store.add("vision.conn.w1", g, rng.normal_tensor({w * f2, out}, kInitStd));
  store.add("vision.conn.b1", g, Tensor({out}), false);
  store.add("vision.conn.w2", g, rng.normal_tensor({out, out}, kInitStd));
  store.add("vision.conn.b2", g, Tensor({out}), false);
}

Var VisionEncoder::embed_patches(GradTape& t, const ParameterStore& store, const Tensor& padded_img) const {
  Var patches = t.constant(extract_patches(padded_img, cfg_.patch_stride));
  Var y = ag::matmul(t, patches, t.param(store, "vision.patch.w"));
  return ag::add_bias(t, y, t.param(store, "vision.patch.b"));
}

Var VisionEncoder::layers(GradTape& t, const ParameterStore& store, Var x, std::span<const int> row_idx,
                          std::span<const int> col_idx) const {
  if (cfg_.depth == 0) return x;
  if (t.value(x).cols() != static_cast<std::size_t>(cfg_.width)) {
    throw ShapeError("encoder_forward: token width does not match encoder.width");
  }
  auto angles = std::make_shared<const std::vector<double>>(
      rope_angles_2d(row_idx, col_idx, static_cast<std::size_t>(cfg_.head_dim()), kRopeBase));
  for (int i = 0; i < cfg_.depth; ++i) {
    BlockWeights w;
    w.attn_norm = t.param(store, layer_name(i, "attn_norm"));
    w.ffn_norm = t.param(store, layer_name(i, "ffn_norm"));
    w.attn.q = {t.param(store, layer_name(i, "q"))};
    w.attn.k = {t.param(store, layer_name(i, "k"))};
    w.attn.v = {t.param(store, layer_name(i, "v"))};
    w.attn.o = {t.param(store, layer_name(i, "o"))};
    w.ffn.gate = {t.param(store, layer_name(i, "gate"))};
    w.ffn.up = {t.param(store, layer_name(i, "up"))};
    w.ffn.down = {t.param(store, layer_name(i, "down"))};
    x = block_forward(t, x, w, nullptr, angles, static_cast<std::size_t>(cfg_.heads), /*causal=*/false, kNormEps);
  }
  return x;
}

Var VisionEncoder::shuffle(GradTape& t, Var x, int rows, int cols) const {
  const auto width = static_cast<int>(t.value(x).cols());
  const int f = cfg_.shuffle_factor;
  auto index = std::make_shared<const std::vector<std::size_t>>(pixel_shuffle_index(rows, cols, width, f));
  const auto out_tokens = static_cast<std::size_t>((rows / f) * (cols / f));
  return ag::permute(t, x, index, {out_tokens, static_cast<std::size_t>(width * f * f)});
}

Var VisionEncoder::connect(GradTape& t, const ParameterStore& store, Var shuffled) const {
  Var h = ag::add_bias(t, ag::matmul(t, shuffled, t.param(store, "vision.conn.w1")), t.param(store, "vision.conn.b1"));
  h = ag::silu(t, h);
  return ag::add_bias(t, ag::matmul(t, h, t.param(store, "vision.conn.w2")), t.param(store, "vision.conn.b2"));
}

Var VisionEncoder::encode(GradTape& t, const ParameterStore& store, const Tensor& padded_img, int& out_rows,
                          int& out_cols) const {
  const int rows = static_cast<int>(padded_img.dim(0)) / cfg_.patch_stride;
  const int cols = static_cast<int>(padded_img.dim(1)) / cfg_.patch_stride;
  std::vector<int> ri, ci;
  grid_coordinates(rows, cols, ri, ci);
  Var x = embed_patches(t, store, padded_img);
  x = layers(t, store, x, ri, ci);
  x = shuffle(t, x, rows, cols);
  out_rows = rows / cfg_.shuffle_factor;
  out_cols = cols / cfg_.shuffle_factor;
  return connect(t, store, x);
}

PatchGrid patch_embed(const Tensor& img, const EncoderConfig& cfg, const ParameterStore& params) {
  VisionEncoder enc(cfg);
  GradTape t;
  Var y = enc.embed_patches(t, params, img);
  return {static_cast<int>(img.dim(0)) / cfg.patch_stride, static_cast<int>(img.dim(1)) / cfg.patch_stride,
          t.value(y)};
}

Tensor encoder_layers(const Tensor& tokens, std::span<const int> row_idx, std::span<const int> col_idx,
                      const EncoderConfig& cfg, const ParameterStore& params) {
  if (row_idx.size() != tokens.rows() || col_idx.size() != tokens.rows()) {
    throw ShapeError("encoder_forward: one (row, col) annotation per token required");
  }
  VisionEncoder enc(cfg);
  GradTape t;
  Var y = enc.layers(t, params, t.constant(tokens), row_idx, col_idx);
  return t.value(y);
}

PatchGrid encoder_forward(const PatchGrid& grid, const EncoderConfig& cfg, const ParameterStore& params) {
  if (grid.embeddings.rows() != static_cast<std::size_t>(grid.rows * grid.cols)) {
    throw ShapeError("encoder_forward: grid dims do not match embedding rows");
  }
  std::vector<int> ri, ci;
  grid_coordinates(grid.rows, grid.cols, ri, ci);
  return {grid.rows, grid.cols, encoder_layers(grid.embeddings, ri, ci, cfg, params)};
}

PatchGrid pixel_shuffle(const PatchGrid& grid, int factor) {
  const auto width = static_cast<int>(grid.embeddings.cols());
  const auto index = pixel_shuffle_index(grid.rows, grid.cols, width, factor);
  Tensor out({static_cast<std::size_t>((grid.rows / factor) * (grid.cols / factor)),
              static_cast<std::size_t>(width * factor * factor)});
  for (std::size_t j = 0; j < index.size(); ++j) out[j] = grid.embeddings[index[j]];
  return {grid.rows / factor, grid.cols / factor, std::move(out)};
}

PatchGrid pixel_unshuffle(const PatchGrid& grid, int factor) {
  const auto f2 = static_cast<std::size_t>(factor * factor);
  if (grid.embeddings.cols() % f2 != 0) throw ShapeError("pixel_unshuffle: width not divisible by factor²");
  const auto width = static_cast<int>(grid.embeddings.cols() / f2);
  const int rows = grid.rows * factor, cols = grid.cols * factor;
  const auto index = pixel_shuffle_index(rows, cols, width, factor);
  Tensor out({static_cast<std::size_t>(rows * cols), static_cast<std::size_t>(width)});
  for (std::size_t j = 0; j < index.size(); ++j) out[index[j]] = grid.embeddings[j];
  return {rows, cols, std::move(out)};
}

Tensor connector(const PatchGrid& grid, const EncoderConfig& cfg, const ParameterStore& params) {
  const auto expected = static_cast<std::size_t>(cfg.width * cfg.shuffle_factor * cfg.shuffle_factor);
  if (grid.embeddings.cols() != expected) {
    throw ShapeError("connector: input width " + std::to_string(grid.embeddings.cols()) + " != " +
                     std::to_string(expected));
  }
  VisionEncoder enc(cfg);
  GradTape t;
  return t.value(enc.connect(t, params, t.constant(grid.embeddings)));
}

Tensor encode_image(const Tensor& img, const EncoderConfig& cfg, const ParameterStore& params) {
  VisionEncoder enc(cfg);
  GradTape t;
  int r = 0, c = 0;
  return t.value(enc.encode(t, params, pad_image(img), r, c));
}

}  // namespace navil
