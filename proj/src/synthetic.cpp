#include "navil/synthetic.hpp"

#include <limits>
#include <stdexcept>
#include <string>

#include "navil/rng.hpp"

namespace navil {

namespace {

constexpr std::array<std::array<double, 3>, kPaletteSize> kPalette = {{
    {0.9, 0.1, 0.1},
    {0.1, 0.8, 0.2},
    {0.1, 0.2, 0.9},
    {0.95, 0.9, 0.1},
    {0.8, 0.2, 0.8},
    {0.1, 0.85, 0.85},
    {0.95, 0.95, 0.95},
    {0.05, 0.05, 0.05},
}};

std::vector<int> random_colors(Rng& rng, const GridSpec& spec) {
  std::vector<int> colors(static_cast<std::size_t>(spec.grid * spec.grid));
  for (auto& c : colors) c = rng.uniform_int(0, spec.colors - 1);
  return colors;
}

std::vector<int> caption_of(const std::vector<int>& colors) {
  std::vector<int> caption;
  for (int c : colors) caption.push_back(c + 1);
  caption.push_back(kCaptionEnd);
  return caption;
}

}  // namespace

void GridSpec::validate() const {
  if (grid < 1) throw std::invalid_argument("data.grid must be >= 1");
  if (colors < 1 || colors > kPaletteSize) {
    throw std::invalid_argument("data.colors must lie in [1, " + std::to_string(kPaletteSize) + "]");
  }
  if (image_size < grid) throw std::invalid_argument("data.image_size must be >= data.grid");
}

std::array<double, 3> palette_color(int k) { return kPalette.at(static_cast<std::size_t>(k)); }

std::vector<SyntheticSample> gen_synthetic(std::uint64_t seed, int n, const GridSpec& spec) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("gen_synthetic: n must be >= 1");
  Rng rng(seed);
  std::vector<SyntheticSample> out;
  const auto s = static_cast<std::size_t>(spec.image_size);
  for (int i = 0; i < n; ++i) {
    const auto colors = random_colors(rng, spec);
    Tensor img({s, s, 3});
    for (std::size_t y = 0; y < s; ++y) {
      const std::size_t by = y * static_cast<std::size_t>(spec.grid) / s;
      for (std::size_t x = 0; x < s; ++x) {
        const std::size_t bx = x * static_cast<std::size_t>(spec.grid) / s;
        const auto rgb = kPalette[static_cast<std::size_t>(colors[by * spec.grid + bx])];
        for (std::size_t c = 0; c < 3; ++c) img[(y * s + x) * 3 + c] = rgb[c];
      }
    }
    out.push_back({std::move(img), caption_of(colors)});
  }
  return out;
}

std::vector<SyntheticSample> gen_text_only(std::uint64_t seed, int n, const GridSpec& spec) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("gen_text_only: n must be >= 1");
  Rng rng(seed);
  std::vector<SyntheticSample> out;
  for (int i = 0; i < n; ++i) out.push_back({Tensor(), caption_of(random_colors(rng, spec))});
  return out;
}

std::vector<int> decode_caption(const Tensor& image, const GridSpec& spec) {
  const auto s = static_cast<std::size_t>(spec.image_size);
  if (image.rank() != 3 || image.dim(0) != s || image.dim(1) != s) {
    throw std::invalid_argument("decode_caption: image does not match grid spec");
  }
  std::vector<int> colors;
  const auto g = static_cast<std::size_t>(spec.grid);
  for (std::size_t by = 0; by < g; ++by) {
    for (std::size_t bx = 0; bx < g; ++bx) {
      const std::size_t y = (2 * by + 1) * s / (2 * g);
      const std::size_t x = (2 * bx + 1) * s / (2 * g);
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int k = 0; k < spec.colors; ++k) {
        double d = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
          const double diff = image[(y * s + x) * 3 + c] - kPalette[static_cast<std::size_t>(k)][c];
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      colors.push_back(best);
    }
  }
  return caption_of(colors);
}

}  // namespace navil
