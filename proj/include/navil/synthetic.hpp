#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "navil/tensor.hpp"

namespace navil {

// g×g grid of solid color blocks on a square image.
struct GridSpec {
  int grid = 2;
  int colors = 4;
  int image_size = 64;

  void validate() const;
  // Ordinary text ids used by captions: end token plus one per color.
  int caption_vocab() const { return colors + 1; }
};

inline constexpr int kCaptionEnd = 0;  // color k is token k + 1

struct SyntheticSample {
  Tensor image;  // empty for caption-only samples
  std::vector<int> caption;
};

inline constexpr int kPaletteSize = 8;
std::array<double, 3> palette_color(int k);

// Colors drawn uniformly per block; caption lists block colors row-major then the end token.
std::vector<SyntheticSample> gen_synthetic(std::uint64_t seed, int n, const GridSpec& spec);
// Caption-only samples with the same caption distribution (pure language data).
std::vector<SyntheticSample> gen_text_only(std::uint64_t seed, int n, const GridSpec& spec);
// Reads each block's center pixel and maps it to the nearest palette entry.
std::vector<int> decode_caption(const Tensor& image, const GridSpec& spec);

}  // namespace navil
