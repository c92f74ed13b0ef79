#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "navil/tensor.hpp"

namespace navil {

enum class Modality : std::uint8_t { kVisual = 0, kText = 1 };

inline const double kDefaultTau = 0.70710678118654752440;  // √2/2
inline constexpr double kDefaultAreaThreshold = 1024.0;
inline constexpr double kNoThreshold = std::numeric_limits<double>::infinity();

// Reserved ids at the top of the vocabulary.
struct SpecialTokens {
  int begin_of_image = 0;
  int end_of_image = 0;
  int end_of_line = 0;
  int end_of_scale = 0;

  static SpecialTokens for_vocab(int vocab);
  // Ids below this value are ordinary text tokens.
  int first_reserved() const { return begin_of_image; }
  bool is_special(int id) const;
  std::string name_of(int id) const;
};

struct ImagePyramid {
  std::vector<Tensor> scales;  // I_0 (padded original) first
};

// Scale dims for a padded H0×W0 image. Each next scale floors (prev·τ) to a
// multiple of 32 (min 32); a scale is kept while its area is ≥ threshold and
// strictly smaller than the previous one.
std::vector<std::pair<int, int>> pyramid_dims(int height, int width, double tau, double area_threshold);

// Area-weighted mean resampling of an H×W×3 image.
Tensor area_resize(const Tensor& img, int height, int width);

ImagePyramid build_pyramid(const Tensor& img, double tau, double area_threshold);

enum class SlotKind : std::uint8_t { kText, kSpecial, kVisual };

struct Slot {
  SlotKind kind = SlotKind::kText;
  int token = -1;          // vocab id for text/special slots
  int scale = -1;          // visual slots: which scale
  int visual_index = -1;   // visual slots: row in the concatenated connector output
  int row = -1, col = -1;  // visual slots: position on the scale's token grid
};

// Post-shuffle token grid of one scale.
struct ScaleGrid {
  int rows = 0;
  int cols = 0;
};

struct PackedSequence {
  std::vector<Slot> slots;
  std::vector<Modality> modality;
  std::vector<int> positions;       // decoder 1D positions
  std::vector<std::uint8_t> loss;   // 1 where the slot is an NTP target
  std::vector<ScaleGrid> grids;
  int num_visual = 0;

  std::size_t size() const { return slots.size(); }
};

// <boi> [rows of scale 0, each followed by <eol>] <eos> … <eos> <eoi> caption…
PackedSequence assemble_sequence(std::span<const ScaleGrid> grids, std::span<const int> caption,
                                 const SpecialTokens& special);
// Checks each connector output against the pyramid's grid arithmetic first.
PackedSequence assemble_sequence(const ImagePyramid& pyramid, std::span<const Tensor> encoder_outputs,
                                 std::span<const int> caption, const SpecialTokens& special, int patch_stride,
                                 int factor);
// Caption-only sequence (pure language sample).
PackedSequence assemble_text(std::span<const int> tokens);

// Throws std::invalid_argument describing the first layout violation.
void validate_sequence(const PackedSequence& seq, const SpecialTokens& special);

// Length of the visual block (begin_of_image … end_of_image) plus caption_len.
std::size_t expected_token_count(int height, int width, double tau, double area_threshold, int factor,
                                 std::size_t caption_len = 0, int patch_stride = 16);

// One-ahead NTP targets: targets[t] = token at slot t+1, mask[t] = loss[t+1].
void next_token_targets(const PackedSequence& seq, std::vector<int>& targets, std::vector<std::uint8_t>& mask);

// Ids of text/special slots in order.
std::vector<int> text_token_ids(const PackedSequence& seq);

std::string sequence_to_json(const PackedSequence& seq, const SpecialTokens& special);
PackedSequence sequence_from_json(const std::string& text, const SpecialTokens& special);

}  // namespace navil
