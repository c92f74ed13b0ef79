#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "navil/decoder.hpp"
#include "navil/encoder.hpp"
#include "navil/packing.hpp"

namespace navil {

struct PackingConfig {
  double tau = kDefaultTau;
  double area_threshold = kDefaultAreaThreshold;
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  PackingConfig packing;

  void validate() const;
};

// One sample's recorded graph.
struct SampleGraph {
  PackedSequence seq;
  Var logits;
  Var loss;  // invalid when the sequence has no NTP targets
  DecoderTrace trace;
};

// Encoder + connector + MMoE decoder over packed multi-scale sequences.
class NavilModel {
 public:
  explicit NavilModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const VisionEncoder& encoder() const { return encoder_; }
  const MmoeDecoder& decoder() const { return decoder_; }
  const SpecialTokens& special() const { return special_; }

  // Registers every parameter with Normal(0, 0.02) projections, unit gains, zero biases.
  void init_params(ParameterStore& store, Rng& rng) const;
  ParameterStore make_params(std::uint64_t seed) const;

  // image may be empty for a caption-only sample.
  SampleGraph build(GradTape& t, const ParameterStore& store, const Tensor& image, std::span<const int> caption,
                    bool trace = false) const;

  // Concatenated connector outputs for every pyramid scale of `image`.
  Var encode_pyramid(GradTape& t, const ParameterStore& store, const ImagePyramid& pyramid,
                     std::vector<ScaleGrid>& grids) const;

  Tensor logits(const ParameterStore& store, const Tensor& image, std::span<const int> caption) const;

 private:
  ModelConfig cfg_;
  VisionEncoder encoder_;
  MmoeDecoder decoder_;
  SpecialTokens special_;
};

}  // namespace navil
