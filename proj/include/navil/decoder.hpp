#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "navil/block.hpp"
#include "navil/packing.hpp"
#include "navil/params.hpp"
#include "navil/rng.hpp"
#include "navil/tape.hpp"

namespace navil {

// Two modality groups, one expert each; routing is by token label.
inline constexpr int kNumModalities = 2;

struct DecoderConfig {
  int depth = 4;
  int width = 64;
  int mlp_width = 128;
  int heads = 4;
  int vocab = 32;

  int head_dim() const { return width / heads; }
  void validate() const;
};

std::string decoder_param(int layer, const std::string& what, Modality m);
std::string decoder_param(int layer, const std::string& what);

// Parameters touched by one token's forward pass (one expert path per layer,
// one embedding row, final norm, LM head).
std::size_t activated_params_per_token(const DecoderConfig& cfg);
// Parameters of the routed projections of one modality across all layers.
std::size_t expert_params_per_modality(const DecoderConfig& cfg);

struct DecoderTrace {
  std::vector<std::shared_ptr<Tensor>> attention;  // per layer: heads×seq×seq
  Var hidden;                                      // residual stream before the final norm
};

class MmoeDecoder {
 public:
  explicit MmoeDecoder(DecoderConfig cfg);

  const DecoderConfig& config() const { return cfg_; }
  void init_params(ParameterStore& store, Rng& rng) const;

  BlockWeights layer_weights(GradTape& t, const ParameterStore& store, int layer) const;

  // Text/special slots take vocab embeddings; visual slots take rows of `visual` in order.
  Var embed(GradTape& t, const ParameterStore& store, const PackedSequence& seq, Var visual) const;
  Var layer(GradTape& t, const ParameterStore& store, int layer, Var x, const Route& route, const Angles& angles,
            std::shared_ptr<Tensor> probs = nullptr) const;
  // Embedded sequence → logits [seq×vocab].
  Var forward(GradTape& t, const ParameterStore& store, const PackedSequence& seq, Var embedded,
              DecoderTrace* trace = nullptr) const;

  static Route route_of(std::span<const Modality> mask);
  Angles angles_of(std::span<const int> positions) const;

 private:
  DecoderConfig cfg_;
};

// Tape-free forms. `mask` labels every row of x.
Tensor mmoe_attention(const Tensor& x, std::span<const Modality> mask, std::span<const int> positions,
                      const ParameterStore& params, const DecoderConfig& cfg, int layer, bool causal = true);
Tensor mmoe_ffn(const Tensor& x, std::span<const Modality> mask, const ParameterStore& params,
                const DecoderConfig& cfg, int layer);
Tensor decoder_layer(const Tensor& x, std::span<const Modality> mask, std::span<const int> positions,
                     const ParameterStore& params, const DecoderConfig& cfg, int layer);
// visual: connector rows for the sequence's visual slots (may be empty when there are none).
Tensor decoder_forward(const PackedSequence& seq, const Tensor& visual, const DecoderConfig& cfg,
                       const ParameterStore& params);

// Head-averaged attention aggregated into modality blocks. blocks[l][a][b] is
// the mean over queries of modality a of the attention mass on keys of
// modality b (index 0 visual, 1 text); rows are normalized.
struct AttentionStats {
  std::vector<std::array<std::array<double, 2>, 2>> blocks;
  std::array<bool, 2> present{false, false};
};

AttentionStats aggregate_attention(const std::vector<std::shared_ptr<Tensor>>& per_layer,
                                   std::span<const Modality> mask);
AttentionStats attention_stats(const PackedSequence& seq, const Tensor& visual, const DecoderConfig& cfg,
                               const ParameterStore& params);

}  // namespace navil
