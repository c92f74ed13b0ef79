#pragma once

// Pre-norm transformer block shared by the encoder (one expert, 2D-RoPE,
// bidirectional) and the decoder (two modality experts, 1D-RoPE, causal).

#include <cstdint>
#include <memory>
#include <vector>

#include "navil/tape.hpp"

namespace navil {

using Route = std::shared_ptr<const std::vector<std::uint8_t>>;
using Angles = std::shared_ptr<const std::vector<double>>;

// One entry per expert in every projection list.
struct AttentionWeights {
  std::vector<Var> q, k, v, o;
};

struct FfnWeights {
  std::vector<Var> gate, up, down;
};

struct BlockWeights {
  Var attn_norm;
  Var ffn_norm;
  AttentionWeights attn;
  FfnWeights ffn;
};

// x·W with W chosen per row by `route`. With a single expert this is a plain matmul.
Var expert_project(GradTape& t, Var x, const std::vector<Var>& experts, const Route& route);

// Per-token Q/K/V by expert, RoPE on Q and K, one global multi-head attention,
// per-token output projection by expert.
Var attention_sublayer(GradTape& t, Var x, const AttentionWeights& w, const Route& route, const Angles& angles,
                       std::size_t heads, bool causal, std::shared_ptr<Tensor> probs = nullptr);

// (SiLU(x W_gate) ⊙ x W_up) W_down with per-token expert selection.
Var ffn_sublayer(GradTape& t, Var x, const FfnWeights& w, const Route& route);

// x' = x + Attn(RMSNorm(x)); x'' = x' + FFN(RMSNorm(x')).
Var block_forward(GradTape& t, Var x, const BlockWeights& w, const Route& route, const Angles& angles,
                  std::size_t heads, bool causal, double eps, std::shared_ptr<Tensor> probs = nullptr);

}  // namespace navil
