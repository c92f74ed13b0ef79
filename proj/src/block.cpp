#include "navil/block.hpp"

namespace navil {

Var expert_project(GradTape& t, Var x, const std::vector<Var>& experts, const Route& route) {
  if (experts.size() == 1) return ag::matmul(t, x, experts[0]);
  return ag::routed_matmul(t, x, route, experts);
}

Var attention_sublayer(GradTape& t, Var x, const AttentionWeights& w, const Route& route, const Angles& angles,
                       std::size_t heads, bool causal, std::shared_ptr<Tensor> probs) {
  Var q = expert_project(t, x, w.q, route);
  Var k = expert_project(t, x, w.k, route);
  Var v = expert_project(t, x, w.v, route);
  q = ag::rope(t, q, angles, heads);
  k = ag::rope(t, k, angles, heads);
  Var mixed = ag::attention(t, q, k, v, heads, causal, std::move(probs));
  return expert_project(t, mixed, w.o, route);
}

Var ffn_sublayer(GradTape& t, Var x, const FfnWeights& w, const Route& route) {
  Var gate = ag::silu(t, expert_project(t, x, w.gate, route));
  Var up = expert_project(t, x, w.up, route);
  return expert_project(t, ag::mul(t, gate, up), w.down, route);
}

Var block_forward(GradTape& t, Var x, const BlockWeights& w, const Route& route, const Angles& angles,
                  std::size_t heads, bool causal, double eps, std::shared_ptr<Tensor> probs) {
  Var h = ag::add(t, x, attention_sublayer(t, ag::rmsnorm(t, x, w.attn_norm, eps), w.attn, route, angles, heads,
                                           causal, std::move(probs)));
  return ag::add(t, h, ffn_sublayer(t, ag::rmsnorm(t, h, w.ffn_norm, eps), w.ffn, route));
}

}  // namespace navil
