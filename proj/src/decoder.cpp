#include "navil/decoder.hpp"

#include <string>

#include "navil/encoder.hpp"
#include "navil/ops.hpp"

namespace navil {

namespace {

const char* modality_suffix(Modality m) { return m == Modality::kVisual ? "visual" : "text"; }

constexpr std::array<Modality, 2> kModalities = {Modality::kVisual, Modality::kText};

void require_positive(int v, const char* field) {
  if (v <= 0) throw ShapeError(std::string("decoder.") + field + " must be positive, got " + std::to_string(v));
}

}  // namespace

void DecoderConfig::validate() const {
  if (depth < 0) throw ShapeError("decoder.depth must be >= 0, got " + std::to_string(depth));
  require_positive(width, "width");
  require_positive(mlp_width, "mlp_width");
  require_positive(heads, "heads");
  require_positive(vocab, "vocab");
  if (width % heads != 0) throw ShapeError("decoder.width must be divisible by decoder.heads");
  if (head_dim() % 2 != 0) throw ShapeError("decoder head dim (width/heads) must be even for 1D-RoPE");
  if (vocab < 5) throw ShapeError("decoder.vocab must leave room for the 4 reserved special tokens");
}

std::string decoder_param(int layer, const std::string& what, Modality m) {
  return "dec.L" + std::to_string(layer) + "." + what + "." + modality_suffix(m);
}

std::string decoder_param(int layer, const std::string& what) { return "dec.L" + std::to_string(layer) + "." + what; }

std::size_t expert_params_per_modality(const DecoderConfig& cfg) {
  const auto w = static_cast<std::size_t>(cfg.width);
  const auto m = static_cast<std::size_t>(cfg.mlp_width);
  return static_cast<std::size_t>(cfg.depth) * (4 * w * w + 3 * w * m);
}

std::size_t activated_params_per_token(const DecoderConfig& cfg) {
  const auto w = static_cast<std::size_t>(cfg.width);
  const auto v = static_cast<std::size_t>(cfg.vocab);
  // one expert set + two norm gains per layer, embedding row, final norm, head
  return expert_params_per_modality(cfg) + static_cast<std::size_t>(cfg.depth) * 2 * w + w + w + w * v;
}

MmoeDecoder::MmoeDecoder(DecoderConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void MmoeDecoder::init_params(ParameterStore& store, Rng& rng) const {
  const auto w = static_cast<std::size_t>(cfg_.width);
  const auto m = static_cast<std::size_t>(cfg_.mlp_width);
  const auto v = static_cast<std::size_t>(cfg_.vocab);
  store.add("dec.embed", ParamGroup::kEmbeddings, rng.normal_tensor({v, w}, kInitStd));
  for (int i = 0; i < cfg_.depth; ++i) {
    store.add(decoder_param(i, "attn_norm"), ParamGroup::kNorms, Tensor::filled({w}, 1.0), false);
    store.add(decoder_param(i, "ffn_norm"), ParamGroup::kNorms, Tensor::filled({w}, 1.0), false);
    for (Modality mod : kModalities) {
      const bool vis = mod == Modality::kVisual;
      const auto attn_group = vis ? ParamGroup::kVisualExperts : ParamGroup::kTextAttn;
      const auto ffn_group = vis ? ParamGroup::kVisualExperts : ParamGroup::kTextFfn;
      for (const char* p : {"attn.q", "attn.k", "attn.v", "attn.o"}) {
        store.add(decoder_param(i, p, mod), attn_group, rng.normal_tensor({w, w}, kInitStd));
      }
      store.add(decoder_param(i, "ffn.gate", mod), ffn_group, rng.normal_tensor({w, m}, kInitStd));
      store.add(decoder_param(i, "ffn.up", mod), ffn_group, rng.normal_tensor({w, m}, kInitStd));
      store.add(decoder_param(i, "ffn.down", mod), ffn_group, rng.normal_tensor({m, w}, kInitStd));
    }
  }
  store.add("dec.final_norm", ParamGroup::kNorms, Tensor::filled({w}, 1.0), false);
  store.add("dec.head", ParamGroup::kLmHead, rng.normal_tensor({w, v}, kInitStd));
}

BlockWeights MmoeDecoder::layer_weights(GradTape& t, const ParameterStore& store, int layer) const {
  BlockWeights w;
  w.attn_norm = t.param(store, decoder_param(layer, "attn_norm"));
  w.ffn_norm = t.param(store, decoder_param(layer, "ffn_norm"));
  // Expert order matches the route encoding: index 0 visual, 1 text.
  for (Modality mod : kModalities) {
    w.attn.q.push_back(t.param(store, decoder_param(layer, "attn.q", mod)));
    w.attn.k.push_back(t.param(store, decoder_param(layer, "attn.k", mod)));
    w.attn.v.push_back(t.param(store, decoder_param(layer, "attn.v", mod)));
    w.attn.o.push_back(t.param(store, decoder_param(layer, "attn.o", mod)));
    w.ffn.gate.push_back(t.param(store, decoder_param(layer, "ffn.gate", mod)));
    w.ffn.up.push_back(t.param(store, decoder_param(layer, "ffn.up", mod)));
    w.ffn.down.push_back(t.param(store, decoder_param(layer, "ffn.down", mod)));
  }
  return w;
}

Route MmoeDecoder::route_of(std::span<const Modality> mask) {
  auto r = std::make_shared<std::vector<std::uint8_t>>(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) (*r)[i] = static_cast<std::uint8_t>(mask[i]);
  return r;
}

Angles MmoeDecoder::angles_of(std::span<const int> positions) const {
  return std::make_shared<const std::vector<double>>(
      rope_angles_1d(positions, static_cast<std::size_t>(cfg_.head_dim()), kRopeBase));
}

Var MmoeDecoder::embed(GradTape& t, const ParameterStore& store, const PackedSequence& seq, Var visual) const {
  auto ids = std::make_shared<const std::vector<int>>(text_token_ids(seq));
  for (int id : *ids) {
    if (id < 0 || id >= cfg_.vocab) throw ShapeError("decoder_forward: token id outside the vocabulary");
  }
  if (seq.num_visual == 0) return ag::gather_rows(t, t.param(store, "dec.embed"), ids);
  if (!visual.valid() || t.value(visual).rows() != static_cast<std::size_t>(seq.num_visual)) {
    throw ShapeError("decoder_forward: visual embeddings do not match the sequence's visual slots");
  }
  if (t.value(visual).cols() != static_cast<std::size_t>(cfg_.width)) {
    throw ShapeError("decoder_forward: connector width " + std::to_string(t.value(visual).cols()) +
                     " != decoder.width " + std::to_string(cfg_.width));
  }
  auto from_visual = std::make_shared<std::vector<std::uint8_t>>(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) (*from_visual)[i] = seq.slots[i].kind == SlotKind::kVisual;
  if (ids->empty()) return visual;
  Var text = ag::gather_rows(t, t.param(store, "dec.embed"), ids);
  return ag::interleave_rows(t, visual, text, from_visual);
}

Var MmoeDecoder::layer(GradTape& t, const ParameterStore& store, int layer, Var x, const Route& route,
                       const Angles& angles, std::shared_ptr<Tensor> probs) const {
  return block_forward(t, x, layer_weights(t, store, layer), route, angles, static_cast<std::size_t>(cfg_.heads),
                       /*causal=*/true, kNormEps, std::move(probs));
}

Var MmoeDecoder::forward(GradTape& t, const ParameterStore& store, const PackedSequence& seq, Var embedded,
                         DecoderTrace* trace) const {
  if (t.value(embedded).rows() != seq.size() || t.value(embedded).cols() != static_cast<std::size_t>(cfg_.width)) {
    throw ShapeError("decoder_forward: embedded sequence shape does not match sequence/width");
  }
  const Route route = route_of(seq.modality);
  const Angles angles = angles_of(seq.positions);
  Var x = embedded;
  for (int i = 0; i < cfg_.depth; ++i) {
    std::shared_ptr<Tensor> probs;
    if (trace) {
      probs = std::make_shared<Tensor>();
      trace->attention.push_back(probs);
    }
    x = layer(t, store, i, x, route, angles, probs);
  }
  if (trace) trace->hidden = x;
  Var h = ag::rmsnorm(t, x, t.param(store, "dec.final_norm"), kNormEps);
  return ag::matmul(t, h, t.param(store, "dec.head"));
}

namespace {

void check_mask(const Tensor& x, std::span<const Modality> mask, std::span<const int> positions) {
  if (mask.size() != x.rows()) throw ShapeError("modality mask length does not match sequence length");
  if (positions.size() != x.rows()) throw ShapeError("position list length does not match sequence length");
}

}  // namespace

Tensor mmoe_attention(const Tensor& x, std::span<const Modality> mask, std::span<const int> positions,
                      const ParameterStore& params, const DecoderConfig& cfg, int layer, bool causal) {
  check_mask(x, mask, positions);
  MmoeDecoder dec(cfg);
  GradTape t;
  auto w = dec.layer_weights(t, params, layer);
  Var y = attention_sublayer(t, t.constant(x), w.attn, MmoeDecoder::route_of(mask), dec.angles_of(positions),
                             static_cast<std::size_t>(cfg.heads), causal);
  return t.value(y);
}

Tensor mmoe_ffn(const Tensor& x, std::span<const Modality> mask, const ParameterStore& params,
                const DecoderConfig& cfg, int layer) {
  if (mask.size() != x.rows()) throw ShapeError("modality mask length does not match sequence length");
  MmoeDecoder dec(cfg);
  GradTape t;
  auto w = dec.layer_weights(t, params, layer);
  return t.value(ffn_sublayer(t, t.constant(x), w.ffn, MmoeDecoder::route_of(mask)));
}

Tensor decoder_layer(const Tensor& x, std::span<const Modality> mask, std::span<const int> positions,
                     const ParameterStore& params, const DecoderConfig& cfg, int layer) {
  check_mask(x, mask, positions);
  MmoeDecoder dec(cfg);
  GradTape t;
  return t.value(dec.layer(t, params, layer, t.constant(x), MmoeDecoder::route_of(mask), dec.angles_of(positions)));
}

Tensor decoder_forward(const PackedSequence& seq, const Tensor& visual, const DecoderConfig& cfg,
                       const ParameterStore& params) {
  MmoeDecoder dec(cfg);
  GradTape t;
  Var vis = visual.empty() ? Var{} : t.constant(visual);
  return t.value(dec.forward(t, params, seq, dec.embed(t, params, seq, vis)));
}

AttentionStats aggregate_attention(const std::vector<std::shared_ptr<Tensor>>& per_layer,
                                   std::span<const Modality> mask) {
  AttentionStats stats;
  const std::size_t n = mask.size();
  std::array<double, 2> count{0.0, 0.0};
  for (auto m : mask) count[static_cast<std::size_t>(m)] += 1.0;
  stats.present = {count[0] > 0.0, count[1] > 0.0};
  for (const auto& probs : per_layer) {
    if (probs->rank() != 3 || probs->dim(1) != n || probs->dim(2) != n) {
      throw ShapeError("attention_stats: probability tensor does not match the modality mask");
    }
    const std::size_t heads = probs->dim(0);
    std::array<std::array<double, 2>, 2> block{};
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = static_cast<std::size_t>(mask[i]);
      for (std::size_t j = 0; j < n; ++j) {
        double p = 0.0;
        for (std::size_t h = 0; h < heads; ++h) p += (*probs)[(h * n + i) * n + j];
        block[a][static_cast<std::size_t>(mask[j])] += p / static_cast<double>(heads);
      }
    }
    for (std::size_t a = 0; a < 2; ++a) {
      const double total = block[a][0] + block[a][1];
      if (total > 0.0) {
        block[a][0] /= total;
        block[a][1] /= total;
      }
    }
    stats.blocks.push_back(block);
  }
  return stats;
}

AttentionStats attention_stats(const PackedSequence& seq, const Tensor& visual, const DecoderConfig& cfg,
                               const ParameterStore& params) {
  MmoeDecoder dec(cfg);
  GradTape t;
  Var vis = visual.empty() ? Var{} : t.constant(visual);
  DecoderTrace trace;
  dec.forward(t, params, seq, dec.embed(t, params, seq, vis), &trace);
  return aggregate_attention(trace.attention, seq.modality);
}

}  // namespace navil
