#include "navil/model.hpp"

#include <algorithm>
#include <memory>

namespace navil {

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (encoder.out_width != decoder.width) {
    throw ShapeError("encoder.out_width (" + std::to_string(encoder.out_width) + ") must equal decoder.width (" +
                     std::to_string(decoder.width) + ")");
  }
  if (!(packing.tau > 0.0 && packing.tau < 1.0)) throw ShapeError("packing.tau must lie in (0, 1)");
  if (!(packing.area_threshold > 0.0)) throw ShapeError("packing.area_threshold must be positive");
}

NavilModel::NavilModel(ModelConfig cfg)
    : cfg_((cfg.validate(), cfg)),
      encoder_(cfg_.encoder),
      decoder_(cfg_.decoder),
      special_(SpecialTokens::for_vocab(cfg_.decoder.vocab)) {}

void NavilModel::init_params(ParameterStore& store, Rng& rng) const {
  encoder_.init_params(store, rng);
  decoder_.init_params(store, rng);
}

ParameterStore NavilModel::make_params(std::uint64_t seed) const {
  ParameterStore store;
  Rng rng(seed, "init");
  init_params(store, rng);
  return store;
}

Var NavilModel::encode_pyramid(GradTape& t, const ParameterStore& store, const ImagePyramid& pyramid,
                               std::vector<ScaleGrid>& grids) const {
  std::vector<Var> parts;
  grids.clear();
  for (const auto& scale : pyramid.scales) {
    ScaleGrid g;
    parts.push_back(encoder_.encode(t, store, scale, g.rows, g.cols));
    grids.push_back(g);
  }
  return parts.size() == 1 ? parts[0] : ag::concat_rows(t, parts);
}

SampleGraph NavilModel::build(GradTape& t, const ParameterStore& store, const Tensor& image,
                              std::span<const int> caption, bool trace) const {
  SampleGraph g;
  Var visual;
  if (image.empty()) {
    g.seq = assemble_text(caption);
  } else {
    const auto pyramid = build_pyramid(image, cfg_.packing.tau, cfg_.packing.area_threshold);
    std::vector<ScaleGrid> grids;
    visual = encode_pyramid(t, store, pyramid, grids);
    g.seq = assemble_sequence(grids, caption, special_);
  }
  Var embedded = decoder_.embed(t, store, g.seq, visual);
  g.logits = decoder_.forward(t, store, g.seq, embedded, trace ? &g.trace : nullptr);
  auto targets = std::make_shared<std::vector<int>>();
  auto mask = std::make_shared<std::vector<std::uint8_t>>();
  next_token_targets(g.seq, *targets, *mask);
  if (std::find(mask->begin(), mask->end(), std::uint8_t{1}) != mask->end()) {
    g.loss = ag::cross_entropy(t, g.logits, targets, mask);
  }
  return g;
}

Tensor NavilModel::logits(const ParameterStore& store, const Tensor& image, std::span<const int> caption) const {
  GradTape t;
  return t.value(build(t, store, image, caption).logits);
}

}  // namespace navil
