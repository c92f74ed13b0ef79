#include "navil/params.hpp"

namespace navil {

std::string_view group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kVision: return "vision";
    case ParamGroup::kVisualExperts: return "visual_experts";
    case ParamGroup::kTextAttn: return "text_attn";
    case ParamGroup::kTextFfn: return "text_ffn";
    case ParamGroup::kEmbeddings: return "embeddings";
    case ParamGroup::kLmHead: return "lm_head";
    case ParamGroup::kNorms: return "norms";
  }
  return "unknown";
}

std::optional<ParamGroup> parse_group(std::string_view name) {
  for (auto g : kAllGroups) {
    if (group_name(g) == name) return g;
  }
  return std::nullopt;
}

std::size_t ParameterStore::add(std::string name, ParamGroup group, Tensor value, bool decay) {
  if (by_name_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  const std::size_t i = entries_.size();
  by_name_.emplace(name, i);
  Tensor grad(value.shape());
  entries_.push_back(ParamEntry{std::move(name), group, std::move(value), std::move(grad), decay});
  return i;
}

bool ParameterStore::contains(std::string_view name) const { return by_name_.find(name) != by_name_.end(); }

std::size_t ParameterStore::index(std::string_view name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return it->second;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

std::size_t ParameterStore::total_params() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

std::size_t ParameterStore::group_params(ParamGroup g) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.group == g) n += e.value.numel();
  }
  return n;
}

double ParameterStore::group_grad_sq(ParamGroup g) const {
  double s = 0.0;
  for (const auto& e : entries_) {
    if (e.group != g) continue;
    for (double v : e.grad.data()) s += v * v;
  }
  return s;
}

}  // namespace navil
