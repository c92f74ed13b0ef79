#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "navil/tensor.hpp"

namespace navil {

// Training groups. Together they partition every model parameter.
enum class ParamGroup {
  kVision,         // patch embedding, encoder layers, connector
  kVisualExperts,  // visual attention + FFN experts in the decoder
  kTextAttn,       // linguistic W_{Q,K,V,O}
  kTextFfn,        // linguistic gate/up/down
  kEmbeddings,
  kLmHead,
  kNorms,          // decoder RMSNorm gains
};

inline constexpr std::array<ParamGroup, 7> kAllGroups = {
    ParamGroup::kVision,     ParamGroup::kVisualExperts, ParamGroup::kTextAttn, ParamGroup::kTextFfn,
    ParamGroup::kEmbeddings, ParamGroup::kLmHead,        ParamGroup::kNorms,
};

std::string_view group_name(ParamGroup g);
std::optional<ParamGroup> parse_group(std::string_view name);

struct ParamEntry {
  std::string name;
  ParamGroup group;
  Tensor value;
  Tensor grad;
  bool decay = true;  // false for norm gains and biases
};

class ParameterStore {
 public:
  std::size_t add(std::string name, ParamGroup group, Tensor value, bool decay = true);

  bool contains(std::string_view name) const;
  std::size_t index(std::string_view name) const;
  ParamEntry& at(std::size_t i) { return entries_.at(i); }
  const ParamEntry& at(std::size_t i) const { return entries_.at(i); }
  ParamEntry& get(std::string_view name) { return entries_.at(index(name)); }
  const ParamEntry& get(std::string_view name) const { return entries_.at(index(name)); }

  std::vector<ParamEntry>& entries() { return entries_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  bool trainable(ParamGroup g) const { return trainable_[static_cast<std::size_t>(g)]; }
  void set_trainable(ParamGroup g, bool on) { trainable_[static_cast<std::size_t>(g)] = on; }
  void set_all_trainable(bool on) { trainable_.fill(on); }

  void zero_grad();
  std::size_t total_params() const;
  std::size_t group_params(ParamGroup g) const;
  // Sum of squared gradient entries over one group.
  double group_grad_sq(ParamGroup g) const;

 private:
  std::vector<ParamEntry> entries_;
  std::map<std::string, std::size_t, std::less<>> by_name_;
  std::array<bool, kAllGroups.size()> trainable_{true, true, true, true, true, true, true};
};

}  // namespace navil
