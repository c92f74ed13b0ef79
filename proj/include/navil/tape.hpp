#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "navil/params.hpp"
#include "navil/tensor.hpp"

namespace navil {

// Handle to a value recorded on a GradTape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

// Reverse-mode tape. Each recorded node keeps its forward closure so the
// whole tape can be replayed, and a backward closure that accumulates input
// gradients. Parameter leaves copy their value from a ParameterStore;
// accumulate_param_grads() adds their gradients back into it. Not thread-safe.
class GradTape {
 public:
  using Inputs = std::span<const Tensor* const>;
  using ForwardFn = std::function<Tensor(Inputs)>;
  // gin[i] is null when input i does not require a gradient.
  using BackwardFn = std::function<void(Inputs in, const Tensor& out, const Tensor& gout, std::span<Tensor* const> gin)>;

  Var constant(Tensor value);
  // One leaf per (store, parameter); repeated calls return the same Var.
  Var param(const ParameterStore& store, std::string_view name);
  Var apply(const char* op, std::vector<Var> inputs, ForwardFn forward, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  // Gradient of the last backward() seed w.r.t. v; empty tensor if v received none.
  const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Seeds d(loss)/d(loss) = 1 for a single-element loss and runs the tape in reverse.
  void backward(Var loss);

  // Adds the gradients of this tape's parameter leaves into store.grad.
  void accumulate_param_grads(ParameterStore& store) const;

  // Recomputes every non-leaf node from its inputs; true iff all values are bitwise unchanged.
  bool replay();

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    ForwardFn forward;
    BackwardFn backward;
    const ParameterStore* store = nullptr;
    std::size_t param_index = 0;
  };

  std::vector<const Tensor*> input_values(const Node& n) const;

  std::vector<Node> nodes_;
  std::map<std::pair<const ParameterStore*, std::size_t>, std::size_t> param_nodes_;
};

// Differentiable primitives recorded on a tape.
namespace ag {

Var matmul(GradTape& t, Var a, Var b);
Var add(GradTape& t, Var a, Var b);
// x[rows×n] + bias[n] broadcast over rows.
Var add_bias(GradTape& t, Var x, Var bias);
Var mul(GradTape& t, Var a, Var b);
Var scale(GradTape& t, Var x, double s);
Var silu(GradTape& t, Var x);
Var rmsnorm(GradTape& t, Var x, Var gain, double eps);

// Row i uses weights[route[i]]; all weights share one k×n shape.
Var routed_matmul(GradTape& t, Var x, std::shared_ptr<const std::vector<std::uint8_t>> route,
                  std::vector<Var> weights);

// Rotary embedding with a precomputed [rows × head_dim/2] angle table.
Var rope(GradTape& t, Var x, std::shared_ptr<const std::vector<double>> angles, std::size_t heads);

// Multi-head attention on [seq×width] q, k, v. When probs is non-null it
// receives the heads×seq×seq attention probabilities.
Var attention(GradTape& t, Var q, Var k, Var v, std::size_t heads, bool causal,
              std::shared_ptr<Tensor> probs = nullptr);

// Rows of table[vocab×width] selected by ids.
Var gather_rows(GradTape& t, Var table, std::shared_ptr<const std::vector<int>> ids);

// out.flat[j] = x.flat[index[j]] with the given output shape; index is a bijection or selection.
Var permute(GradTape& t, Var x, std::shared_ptr<const std::vector<std::size_t>> index, Shape out_shape);

Var concat_rows(GradTape& t, std::vector<Var> parts);

// Row i of the result comes from the next unused row of `a` when from_a[i], else from `b`.
Var interleave_rows(GradTape& t, Var a, Var b, std::shared_ptr<const std::vector<std::uint8_t>> from_a);

// Mean cross-entropy over rows with mask[i] != 0; returns shape {1}.
Var cross_entropy(GradTape& t, Var logits, std::shared_ptr<const std::vector<int>> targets,
                  std::shared_ptr<const std::vector<std::uint8_t>> mask);

// Mean of single-element values.
Var mean(GradTape& t, std::vector<Var> scalars);

}  // namespace ag

}  // namespace navil
