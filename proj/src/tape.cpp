#include "navil/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "navil/kernels.hpp"
#include "navil/ops.hpp"

namespace navil {

Var GradTape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var GradTape::param(const ParameterStore& store, std::string_view name) {
  const std::size_t idx = store.index(name);
  const auto key = std::make_pair(&store, idx);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return Var{it->second};
  Node n;
  n.op = "param";
  n.value = store.at(idx).value;
  n.requires_grad = true;
  n.store = &store;
  n.param_index = idx;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(key, nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

std::vector<const Tensor*> GradTape::input_values(const Node& n) const {
  std::vector<const Tensor*> in;
  in.reserve(n.inputs.size());
  for (auto i : n.inputs) in.push_back(&nodes_[i].value);
  return in;
}

Var GradTape::apply(const char* op, std::vector<Var> inputs, ForwardFn forward, BackwardFn backward) {
  Node n;
  n.op = op;
  for (const auto& v : inputs) {
    if (!v.valid() || v.id >= nodes_.size()) throw std::invalid_argument(std::string(op) + ": invalid input");
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  auto in = input_values(n);
  n.value = forward(in);
  require_finite(n.value, op);
  n.forward = std::move(forward);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

void GradTape::backward(Var loss) {
  Node& root = nodes_.at(loss.id);
  if (root.value.numel() != 1) throw ShapeError("backward: loss must have a single element");
  for (auto& n : nodes_) n.grad = Tensor();
  if (!root.requires_grad) return;
  root.grad = Tensor::filled(root.value.shape(), 1.0);

  for (std::size_t id = nodes_.size(); id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.backward) continue;
    auto in = input_values(n);
    std::vector<Tensor*> gin(n.inputs.size(), nullptr);
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      Node& src = nodes_[n.inputs[i]];
      if (!src.requires_grad) continue;
      if (src.grad.empty()) src.grad = Tensor(src.value.shape());
      gin[i] = &src.grad;
    }
    n.backward(in, n.value, n.grad, gin);
  }
}

void GradTape::accumulate_param_grads(ParameterStore& store) const {
  for (const auto& n : nodes_) {
    if (n.store != &store || n.grad.empty()) continue;
    auto& g = store.at(n.param_index).grad;
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
  }
}

bool GradTape::replay() {
  bool same = true;
  for (auto& n : nodes_) {
    if (!n.forward) continue;
    auto in = input_values(n);
    Tensor v = n.forward(in);
    if (v.shape() != n.value.shape() ||
        std::memcmp(v.data().data(), n.value.data().data(), v.numel() * sizeof(double)) != 0) {
      same = false;
    }
    n.value = std::move(v);
  }
  return same;
}

namespace ag {

namespace {

using Inputs = GradTape::Inputs;
using Grads = std::span<Tensor* const>;

void accumulate(Tensor* dst, const Tensor& src) {
  if (dst == nullptr) return;
  for (std::size_t i = 0; i < src.numel(); ++i) (*dst)[i] += src[i];
}

}  // namespace

Var matmul(GradTape& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  require_matrix(av, "ag::matmul");
  require_matrix(bv, "ag::matmul");
  if (av.dim(1) != bv.dim(0)) {
    throw ShapeError("ag::matmul: inner extents differ " + shape_str(av.shape()) + " · " + shape_str(bv.shape()));
  }
  return t.apply(
      "matmul", {a, b}, [](Inputs in) { return navil::matmul(*in[0], *in[1]); },
      [](Inputs in, const Tensor&, const Tensor& g, Grads gin) {
        const Tensor& x = *in[0];
        const Tensor& w = *in[1];
        const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
        if (gin[0]) kernels::matmul_nt_acc(g.data(), w.data(), gin[0]->data(), {m, n, k});
        if (gin[1]) kernels::matmul_tn_acc(x.data(), g.data(), gin[1]->data(), {k, m, n});
      });
}

Var add(GradTape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "ag::add");
  return t.apply(
      "add", {a, b},
      [](Inputs in) {
        Tensor y = *in[0];
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] += (*in[1])[i];
        return y;
      },
      [](Inputs, const Tensor&, const Tensor& g, Grads gin) {
        accumulate(gin[0], g);
        accumulate(gin[1], g);
      });
}

Var add_bias(GradTape& t, Var x, Var bias) {
  const auto& xv = t.value(x);
  const auto& bv = t.value(bias);
  if (bv.numel() != xv.cols()) throw ShapeError("ag::add_bias: bias length does not match width");
  return t.apply(
      "add_bias", {x, bias},
      [](Inputs in) {
        Tensor y = *in[0];
        const std::size_t n = y.cols();
        for (std::size_t r = 0; r < y.rows(); ++r) {
          for (std::size_t j = 0; j < n; ++j) y[r * n + j] += (*in[1])[j];
        }
        return y;
      },
      [](Inputs, const Tensor&, const Tensor& g, Grads gin) {
        accumulate(gin[0], g);
        if (gin[1]) {
          const std::size_t n = g.cols();
          for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t j = 0; j < n; ++j) (*gin[1])[j] += g[r * n + j];
          }
        }
      });
}

Var mul(GradTape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "ag::mul");
  return t.apply(
      "mul", {a, b},
      [](Inputs in) {
        Tensor y = *in[0];
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= (*in[1])[i];
        return y;
      },
      [](Inputs in, const Tensor&, const Tensor& g, Grads gin) {
        for (std::size_t i = 0; i < g.numel(); ++i) {
          if (gin[0]) (*gin[0])[i] += g[i] * (*in[1])[i];
          if (gin[1]) (*gin[1])[i] += g[i] * (*in[0])[i];
        }
      });
}

Var scale(GradTape& t, Var x, double s) {
  return t.apply(
      "scale", {x},
      [s](Inputs in) {
        Tensor y = *in[0];
        for (auto& v : y.vec()) v *= s;
        return y;
      },
      [s](Inputs, const Tensor&, const Tensor& g, Grads gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < g.numel(); ++i) (*gin[0])[i] += g[i] * s;
      });
}

Var silu(GradTape& t, Var x) {
  return t.apply(
      "silu", {x}, [](Inputs in) { return navil::silu(*in[0]); },
      [](Inputs in, const Tensor&, const Tensor& g, Grads gin) {
        if (!gin[0]) return;
        const Tensor& xv = *in[0];
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const double s = sigmoid(xv[i]);
          (*gin[0])[i] += g[i] * (s + xv[i] * s * (1.0 - s));
        }
      });
}

Var rmsnorm(GradTape& t, Var x, Var gain, double eps) {
  const auto& xv = t.value(x);
  const auto& gv = t.value(gain);
  if (gv.numel() != xv.cols()) throw ShapeError("ag::rmsnorm: gain length does not match width");
  return t.apply(
      "rmsnorm", {x, gain}, [eps](Inputs in) { return navil::rmsnorm(*in[0], *in[1], eps); },
      [eps](Inputs in, const Tensor&, const Tensor& g, Grads gin) {
        const Tensor& xv = *in[0];
        std::span<double> gx = gin[0] ? gin[0]->data() : std::span<double>();
        std::span<double> gg = gin[1] ? gin[1]->data() : std::span<double>();
        kernels::rmsnorm_backward(xv.data(), in[1]->data(), eps, g.data(), gx, gg, xv.rows(), xv.cols());
      });
}

Var routed_matmul(GradTape& t, Var x, std::shared_ptr<const std::vector<std::uint8_t>> route,
                  std::vector<Var> weights) {
  const auto& xv = t.value(x);
  require_matrix(xv, "ag::routed_matmul");
  if (route->size() != xv.dim(0)) throw ShapeError("ag::routed_matmul: route length does not match rows");
  if (weights.empty()) throw ShapeError("ag::routed_matmul: no weights");
  const Shape wshape = t.value(weights[0]).shape();
  for (const auto& w : weights) {
    if (t.value(w).shape() != wshape) throw ShapeError("ag::routed_matmul: expert shapes differ");
  }
  if (wshape.size() != 2 || wshape[0] != xv.dim(1)) throw ShapeError("ag::routed_matmul: weight/input mismatch");
  for (auto r : *route) {
    if (r >= weights.size()) throw ShapeError("ag::routed_matmul: route names a missing expert");
  }
  std::vector<Var> inputs{x};
  inputs.insert(inputs.end(), weights.begin(), weights.end());
  const std::size_t experts = weights.size();
  return t.apply(
      "routed_matmul", std::move(inputs),
      [route, experts](Inputs in) {
        const Tensor& xv = *in[0];
        const std::size_t m = xv.dim(0), k = xv.dim(1), n = in[1]->dim(1);
        std::vector<const double*> w(experts);
        for (std::size_t e = 0; e < experts; ++e) w[e] = in[1 + e]->data().data();
        Tensor y({m, n});
        kernels::routed_matmul(xv.data(), *route, w, y.data(), {m, k, n});
        return y;
      },
      [route, experts](Inputs in, const Tensor&, const Tensor& g, Grads gin) {
        const Tensor& xv = *in[0];
        const std::size_t m = xv.dim(0), k = xv.dim(1), n = in[1]->dim(1);
        if (gin[0]) {
          std::vector<const double*> w(experts);
          for (std::size_t e = 0; e < experts; ++e) w[e] = in[1 + e]->data().data();
          kernels::routed_matmul_grad_x(g.data(), *route, w, gin[0]->data(), {m, k, n});
        }
        std::vector<double*> gw(experts, nullptr);
        bool any = false;
        for (std::size_t e = 0; e < experts; ++e) {
          if (gin[1 + e]) {
            gw[e] = gin[1 + e]->data().data();
            any = true;
          }
        }
        if (any) kernels::routed_matmul_grad_w(xv.data(), *route, g.data(), gw, {m, k, n});
      });
}

Var rope(GradTape& t, Var x, std::shared_ptr<const std::vector<double>> angles, std::size_t heads) {
  const auto& xv = t.value(x);
  require_matrix(xv, "ag::rope");
  if (heads == 0 || xv.dim(1) % heads != 0) throw ShapeError("ag::rope: width not divisible by heads");
  const std::size_t hd = xv.dim(1) / heads;
  if (hd % 2 != 0) throw ShapeError("ag::rope: head dim must be even");
  if (angles->size() != xv.dim(0) * (hd / 2)) throw ShapeError("ag::rope: angle table does not match input");
  return t.apply(
      "rope", {x},
      [angles, heads, hd](Inputs in) {
        Tensor y(in[0]->shape());
        kernels::rope_rotate(in[0]->data(), *angles, y.data(), in[0]->dim(0), heads, hd, 1.0);
        return y;
      },
      [angles, heads, hd](Inputs, const Tensor&, const Tensor& g, Grads gin) {
        if (!gin[0]) return;
        Tensor back(g.shape());
        kernels::rope_rotate(g.data(), *angles, back.data(), g.dim(0), heads, hd, -1.0);
        accumulate(gin[0], back);
      });
}

Var attention(GradTape& t, Var q, Var k, Var v, std::size_t heads, bool causal, std::shared_ptr<Tensor> probs) {
  const auto& qv = t.value(q);
  require_matrix(qv, "ag::attention");
  require_same_shape(qv, t.value(k), "ag::attention");
  require_same_shape(qv, t.value(v), "ag::attention");
  if (heads == 0 || qv.dim(1) % heads != 0) throw ShapeError("ag::attention: width not divisible by heads");
  const std::size_t seq = qv.dim(0);
  const kernels::AttentionDims dims{seq, qv.dim(1), heads};
  auto saved = std::make_shared<Tensor>(Shape{heads, seq, seq});
  return t.apply(
      "attention", {q, k, v},
      [dims, causal, saved, probs](Inputs in) {
        Tensor out(in[0]->shape());
        kernels::attention_forward(in[0]->data(), in[1]->data(), in[2]->data(), out.data(), saved->data(), dims,
                                   causal);
        if (probs) *probs = *saved;
        return out;
      },
      [dims, causal, saved](Inputs in, const Tensor&, const Tensor& g, Grads gin) {
        auto span_of = [](Tensor* p) { return p ? p->data() : std::span<double>(); };
        kernels::attention_backward(in[0]->data(), in[1]->data(), in[2]->data(), saved->data(), g.data(),
                                    span_of(gin[0]), span_of(gin[1]), span_of(gin[2]), dims, causal);
      });
}

Var gather_rows(GradTape& t, Var table, std::shared_ptr<const std::vector<int>> ids) {
  const auto& tv = t.value(table);
  require_matrix(tv, "ag::gather_rows");
  if (ids->empty()) throw ShapeError("ag::gather_rows: no ids");
  for (int id : *ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tv.dim(0)) {
      throw ShapeError("ag::gather_rows: id " + std::to_string(id) + " out of range");
    }
  }
  return t.apply(
      "gather_rows", {table},
      [ids](Inputs in) {
        const Tensor& tv = *in[0];
        const std::size_t w = tv.dim(1);
        Tensor y({ids->size(), w});
        for (std::size_t r = 0; r < ids->size(); ++r) {
          auto src = tv.row(static_cast<std::size_t>((*ids)[r]));
          std::copy(src.begin(), src.end(), y.row(r).begin());
        }
        return y;
      },
      [ids](Inputs, const Tensor&, const Tensor& g, Grads gin) {
        if (!gin[0]) return;
        const std::size_t w = g.dim(1);
        for (std::size_t r = 0; r < ids->size(); ++r) {
          double* dst = gin[0]->data().data() + static_cast<std::size_t>((*ids)[r]) * w;
          for (std::size_t j = 0; j < w; ++j) dst[j] += g[r * w + j];
        }
      });
}

Var permute(GradTape& t, Var x, std::shared_ptr<const std::vector<std::size_t>> index, Shape out_shape) {
  const auto& xv = t.value(x);
  if (shape_numel(out_shape) != index->size()) throw ShapeError("ag::permute: index size does not match shape");
  for (auto i : *index) {
    if (i >= xv.numel()) throw ShapeError("ag::permute: index out of range");
  }
  return t.apply(
      "permute", {x},
      [index, out_shape](Inputs in) {
        Tensor y(out_shape);
        for (std::size_t j = 0; j < index->size(); ++j) y[j] = (*in[0])[(*index)[j]];
        return y;
      },
      [index](Inputs, const Tensor&, const Tensor& g, Grads gin) {
        if (!gin[0]) return;
        for (std::size_t j = 0; j < index->size(); ++j) (*gin[0])[(*index)[j]] += g[j];
      });
}

Var concat_rows(GradTape& t, std::vector<Var> parts) {
  if (parts.empty()) throw ShapeError("ag::concat_rows: nothing to concatenate");
  const std::size_t w = t.value(parts[0]).cols();
  for (const auto& p : parts) {
    require_matrix(t.value(p), "ag::concat_rows");
    if (t.value(p).cols() != w) throw ShapeError("ag::concat_rows: widths differ");
  }
  return t.apply(
      "concat_rows", std::move(parts),
      [w](Inputs in) {
        std::size_t rows = 0;
        for (const auto* p : in) rows += p->rows();
        Tensor y({rows, w});
        std::size_t off = 0;
        for (const auto* p : in) {
          std::copy(p->data().begin(), p->data().end(), y.data().begin() + static_cast<std::ptrdiff_t>(off));
          off += p->numel();
        }
        return y;
      },
      [](Inputs in, const Tensor&, const Tensor& g, Grads gin) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < in.size(); ++i) {
          if (gin[i]) {
            for (std::size_t j = 0; j < in[i]->numel(); ++j) (*gin[i])[j] += g[off + j];
          }
          off += in[i]->numel();
        }
      });
}

Var interleave_rows(GradTape& t, Var a, Var b, std::shared_ptr<const std::vector<std::uint8_t>> from_a) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  require_matrix(av, "ag::interleave_rows");
  require_matrix(bv, "ag::interleave_rows");
  if (av.cols() != bv.cols()) throw ShapeError("ag::interleave_rows: widths differ");
  const auto na = static_cast<std::size_t>(std::count(from_a->begin(), from_a->end(), std::uint8_t{1}));
  if (na != av.rows() || from_a->size() - na != bv.rows()) {
    throw ShapeError("ag::interleave_rows: selector does not match row counts");
  }
  const std::size_t w = av.cols();
  return t.apply(
      "interleave_rows", {a, b},
      [from_a, w](Inputs in) {
        Tensor y({from_a->size(), w});
        std::size_t ia = 0, ib = 0;
        for (std::size_t r = 0; r < from_a->size(); ++r) {
          auto src = (*from_a)[r] ? in[0]->row(ia++) : in[1]->row(ib++);
          std::copy(src.begin(), src.end(), y.row(r).begin());
        }
        return y;
      },
      [from_a, w](Inputs, const Tensor&, const Tensor& g, Grads gin) {
        std::size_t ia = 0, ib = 0;
        for (std::size_t r = 0; r < from_a->size(); ++r) {
          Tensor* dst = (*from_a)[r] ? gin[0] : gin[1];
          const std::size_t src_row = (*from_a)[r] ? ia++ : ib++;
          if (!dst) continue;
          for (std::size_t j = 0; j < w; ++j) (*dst)[src_row * w + j] += g[r * w + j];
        }
      });
}

Var cross_entropy(GradTape& t, Var logits, std::shared_ptr<const std::vector<int>> targets,
                  std::shared_ptr<const std::vector<std::uint8_t>> mask) {
  const auto& lv = t.value(logits);
  require_matrix(lv, "ag::cross_entropy");
  if (targets->size() != lv.rows() || mask->size() != lv.rows()) {
    throw ShapeError("ag::cross_entropy: targets/mask length does not match rows");
  }
  std::size_t count = 0;
  for (std::size_t r = 0; r < mask->size(); ++r) {
    if (!(*mask)[r]) continue;
    ++count;
    const int y = (*targets)[r];
    if (y < 0 || static_cast<std::size_t>(y) >= lv.cols()) throw ShapeError("ag::cross_entropy: target out of range");
  }
  if (count == 0) throw std::invalid_argument("ntp loss: loss mask selects no positions");
  const double inv = 1.0 / static_cast<double>(count);
  return t.apply(
      "cross_entropy", {logits},
      [targets, mask, inv](Inputs in) {
        const Tensor& z = *in[0];
        const std::size_t v = z.cols();
        double total = 0.0;
        for (std::size_t r = 0; r < z.rows(); ++r) {
          if (!(*mask)[r]) continue;
          const double* zr = z.data().data() + r * v;
          double mx = zr[0];
          for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, zr[j]);
          double s = 0.0;
          for (std::size_t j = 0; j < v; ++j) s += std::exp(zr[j] - mx);
          total += (std::log(s) + mx) - zr[(*targets)[r]];
        }
        return Tensor({1}, {total * inv});
      },
      [targets, mask, inv](Inputs in, const Tensor&, const Tensor& g, Grads gin) {
        if (!gin[0]) return;
        const Tensor& z = *in[0];
        const std::size_t v = z.cols();
        std::vector<double> p(v);
        for (std::size_t r = 0; r < z.rows(); ++r) {
          if (!(*mask)[r]) continue;
          kernels::softmax_rows(z.row(r), p, 1, v);
          double* gr = gin[0]->data().data() + r * v;
          for (std::size_t j = 0; j < v; ++j) gr[j] += g[0] * inv * p[j];
          gr[(*targets)[r]] -= g[0] * inv;
        }
      });
}

Var mean(GradTape& t, std::vector<Var> scalars) {
  if (scalars.empty()) throw std::invalid_argument("ag::mean: empty");
  for (const auto& s : scalars) {
    if (t.value(s).numel() != 1) throw ShapeError("ag::mean: inputs must be scalars");
  }
  const double inv = 1.0 / static_cast<double>(scalars.size());
  return t.apply(
      "mean", std::move(scalars),
      [inv](Inputs in) {
        double s = 0.0;
        for (const auto* p : in) s += (*p)[0];
        return Tensor({1}, {s * inv});
      },
      [inv](Inputs in, const Tensor&, const Tensor& g, Grads gin) {
        for (std::size_t i = 0; i < in.size(); ++i) {
          if (gin[i]) (*gin[i])[0] += g[0] * inv;
        }
      });
}

}  // namespace ag

}  // namespace navil
