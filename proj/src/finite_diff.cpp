#include "navil/finite_diff.hpp"

#include <algorithm>
#include <cmath>

namespace navil {

namespace {

double checked(double v) {
  if (!std::isfinite(v)) throw NumericError("finite_diff_grad: loss is not finite");
  return v;
}

}  // namespace

std::vector<Tensor> finite_diff_grad(const std::function<double()>& loss, ParameterStore& store, double h,
                                     const std::function<bool(const ParamEntry&)>& select) {
  checked(loss());
  std::vector<Tensor> out;
  out.reserve(store.size());
  for (auto& e : store.entries()) {
    if (select && !select(e)) {
      out.emplace_back();
      continue;
    }
    Tensor g(e.value.shape());
    for (std::size_t i = 0; i < e.value.numel(); ++i) {
      const double orig = e.value[i];
      e.value[i] = orig + h;
      const double up = checked(loss());
      e.value[i] = orig - h;
      const double down = checked(loss());
      e.value[i] = orig;
      g[i] = (up - down) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& theta, double h) {
  Tensor probe = theta;
  Tensor g(theta.shape());
  checked(f(probe));
  for (std::size_t i = 0; i < theta.numel(); ++i) {
    probe[i] = theta[i] + h;
    const double up = checked(f(probe));
    probe[i] = theta[i] - h;
    const double down = checked(f(probe));
    probe[i] = theta[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

std::vector<GradCheckEntry> compare_gradients(const ParameterStore& store, const std::vector<Tensor>& numeric,
                                              double floor) {
  std::vector<GradCheckEntry> report;
  for (std::size_t k = 0; k < store.size(); ++k) {
    const auto& e = store.at(k);
    if (k >= numeric.size() || numeric[k].empty()) continue;
    GradCheckEntry r{e.name};
    for (std::size_t i = 0; i < e.grad.numel(); ++i) {
      r.max_abs_error = std::max(r.max_abs_error, std::abs(e.grad[i] - numeric[k][i]));
      r.max_rel_error = std::max(r.max_rel_error, relative_error(e.grad[i], numeric[k][i], floor));
    }
    report.push_back(std::move(r));
  }
  return report;
}

}  // namespace navil
