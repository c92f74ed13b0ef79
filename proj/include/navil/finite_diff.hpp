#pragma once

#include <functional>
#include <string>
#include <vector>

#include "navil/params.hpp"
#include "navil/tensor.hpp"

namespace navil {

// Central differences (f(θ+h) − f(θ−h)) / 2h for every coordinate of every
// selected parameter. The store is restored bit-for-bit afterwards.
// `select` (optional) limits which entries are probed; skipped entries get
// an empty tensor.
std::vector<Tensor> finite_diff_grad(const std::function<double()>& loss, ParameterStore& store, double h,
                                     const std::function<bool(const ParamEntry&)>& select = {});

// Single-tensor form: gradient of f at theta.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& theta, double h);

// |a − b| / max(|a|, |b|, floor). The floor keeps coordinates whose true
// gradient is at the finite-difference noise level from dominating.
double relative_error(double a, double b, double floor);

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

// Compares store gradients (from a tape) to finite-difference gradients.
std::vector<GradCheckEntry> compare_gradients(const ParameterStore& store, const std::vector<Tensor>& numeric,
                                              double floor);

}  // namespace navil
