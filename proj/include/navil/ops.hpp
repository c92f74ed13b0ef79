#pragma once

#include <span>
#include <vector>

#include "navil/tensor.hpp"

namespace navil {

inline constexpr double kRopeBase = 10000.0;

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x);
Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps);
Tensor silu(const Tensor& x);
double silu(double x);
double sigmoid(double x);

// x is [seq×heads×head_dim]; consecutive dim pairs rotate by pos·base^(−2i/head_dim).
Tensor rope_1d(const Tensor& x, std::span<const int> positions, double base = kRopeBase);
// x is [tok×heads×head_dim], head_dim % 4 == 0. The first half of the pairs
// rotate by row index, the second half by column index.
Tensor rope_2d(const Tensor& x, std::span<const int> rows, std::span<const int> cols, double base = kRopeBase);

// Angle tables ([tokens × head_dim/2]) shared by the tensor API and the tape.
std::vector<double> rope_angles_1d(std::span<const int> positions, std::size_t head_dim, double base);
std::vector<double> rope_angles_2d(std::span<const int> rows, std::span<const int> cols, std::size_t head_dim,
                                   double base);

}  // namespace navil
