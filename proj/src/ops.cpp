#include "navil/ops.hpp"

#include <cmath>
#include <string>

#include "navil/kernels.hpp"

namespace navil {

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner extents differ " + shape_str(a.shape()) + " · " + shape_str(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)});
  kernels::matmul(a.data(), b.data(), c.data(), {a.dim(0), a.dim(1), b.dim(1)});
  return c;
}

Tensor softmax_rows(const Tensor& x) {
  require_finite(x, "softmax_rows input");
  Tensor y(x.shape());
  kernels::softmax_rows(x.data(), y.data(), x.rows(), x.cols());
  return y;
}

Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps) {
  if (gain.rank() != 1 || gain.dim(0) != x.cols()) {
    throw ShapeError("rmsnorm: gain " + shape_str(gain.shape()) + " does not match width of " +
                     shape_str(x.shape()));
  }
  Tensor y(x.shape());
  kernels::rmsnorm(x.data(), gain.data(), eps, y.data(), x.rows(), x.cols());
  require_finite(y, "rmsnorm");
  return y;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) { return x * sigmoid(x); }

Tensor silu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = silu(x[i]);
  return y;
}

std::vector<double> rope_angles_1d(std::span<const int> positions, std::size_t head_dim, double base) {
  if (head_dim % 2 != 0) throw ShapeError("rope_1d: head dim must be even, got " + std::to_string(head_dim));
  const std::size_t pairs = head_dim / 2;
  std::vector<double> angles(positions.size() * pairs);
  for (std::size_t p = 0; p < pairs; ++p) {
    const double inv_freq = std::pow(base, -2.0 * static_cast<double>(p) / static_cast<double>(head_dim));
    for (std::size_t t = 0; t < positions.size(); ++t) angles[t * pairs + p] = positions[t] * inv_freq;
  }
  return angles;
}

std::vector<double> rope_angles_2d(std::span<const int> rows, std::span<const int> cols, std::size_t head_dim,
                                   double base) {
  if (head_dim % 4 != 0) {
    throw ShapeError("rope_2d: head dim must be divisible by 4, got " + std::to_string(head_dim));
  }
  if (rows.size() != cols.size()) throw ShapeError("rope_2d: row and column annotations differ in length");
  const std::size_t pairs = head_dim / 2;
  const std::size_t half = head_dim / 2;
  const std::size_t half_pairs = pairs / 2;
  std::vector<double> angles(rows.size() * pairs);
  for (std::size_t p = 0; p < half_pairs; ++p) {
    const double inv_freq = std::pow(base, -2.0 * static_cast<double>(p) / static_cast<double>(half));
    for (std::size_t t = 0; t < rows.size(); ++t) {
      angles[t * pairs + p] = rows[t] * inv_freq;
      angles[t * pairs + half_pairs + p] = cols[t] * inv_freq;
    }
  }
  return angles;
}

namespace {

Tensor rotate_3d(const Tensor& x, const std::vector<double>& angles, const char* where) {
  if (x.rank() != 3) throw ShapeError(std::string(where) + ": expected [tokens×heads×head_dim]");
  Tensor y(x.shape());
  kernels::rope_rotate(x.data(), angles, y.data(), x.dim(0), x.dim(1), x.dim(2), 1.0);
  return y;
}

}  // namespace

Tensor rope_1d(const Tensor& x, std::span<const int> positions, double base) {
  if (x.rank() != 3) throw ShapeError("rope_1d: expected [seq×heads×head_dim]");
  if (positions.size() != x.dim(0)) throw ShapeError("rope_1d: one position per token required");
  return rotate_3d(x, rope_angles_1d(positions, x.dim(2), base), "rope_1d");
}

Tensor rope_2d(const Tensor& x, std::span<const int> rows, std::span<const int> cols, double base) {
  if (x.rank() != 3) throw ShapeError("rope_2d: expected [tok×heads×head_dim]");
  if (rows.size() != x.dim(0)) throw ShapeError("rope_2d: one (row, col) per token required");
  return rotate_3d(x, rope_angles_2d(rows, cols, x.dim(2), base), "rope_2d");
}

}  // namespace navil
