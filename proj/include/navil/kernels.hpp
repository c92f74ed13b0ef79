#pragma once

// Raw row-major kernels. Every kernel fixes its reduction order, so the
// OpenMP versions (parallel over independent output rows or heads) are
// bitwise identical to the serial references in navil::kernels::serial.

#include <cstddef>
#include <cstdint>
#include <span>

namespace navil::kernels {

struct MatDims {
  std::size_t m, k, n;
};

// c[m×n] = a[m×k] · b[k×n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, MatDims d);
// c[m×n] += a[k×m]ᵀ · b[k×n]
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, MatDims d);
// c[m×n] += a[m×k] · b[n×k]ᵀ
void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, MatDims d);

// Row i of x is multiplied by weights[route[i]]; every weight is k×n.
void routed_matmul(std::span<const double> x, std::span<const std::uint8_t> route,
                   std::span<const double* const> weights, std::span<double> y, MatDims d);
// grad_w[e] += Σ_{i: route[i]==e} x_iᵀ g_i ; grad_w entries may be null.
void routed_matmul_grad_w(std::span<const double> x, std::span<const std::uint8_t> route,
                          std::span<const double> g, std::span<double* const> grad_w, MatDims d);
// grad_x_i += g_i · weights[route[i]]ᵀ
void routed_matmul_grad_x(std::span<const double> g, std::span<const std::uint8_t> route,
                          std::span<const double* const> weights, std::span<double> grad_x, MatDims d);

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t cols);

// y = x / sqrt(mean(x²) + eps) ⊙ gain, per row of width `cols`.
void rmsnorm(std::span<const double> x, std::span<const double> gain, double eps, std::span<double> y,
             std::size_t rows, std::size_t cols);
void rmsnorm_backward(std::span<const double> x, std::span<const double> gain, double eps,
                      std::span<const double> gy, std::span<double> gx, std::span<double> ggain,
                      std::size_t rows, std::size_t cols);

// Rotates consecutive pairs of every head by angles[row][pair] (sign=-1 applies the inverse).
void rope_rotate(std::span<const double> x, std::span<const double> angles, std::span<double> y, std::size_t rows,
                 std::size_t heads, std::size_t head_dim, double sign);

struct AttentionDims {
  std::size_t seq, width, heads;
};

// Multi-head scaled dot-product attention over [seq×width] q, k, v.
// probs receives heads×seq×seq probabilities (zero above the diagonal when causal).
void attention_forward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                       std::span<double> out, std::span<double> probs, AttentionDims d, bool causal);
void attention_backward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                        std::span<const double> probs, std::span<const double> gout, std::span<double> gq,
                        std::span<double> gk, std::span<double> gv, AttentionDims d, bool causal);

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, MatDims d);
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, MatDims d);
void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, MatDims d);
void routed_matmul(std::span<const double> x, std::span<const std::uint8_t> route,
                   std::span<const double* const> weights, std::span<double> y, MatDims d);
void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t cols);
void rmsnorm(std::span<const double> x, std::span<const double> gain, double eps, std::span<double> y,
             std::size_t rows, std::size_t cols);
void attention_forward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                       std::span<double> out, std::span<double> probs, AttentionDims d, bool causal);

}  // namespace serial

// Number of threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace navil::kernels
