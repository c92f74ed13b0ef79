// Plain single-threaded reference kernels. Kept for tests and the benchmark;
// the model always runs the parallel versions in kernels.cpp.

#include <algorithm>
#include <cmath>

#include "navil/kernels.hpp"

namespace navil::kernels::serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, MatDims d) {
  for (std::size_t i = 0; i < d.m; ++i) {
    for (std::size_t j = 0; j < d.n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d.k; ++p) s += a[i * d.k + p] * b[p * d.n + j];
      c[i * d.n + j] = s;
    }
  }
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, MatDims d) {
  for (std::size_t i = 0; i < d.m; ++i) {
    for (std::size_t j = 0; j < d.n; ++j) {
      double s = c[i * d.n + j];
      for (std::size_t p = 0; p < d.k; ++p) s += a[p * d.m + i] * b[p * d.n + j];
      c[i * d.n + j] = s;
    }
  }
}

void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, MatDims d) {
  for (std::size_t i = 0; i < d.m; ++i) {
    for (std::size_t j = 0; j < d.n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d.k; ++p) s += a[i * d.k + p] * b[j * d.k + p];
      c[i * d.n + j] += s;
    }
  }
}

void routed_matmul(std::span<const double> x, std::span<const std::uint8_t> route,
                   std::span<const double* const> weights, std::span<double> y, MatDims d) {
  for (std::size_t i = 0; i < d.m; ++i) {
    const double* w = weights[route[i]];
    for (std::size_t j = 0; j < d.n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d.k; ++p) s += x[i * d.k + p] * w[p * d.n + j];
      y[i * d.n + j] = s;
    }
  }
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    double mx = x[i * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[i * cols + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[i * cols + j] = std::exp(x[i * cols + j] - mx);
      sum += y[i * cols + j];
    }
    for (std::size_t j = 0; j < cols; ++j) y[i * cols + j] /= sum;
  }
}

void rmsnorm(std::span<const double> x, std::span<const double> gain, double eps, std::span<double> y,
             std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < cols; ++j) ss += x[i * cols + j] * x[i * cols + j];
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(cols) + eps);
    for (std::size_t j = 0; j < cols; ++j) y[i * cols + j] = x[i * cols + j] * inv * gain[j];
  }
}

void attention_forward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                       std::span<double> out, std::span<double> probs, AttentionDims d, bool causal) {
  const std::size_t hd = d.width / d.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (std::size_t h = 0; h < d.heads; ++h) {
    const std::size_t off = h * hd;
    for (std::size_t i = 0; i < d.seq; ++i) {
      const std::size_t n = causal ? i + 1 : d.seq;
      double* p = probs.data() + (h * d.seq + i) * d.seq;
      for (std::size_t j = 0; j < d.seq; ++j) {
        if (j >= n) {
          p[j] = 0.0;
          continue;
        }
        double s = 0.0;
        for (std::size_t c = 0; c < hd; ++c) s += q[i * d.width + off + c] * k[j * d.width + off + c];
        p[j] = s * scale;
      }
      double mx = p[0];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, p[j]);
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        p[j] = std::exp(p[j] - mx);
        sum += p[j];
      }
      for (std::size_t j = 0; j < n; ++j) p[j] /= sum;
      for (std::size_t c = 0; c < hd; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += p[j] * v[j * d.width + off + c];
        out[i * d.width + off + c] = s;
      }
    }
  }
}

}  // namespace navil::kernels::serial
