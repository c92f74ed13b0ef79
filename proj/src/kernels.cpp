#include "navil/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace navil::kernels {

namespace {

using Index = std::ptrdiff_t;

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelWork = 32 * 1024;

bool worth_parallel(std::size_t work) { return work >= kParallelWork; }

void softmax_row(const double* x, double* y, std::size_t n) {
  double mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  for (std::size_t j = 0; j < n; ++j) y[j] /= sum;
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, MatDims d) {
  const Index m = static_cast<Index>(d.m);
#pragma omp parallel for schedule(static) if (worth_parallel(d.m * d.k * d.n))
  for (Index i = 0; i < m; ++i) {
    double* ci = c.data() + i * d.n;
    std::fill(ci, ci + d.n, 0.0);
    const double* ai = a.data() + i * d.k;
    for (std::size_t p = 0; p < d.k; ++p) {
      const double aip = ai[p];
      const double* bp = b.data() + p * d.n;
      for (std::size_t j = 0; j < d.n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, MatDims d) {
  // a is k×m, so column i of a feeds output row i.
  const Index m = static_cast<Index>(d.m);
#pragma omp parallel for schedule(static) if (worth_parallel(d.m * d.k * d.n))
  for (Index i = 0; i < m; ++i) {
    double* ci = c.data() + i * d.n;
    for (std::size_t p = 0; p < d.k; ++p) {
      const double api = a[p * d.m + i];
      const double* bp = b.data() + p * d.n;
      for (std::size_t j = 0; j < d.n; ++j) ci[j] += api * bp[j];
    }
  }
}

void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, MatDims d) {
  const Index m = static_cast<Index>(d.m);
#pragma omp parallel for schedule(static) if (worth_parallel(d.m * d.k * d.n))
  for (Index i = 0; i < m; ++i) {
    const double* ai = a.data() + i * d.k;
    double* ci = c.data() + i * d.n;
    for (std::size_t j = 0; j < d.n; ++j) {
      const double* bj = b.data() + j * d.k;
      double s = 0.0;
      for (std::size_t p = 0; p < d.k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

void routed_matmul(std::span<const double> x, std::span<const std::uint8_t> route,
                   std::span<const double* const> weights, std::span<double> y, MatDims d) {
  const Index m = static_cast<Index>(d.m);
#pragma omp parallel for schedule(static) if (worth_parallel(d.m * d.k * d.n))
  for (Index i = 0; i < m; ++i) {
    const double* w = weights[route[i]];
    double* yi = y.data() + i * d.n;
    std::fill(yi, yi + d.n, 0.0);
    const double* xi = x.data() + i * d.k;
    for (std::size_t p = 0; p < d.k; ++p) {
      const double xip = xi[p];
      const double* wp = w + p * d.n;
      for (std::size_t j = 0; j < d.n; ++j) yi[j] += xip * wp[j];
    }
  }
}

void routed_matmul_grad_w(std::span<const double> x, std::span<const std::uint8_t> route,
                          std::span<const double> g, std::span<double* const> grad_w, MatDims d) {
  // Output row p of each expert gradient sums over tokens in ascending order.
  const Index k = static_cast<Index>(d.k);
#pragma omp parallel for schedule(static) if (worth_parallel(d.m * d.k * d.n))
  for (Index p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < d.m; ++i) {
      double* gw = grad_w[route[i]];
      if (gw == nullptr) continue;
      double* row = gw + p * d.n;
      const double xip = x[i * d.k + p];
      const double* gi = g.data() + i * d.n;
      for (std::size_t j = 0; j < d.n; ++j) row[j] += xip * gi[j];
    }
  }
}

void routed_matmul_grad_x(std::span<const double> g, std::span<const std::uint8_t> route,
                          std::span<const double* const> weights, std::span<double> grad_x, MatDims d) {
  const Index m = static_cast<Index>(d.m);
#pragma omp parallel for schedule(static) if (worth_parallel(d.m * d.k * d.n))
  for (Index i = 0; i < m; ++i) {
    const double* w = weights[route[i]];
    const double* gi = g.data() + i * d.n;
    double* gx = grad_x.data() + i * d.k;
    for (std::size_t p = 0; p < d.k; ++p) {
      const double* wp = w + p * d.n;
      double s = 0.0;
      for (std::size_t j = 0; j < d.n; ++j) s += gi[j] * wp[j];
      gx[p] += s;
    }
  }
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t cols) {
  const Index r = static_cast<Index>(rows);
#pragma omp parallel for schedule(static) if (worth_parallel(rows * cols * 8))
  for (Index i = 0; i < r; ++i) softmax_row(x.data() + i * cols, y.data() + i * cols, cols);
}

void rmsnorm(std::span<const double> x, std::span<const double> gain, double eps, std::span<double> y,
             std::size_t rows, std::size_t cols) {
  const Index r = static_cast<Index>(rows);
#pragma omp parallel for schedule(static) if (worth_parallel(rows * cols * 4))
  for (Index i = 0; i < r; ++i) {
    const double* xi = x.data() + i * cols;
    double* yi = y.data() + i * cols;
    double ss = 0.0;
    for (std::size_t j = 0; j < cols; ++j) ss += xi[j] * xi[j];
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(cols) + eps);
    for (std::size_t j = 0; j < cols; ++j) yi[j] = xi[j] * inv * gain[j];
  }
}

void rmsnorm_backward(std::span<const double> x, std::span<const double> gain, double eps,
                      std::span<const double> gy, std::span<double> gx, std::span<double> ggain,
                      std::size_t rows, std::size_t cols) {
  // The gain gradient is a reduction over rows, kept serial for a fixed order.
  const double w = static_cast<double>(cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xi = x.data() + i * cols;
    const double* gyi = gy.data() + i * cols;
    double ss = 0.0;
    for (std::size_t j = 0; j < cols; ++j) ss += xi[j] * xi[j];
    const double inv = 1.0 / std::sqrt(ss / w + eps);
    if (!ggain.empty()) {
      for (std::size_t j = 0; j < cols; ++j) ggain[j] += gyi[j] * xi[j] * inv;
    }
    if (!gx.empty()) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += gyi[j] * gain[j] * xi[j];
      const double c = dot * inv * inv / w;
      double* gxi = gx.data() + i * cols;
      for (std::size_t j = 0; j < cols; ++j) gxi[j] += inv * (gyi[j] * gain[j] - xi[j] * c);
    }
  }
}

void rope_rotate(std::span<const double> x, std::span<const double> angles, std::span<double> y, std::size_t rows,
                 std::size_t heads, std::size_t head_dim, double sign) {
  const std::size_t pairs = head_dim / 2;
  const std::size_t width = heads * head_dim;
  const Index r = static_cast<Index>(rows);
#pragma omp parallel for schedule(static) if (worth_parallel(rows * width * 4))
  for (Index t = 0; t < r; ++t) {
    const double* ang = angles.data() + t * pairs;
    for (std::size_t h = 0; h < heads; ++h) {
      const double* xh = x.data() + t * width + h * head_dim;
      double* yh = y.data() + t * width + h * head_dim;
      for (std::size_t p = 0; p < pairs; ++p) {
        const double c = std::cos(ang[p]);
        const double s = sign * std::sin(ang[p]);
        const double x0 = xh[2 * p];
        const double x1 = xh[2 * p + 1];
        yh[2 * p] = x0 * c - x1 * s;
        yh[2 * p + 1] = x0 * s + x1 * c;
      }
    }
  }
}

void attention_forward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                       std::span<double> out, std::span<double> probs, AttentionDims d, bool causal) {
  const std::size_t hd = d.width / d.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const Index heads = static_cast<Index>(d.heads);
#pragma omp parallel for schedule(static) if (worth_parallel(d.seq * d.seq * d.width * 2))
  for (Index h = 0; h < heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * hd;
    std::vector<double> scores(d.seq);
    for (std::size_t i = 0; i < d.seq; ++i) {
      const std::size_t n = causal ? i + 1 : d.seq;
      const double* qi = q.data() + i * d.width + off;
      for (std::size_t j = 0; j < n; ++j) {
        const double* kj = k.data() + j * d.width + off;
        double s = 0.0;
        for (std::size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
        scores[j] = s * scale;
      }
      double* p = probs.data() + (static_cast<std::size_t>(h) * d.seq + i) * d.seq;
      softmax_row(scores.data(), p, n);
      std::fill(p + n, p + d.seq, 0.0);
      double* oi = out.data() + i * d.width + off;
      std::fill(oi, oi + hd, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        const double pj = p[j];
        const double* vj = v.data() + j * d.width + off;
        for (std::size_t c = 0; c < hd; ++c) oi[c] += pj * vj[c];
      }
    }
  }
}

void attention_backward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                        std::span<const double> probs, std::span<const double> gout, std::span<double> gq,
                        std::span<double> gk, std::span<double> gv, AttentionDims d, bool causal) {
  const std::size_t hd = d.width / d.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const Index heads = static_cast<Index>(d.heads);
#pragma omp parallel for schedule(static) if (worth_parallel(d.seq * d.seq * d.width * 4))
  for (Index h = 0; h < heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * hd;
    std::vector<double> dp(d.seq);
    for (std::size_t i = 0; i < d.seq; ++i) {
      const std::size_t n = causal ? i + 1 : d.seq;
      const double* p = probs.data() + (static_cast<std::size_t>(h) * d.seq + i) * d.seq;
      const double* go = gout.data() + i * d.width + off;
      double rowdot = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double* vj = v.data() + j * d.width + off;
        double s = 0.0;
        for (std::size_t c = 0; c < hd; ++c) s += go[c] * vj[c];
        dp[j] = s;
        rowdot += p[j] * s;
        if (!gv.empty()) {
          double* gvj = gv.data() + j * d.width + off;
          for (std::size_t c = 0; c < hd; ++c) gvj[c] += p[j] * go[c];
        }
      }
      const double* qi = q.data() + i * d.width + off;
      double* gqi = gq.empty() ? nullptr : gq.data() + i * d.width + off;
      for (std::size_t j = 0; j < n; ++j) {
        const double ds = p[j] * (dp[j] - rowdot) * scale;
        const double* kj = k.data() + j * d.width + off;
        if (gqi != nullptr) {
          for (std::size_t c = 0; c < hd; ++c) gqi[c] += ds * kj[c];
        }
        if (!gk.empty()) {
          double* gkj = gk.data() + j * d.width + off;
          for (std::size_t c = 0; c < hd; ++c) gkj[c] += ds * qi[c];
        }
      }
    }
  }
}

}  // namespace navil::kernels
