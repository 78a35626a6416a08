#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

#include "floodseg/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace floodseg::kernels {

void set_thread_count(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace parallel {

namespace {

constexpr int kMr = 4;
constexpr int kNr = 16;

typedef float Vec8 __attribute__((vector_size(32)));

// Register tile: acc[i][0..kNr) = sum_k A(i, k) * panel[k][0..kNr).
template <int Rows>
void tile(int K, const float* a, std::ptrdiff_t a_m, std::ptrdiff_t a_k, const float* panel,
          float (*acc)[kNr]) {
  Vec8 v[Rows][2] = {};
  for (int k = 0; k < K; ++k) {
    Vec8 b0;
    Vec8 b1;
    std::memcpy(&b0, panel + k * kNr, sizeof b0);
    std::memcpy(&b1, panel + k * kNr + 8, sizeof b1);
    for (int i = 0; i < Rows; ++i) {
      const float av = a[i * a_m + k * a_k];
      v[i][0] += av * b0;
      v[i][1] += av * b1;
    }
  }
  for (int i = 0; i < Rows; ++i) {
    std::memcpy(acc[i], &v[i][0], sizeof(Vec8));
    std::memcpy(acc[i] + 8, &v[i][1], sizeof(Vec8));
  }
}

// C[m][n] = sum_k A(m, k) * B[k][n] with A(m, k) = a[m * a_m + k * a_k].
// Parallel over column tiles; each C entry is summed by one thread in k order.
void gemm(int M, int N, int K, const float* a, std::ptrdiff_t a_m, std::ptrdiff_t a_k, const float* b,
          std::ptrdiff_t ldb, float* c, std::ptrdiff_t ldc) {
  const int tiles = (N + kNr - 1) / kNr;
#pragma omp parallel for schedule(static)
  for (int t = 0; t < tiles; ++t) {
    const int n0 = t * kNr;
    const int nr = std::min(kNr, N - n0);
    // Contiguous K x kNr copy of the panel, zero padded past nr.
    thread_local std::vector<float> panel;
    panel.assign(static_cast<std::size_t>(K) * kNr, 0.0F);
    for (int k = 0; k < K; ++k) std::copy(b + k * ldb + n0, b + k * ldb + n0 + nr, panel.data() + k * kNr);
    for (int m0 = 0; m0 < M;) {
      const int mr = M - m0 >= 2 * kMr ? 2 * kMr : std::min(kMr, M - m0);
      float acc[2 * kMr][kNr] = {};
      if (mr == 2 * kMr) {
        tile<2 * kMr>(K, a + m0 * a_m, a_m, a_k, panel.data(), acc);
      } else if (mr == kMr) {
        tile<kMr>(K, a + m0 * a_m, a_m, a_k, panel.data(), acc);
      } else {
        for (int k = 0; k < K; ++k) {
          const float* brow = panel.data() + k * kNr;
          for (int i = 0; i < mr; ++i) {
            const float av = a[(m0 + i) * a_m + k * a_k];
            for (int j = 0; j < kNr; ++j) acc[i][j] += av * brow[j];
          }
        }
      }
      for (int i = 0; i < mr; ++i) std::copy(acc[i], acc[i] + nr, c + (m0 + i) * ldc + n0);
      m0 += mr;
    }
  }
}

// C[m][n] = sum_k A[m][k] * B[n][k], both operands row-major with unit k
// stride. Parallel over row tiles; lane sums are folded in a fixed order.
void gemm_nt(int M, int N, int K, const float* a, std::ptrdiff_t lda, const float* b, std::ptrdiff_t ldb,
             float* c, std::ptrdiff_t ldc) {
  constexpr int kT = 4;
  const int tiles = (M + kT - 1) / kT;
  const int kv = K - K % 8;
#pragma omp parallel for schedule(static)
  for (int t = 0; t < tiles; ++t) {
    const int m0 = t * kT;
    const int mr = std::min(kT, M - m0);
    for (int n0 = 0; n0 < N; n0 += kT) {
      const int nr = std::min(kT, N - n0);
      Vec8 v[kT][kT] = {};
      for (int k = 0; k < kv; k += 8) {
        Vec8 av[kT];
        Vec8 bv[kT];
        for (int i = 0; i < kT; ++i) {
          std::memcpy(&av[i], a + (m0 + std::min(i, mr - 1)) * lda + k, sizeof(Vec8));
          std::memcpy(&bv[i], b + (n0 + std::min(i, nr - 1)) * ldb + k, sizeof(Vec8));
        }
        for (int i = 0; i < kT; ++i) {
          for (int j = 0; j < kT; ++j) v[i][j] += av[i] * bv[j];
        }
      }
      for (int i = 0; i < mr; ++i) {
        for (int j = 0; j < nr; ++j) {
          float acc = 0.0F;
          for (int l = 0; l < 8; ++l) acc += v[i][j][l];
          const float* ar = a + (m0 + i) * lda;
          const float* br = b + (n0 + j) * ldb;
          for (int k = kv; k < K; ++k) acc += ar[k] * br[k];
          c[(m0 + i) * ldc + n0 + j] = acc;
        }
      }
    }
  }
}

// Output columns [lo, hi) whose tap kx lands inside the input row.
struct ColumnRange {
  int lo;
  int hi;
};

ColumnRange valid_columns(const ConvShape& s, int kx, int out_w) {
  int lo = 0;
  while (lo < out_w && lo * s.stride + kx - s.pad < 0) ++lo;
  int hi = out_w;
  while (hi > lo && (hi - 1) * s.stride + kx - s.pad >= s.in_w) --hi;
  return {lo, hi};
}

// Per-thread scratch reused across calls; contents are always overwritten.
std::vector<float>& scratch(int slot, std::size_t size) {
  thread_local std::vector<float> buffers[2];
  auto& b = buffers[slot];
  if (b.size() < size) b.resize(size);
  return b;
}

// Rows are (ci, ky, kx), columns output pixels; out-of-image taps are zero.
const float* im2col(const ConvShape& s, const float* in) {
  const int oh = s.out_h();
  const int ow = s.out_w();
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  std::vector<float>& col = scratch(0, static_cast<std::size_t>(s.in_c) * s.k * s.k * plane);
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < s.in_c; ++ci) {
    const float* src = in + static_cast<std::size_t>(ci) * s.in_h * s.in_w;
    for (int ky = 0; ky < s.k; ++ky) {
      for (int kx = 0; kx < s.k; ++kx) {
        float* dst = col.data() + ((static_cast<std::size_t>(ci) * s.k + ky) * s.k + kx) * plane;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride + ky - s.pad;
          float* drow = dst + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= s.in_h) {
            std::fill(drow, drow + ow, 0.0F);
            continue;
          }
          const float* row = src + static_cast<std::size_t>(iy) * s.in_w + kx - s.pad;
          const ColumnRange cols = valid_columns(s, kx, ow);
          std::fill(drow, drow + cols.lo, 0.0F);
          if (s.stride == 1) {
            std::copy(row + cols.lo, row + cols.hi, drow + cols.lo);
          } else {
            for (int ox = cols.lo; ox < cols.hi; ++ox) drow[ox] = row[ox * s.stride];
          }
          std::fill(drow + cols.hi, drow + ow, 0.0F);
        }
      }
    }
  }
  return col.data();
}

}  // namespace

void conv2d_forward(const ConvShape& s, std::span<const float> in, std::span<const float> weight,
                    std::span<const float> bias, std::span<float> out) {
  const int plane = s.out_h() * s.out_w();
  const int rows = s.in_c * s.k * s.k;
  const float* col = im2col(s, in.data());
  gemm(s.out_c, plane, rows, weight.data(), rows, 1, col, plane, out.data(), plane);
  if (bias.empty()) return;
  for (int co = 0; co < s.out_c; ++co) {
    float* dst = out.data() + static_cast<std::size_t>(co) * plane;
    for (int p = 0; p < plane; ++p) dst[p] += bias[co];
  }
}

void conv2d_backward(const ConvShape& s, std::span<const float> in, std::span<const float> weight,
                     std::span<const float> grad_out, std::span<float> grad_in,
                     std::span<float> grad_weight, std::span<float> grad_bias) {
  const int oh = s.out_h();
  const int ow = s.out_w();
  const int plane = oh * ow;
  const int kk = s.k * s.k;
  const int rows = s.in_c * kk;

  if (!grad_bias.empty()) {
    for (int co = 0; co < s.out_c; ++co) {
      const float* g = grad_out.data() + static_cast<std::size_t>(co) * plane;
      float acc = 0.0F;
      for (int p = 0; p < plane; ++p) acc += g[p];
      grad_bias[co] += acc;
    }
  }

  {
    const float* col = im2col(s, in.data());
    float* gw = scratch(1, static_cast<std::size_t>(s.out_c) * rows).data();
    gemm_nt(s.out_c, rows, plane, grad_out.data(), plane, col, plane, gw, rows);
    for (std::size_t i = 0; i < static_cast<std::size_t>(s.out_c) * rows; ++i) grad_weight[i] += gw[i];
  }

  if (grad_in.empty()) return;
  float* gcol = scratch(0, static_cast<std::size_t>(rows) * plane).data();
  gemm(rows, plane, s.out_c, weight.data(), 1, rows, grad_out.data(), plane, gcol, plane);
  const std::size_t in_plane = static_cast<std::size_t>(s.in_h) * s.in_w;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < s.in_c; ++ci) {
    float* gi = grad_in.data() + ci * in_plane;
    std::fill(gi, gi + in_plane, 0.0F);
    for (int ky = 0; ky < s.k; ++ky) {
      for (int kx = 0; kx < s.k; ++kx) {
        const float* src = gcol + static_cast<std::size_t>((ci * s.k + ky) * s.k + kx) * plane;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride + ky - s.pad;
          if (iy < 0 || iy >= s.in_h) continue;
          float* row = gi + static_cast<std::size_t>(iy) * s.in_w + kx - s.pad;
          const float* srow = src + static_cast<std::size_t>(oy) * ow;
          const ColumnRange cols = valid_columns(s, kx, ow);
          if (s.stride == 1) {
            for (int ox = cols.lo; ox < cols.hi; ++ox) row[ox] += srow[ox];
          } else {
            for (int ox = cols.lo; ox < cols.hi; ++ox) row[ox * s.stride] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace parallel
}  // namespace floodseg::kernels
