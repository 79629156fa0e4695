// AVX2 + FMA kernels. Compiled with -mavx2 -mfma; only reached through the
// dispatch table after a CPUID check.

#include <immintrin.h>

#include <algorithm>
#include <cstdint>

#include "quann/kernels.hpp"

namespace quann::kernels {
namespace {

inline __m256i tail_mask(std::size_t lanes) {
  alignas(32) static const std::int64_t bits[8] = {-1, -1, -1, -1, 0, 0, 0, 0};
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(bits + 4 - lanes));
}

template <bool Masked>
inline __m256d load(const double* p, __m256i mask) {
  if constexpr (Masked) {
    return _mm256_maskload_pd(p, mask);
  } else {
    return _mm256_loadu_pd(p);
  }
}

template <bool Masked>
inline void store(double* p, __m256d x, __m256i mask) {
  if constexpr (Masked) {
    _mm256_maskstore_pd(p, mask, x);
  } else {
    _mm256_storeu_pd(p, x);
  }
}

// MR rows x NV vectors of C. When Tail is set the last vector is partial.
template <int MR, int NV, bool Tail>
[[gnu::always_inline]] inline void gemm_tile(std::size_t k, const double* a, std::size_t a_rs, std::size_t a_cs,
                      const double* b, std::size_t ldb, double* c, std::size_t ldc,
                      const GemmEpilogue& ep, __m256i mask) {
  __m256d acc[MR][NV];
  for (int v = 0; v < NV; ++v) {
    __m256d init = _mm256_setzero_pd();
    if (ep.bias) {
      init = (Tail && v == NV - 1) ? load<true>(ep.bias + 4 * v, mask)
                                   : load<false>(ep.bias + 4 * v, mask);
    }
    for (int r = 0; r < MR; ++r) acc[r][v] = init;
  }
  for (std::size_t p = 0; p < k; ++p) {
    __m256d bv[NV];
    const double* brow = b + p * ldb;
    for (int v = 0; v < NV; ++v) {
      bv[v] = (Tail && v == NV - 1) ? load<true>(brow + 4 * v, mask)
                                    : load<false>(brow + 4 * v, mask);
    }
    for (int r = 0; r < MR; ++r) {
      const __m256d av = _mm256_broadcast_sd(a + r * a_rs + p * a_cs);
      for (int v = 0; v < NV; ++v) acc[r][v] = _mm256_fmadd_pd(av, bv[v], acc[r][v]);
    }
  }
  const __m256d zero = _mm256_setzero_pd();
  for (int r = 0; r < MR; ++r) {
    double* crow = c + r * ldc;
    for (int v = 0; v < NV; ++v) {
      const bool masked = Tail && v == NV - 1;
      __m256d x = acc[r][v];
      if (ep.accumulate) {
        const __m256d old = masked ? load<true>(crow + 4 * v, mask) : load<false>(crow + 4 * v, mask);
        x = _mm256_add_pd(old, x);
      } else if (ep.relu) {
        x = _mm256_max_pd(x, zero);
      } else if (ep.gate) {
        const double* grow = ep.gate + r * ldc + 4 * v;
        const __m256d gv = masked ? load<true>(grow, mask) : load<false>(grow, mask);
        x = _mm256_and_pd(x, _mm256_cmp_pd(gv, zero, _CMP_GT_OQ));
      }
      if (masked) {
        store<true>(crow + 4 * v, x, mask);
      } else {
        store<false>(crow + 4 * v, x, mask);
      }
    }
  }
}

// Register tile for a column block of NV vectors: 4 x 12, 6 x 8 or 8 x 4.
template <int NV>
constexpr int kTileRows = NV == 3 ? 4 : NV == 2 ? 6 : 8;

template <int NV, bool Tail>
[[gnu::always_inline]] inline void gemm_columns(std::size_t i0, std::size_t i1, std::size_t j, std::size_t k, const double* a,
                         std::size_t a_rs, std::size_t a_cs, const double* b, std::size_t ldb, double* c,
                         std::size_t ldc, GemmEpilogue ep, __m256i mask) {
  constexpr int MR = kTileRows<NV>;
  if (ep.bias) ep.bias += j;
  const double* gate = ep.gate ? ep.gate + j : nullptr;
  std::size_t i = i0;
  for (; i + MR <= i1; i += MR) {
    if (gate) ep.gate = gate + i * ldc;
    gemm_tile<MR, NV, Tail>(k, a + i * a_rs, a_rs, a_cs, b + j, ldb, c + i * ldc + j, ldc, ep, mask);
  }
  for (; i < i1; ++i) {
    if (gate) ep.gate = gate + i * ldc;
    gemm_tile<1, NV, Tail>(k, a + i * a_rs, a_rs, a_cs, b + j, ldb, c + i * ldc + j, ldc, ep, mask);
  }
}

// Rows are processed in panels of kPanelRows so the A panel stays in L2
// while every column block of B passes over it.
constexpr std::size_t kPanelRows = 96;

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t a_rs,
               std::size_t a_cs, const double* b, std::size_t ldb, double* c, std::size_t ldc,
               GemmEpilogue ep) {
  const __m256i full = tail_mask(4);
  for (std::size_t i0 = 0; i0 < m; i0 += kPanelRows) {
    const std::size_t i1 = std::min(m, i0 + kPanelRows);
    std::size_t j = 0;
    // 16 columns go as two 8-wide blocks rather than 12 + 4.
    while (n - j >= 12 && n - j != 16) {
      gemm_columns<3, false>(i0, i1, j, k, a, a_rs, a_cs, b, ldb, c, ldc, ep, full);
      j += 12;
    }
    while (n - j >= 8) {
      gemm_columns<2, false>(i0, i1, j, k, a, a_rs, a_cs, b, ldb, c, ldc, ep, full);
      j += 8;
    }
    if (n - j >= 4) {
      gemm_columns<1, false>(i0, i1, j, k, a, a_rs, a_cs, b, ldb, c, ldc, ep, full);
      j += 4;
    }
    if (j < n) gemm_columns<1, true>(i0, i1, j, k, a, a_rs, a_cs, b, ldb, c, ldc, ep, tail_mask(n - j));
  }
}

// A^T read in place (row stride 1, column stride lda). The reduction over
// rows is split into blocks of kReduceRows so the B block stays in L2.
constexpr std::size_t kReduceRows = 256;

void gemm_tn_acc_avx2(std::size_t rows, std::size_t m, std::size_t n, const double* a,
                      std::size_t lda, const double* b, std::size_t ldb, double* c,
                      std::size_t ldc) {
  for (std::size_t r = 0; r < rows; r += kReduceRows) {
    const std::size_t len = std::min(kReduceRows, rows - r);
    gemm_avx2(m, n, len, a + r * lda, 1, lda, b + r * ldb, ldb, c, ldc, GemmEpilogue{.accumulate = true});
  }
}

template <int NV, bool Tail>
[[gnu::always_inline]] inline void relu_backward_block(std::size_t m, std::size_t n, const double* dy,
                                                       const double* y, double* dz, double* colsum,
                                                       __m256i mask) {
  const __m256d zero = _mm256_setzero_pd();
  // Sums start from the current colsum so rows are added in the same order
  // as the scalar kernel.
  __m256d sum[NV];
  for (int v = 0; v < NV; ++v) {
    sum[v] = zero;
    if (colsum) sum[v] = (Tail && v == NV - 1) ? load<true>(colsum + 4 * v, mask) : load<false>(colsum + 4 * v, mask);
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (int v = 0; v < NV; ++v) {
      const std::size_t o = i * n + 4 * v;
      if (Tail && v == NV - 1) {
        const __m256d keep = _mm256_cmp_pd(load<true>(y + o, mask), zero, _CMP_GT_OQ);
        const __m256d g = _mm256_and_pd(load<true>(dy + o, mask), keep);
        store<true>(dz + o, g, mask);
        sum[v] = _mm256_add_pd(sum[v], g);
      } else {
        const __m256d keep = _mm256_cmp_pd(load<false>(y + o, mask), zero, _CMP_GT_OQ);
        const __m256d g = _mm256_and_pd(load<false>(dy + o, mask), keep);
        store<false>(dz + o, g, mask);
        sum[v] = _mm256_add_pd(sum[v], g);
      }
    }
  }
  if (!colsum) return;
  for (int v = 0; v < NV; ++v) {
    const bool masked = Tail && v == NV - 1;
    if (masked) {
      store<true>(colsum + 4 * v, sum[v], mask);
    } else {
      store<false>(colsum + 4 * v, sum[v], mask);
    }
  }
}

// Columns go in blocks of up to eight vectors whose sums stay in registers
// for the whole pass over the rows.
void relu_backward_avx2(std::size_t m, std::size_t n, const double* dy, const double* y,
                        double* dz, double* colsum) {
  const __m256i full = tail_mask(4);
  std::size_t j = 0;
  for (; n - j >= 32; j += 32) {
    relu_backward_block<8, false>(m, n, dy + j, y + j, dz + j, colsum ? colsum + j : nullptr, full);
  }
  for (; n - j >= 4; j += 4) {
    relu_backward_block<1, false>(m, n, dy + j, y + j, dz + j, colsum ? colsum + j : nullptr, full);
  }
  if (j < n) {
    relu_backward_block<1, true>(m, n, dy + j, y + j, dz + j, colsum ? colsum + j : nullptr,
                                 tail_mask(n - j));
  }
}

template <int NV, bool Tail>
[[gnu::always_inline]] inline void colsum_block(std::size_t m, std::size_t n, const double* x, double* out,
                                                __m256i mask) {
  __m256d sum[NV];
  for (int v = 0; v < NV; ++v) {
    sum[v] = (Tail && v == NV - 1) ? load<true>(out + 4 * v, mask) : load<false>(out + 4 * v, mask);
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (int v = 0; v < NV; ++v) {
      const double* p = x + i * n + 4 * v;
      sum[v] = _mm256_add_pd(sum[v], (Tail && v == NV - 1) ? load<true>(p, mask) : load<false>(p, mask));
    }
  }
  for (int v = 0; v < NV; ++v) {
    if (Tail && v == NV - 1) {
      store<true>(out + 4 * v, sum[v], mask);
    } else {
      store<false>(out + 4 * v, sum[v], mask);
    }
  }
}

void colsum_acc_avx2(std::size_t m, std::size_t n, const double* x, double* out) {
  const __m256i full = tail_mask(4);
  std::size_t j = 0;
  for (; n - j >= 32; j += 32) colsum_block<8, false>(m, n, x + j, out + j, full);
  for (; n - j >= 4; j += 4) colsum_block<1, false>(m, n, x + j, out + j, full);
  if (j < n) colsum_block<1, true>(m, n, x + j, out + j, tail_mask(n - j));
}

void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void adam_update_avx2(std::size_t n, double* param, const double* grad, double* m, double* v,
                      const AdamStep& s) {
  const __m256d b1 = _mm256_set1_pd(s.beta1);
  const __m256d b2 = _mm256_set1_pd(s.beta2);
  const __m256d one_b1 = _mm256_set1_pd(1.0 - s.beta1);
  const __m256d one_b2 = _mm256_set1_pd(1.0 - s.beta2);
  const __m256d bc1 = _mm256_set1_pd(s.bias_correction1);
  const __m256d bc2 = _mm256_set1_pd(s.bias_correction2);
  const __m256d lr = _mm256_set1_pd(s.lr);
  const __m256d eps = _mm256_set1_pd(s.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(one_b1, g));
    const __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(_mm256_mul_pd(one_b2, g), g));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d mhat = _mm256_div_pd(mi, bc1);
    const __m256d vhat = _mm256_div_pd(vi, bc2);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, mhat), _mm256_add_pd(_mm256_sqrt_pd(vhat), eps));
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
  }
  if (i < n) scalar_table().adam_update(n - i, param + i, grad + i, m + i, v + i, s);
}

bool all_finite_avx2(std::size_t n, const double* x) {
  // x - x is NaN exactly when x is NaN or +-Inf. Four chains keep the adds
  // off the critical path.
  __m256d a0 = _mm256_setzero_pd(), a1 = a0, a2 = a0, a3 = a0;
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m256d x0 = _mm256_loadu_pd(x + i), x1 = _mm256_loadu_pd(x + i + 4);
    const __m256d x2 = _mm256_loadu_pd(x + i + 8), x3 = _mm256_loadu_pd(x + i + 12);
    a0 = _mm256_add_pd(a0, _mm256_sub_pd(x0, x0));
    a1 = _mm256_add_pd(a1, _mm256_sub_pd(x1, x1));
    a2 = _mm256_add_pd(a2, _mm256_sub_pd(x2, x2));
    a3 = _mm256_add_pd(a3, _mm256_sub_pd(x3, x3));
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d xi = _mm256_loadu_pd(x + i);
    a0 = _mm256_add_pd(a0, _mm256_sub_pd(xi, xi));
  }
  const __m256d acc = _mm256_add_pd(_mm256_add_pd(a0, a1), _mm256_add_pd(a2, a3));
  if (_mm256_movemask_pd(_mm256_cmp_pd(acc, acc, _CMP_UNORD_Q)) != 0) return false;
  for (; i < n; ++i) {
    if (!(x[i] - x[i] == 0.0)) return false;
  }
  return true;
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable t{Isa::avx2,         gemm_avx2,       gemm_tn_acc_avx2,
                             relu_backward_avx2, colsum_acc_avx2, axpy_avx2,
                             dot_avx2,          adam_update_avx2, all_finite_avx2};
  return &t;
}

}  // namespace quann::kernels
