// Reference kernels. Loop orders mirror the AVX2 variants term for term so
// the two differ only in FMA rounding.

#include <algorithm>
#include <cmath>
#include <vector>

#include "quann/kernels.hpp"

namespace quann::kernels {
namespace {

void gemm_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a,
                 std::size_t a_rs, std::size_t a_cs, const double* b, std::size_t ldb,
                 double* c, std::size_t ldc, GemmEpilogue ep) {
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) acc[j] = ep.bias ? ep.bias[j] : 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * a_rs + p * a_cs];
      const double* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) acc[j] += aip * brow[j];
    }
    double* crow = c + i * ldc;
    if (ep.accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] += acc[j];
    } else if (ep.relu) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = acc[j] > 0.0 ? acc[j] : 0.0;
    } else if (ep.gate) {
      const double* grow = ep.gate + i * ldc;
      for (std::size_t j = 0; j < n; ++j) crow[j] = grow[j] > 0.0 ? acc[j] : 0.0;
    } else {
      for (std::size_t j = 0; j < n; ++j) crow[j] = acc[j];
    }
  }
}

// C += partial sums over blocks of 256 rows, the grouping the AVX2 kernel uses.
void gemm_tn_acc_scalar(std::size_t rows, std::size_t m, std::size_t n, const double* a,
                        std::size_t lda, const double* b, std::size_t ldb, double* c,
                        std::size_t ldc) {
  constexpr std::size_t block = 256;
  for (std::size_t r = 0; r < rows; r += block) {
    const std::size_t len = std::min(block, rows - r);
    gemm_scalar(m, n, len, a + r * lda, 1, lda, b + r * ldb, ldb, c, ldc, GemmEpilogue{.accumulate = true});
  }
}

void relu_backward_scalar(std::size_t m, std::size_t n, const double* dy, const double* y,
                          double* dz, double* colsum) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double g = y[i * n + j] > 0.0 ? dy[i * n + j] : 0.0;
      dz[i * n + j] = g;
      if (colsum) colsum[j] += g;
    }
  }
}

void colsum_acc_scalar(std::size_t m, std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += x[i * n + j];
  }
}

void axpy_scalar(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double dot_scalar(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void adam_update_scalar(std::size_t n, double* param, const double* grad, double* m,
                        double* v, const AdamStep& s) {
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
    const double mhat = m[i] / s.bias_correction1;
    const double vhat = v[i] / s.bias_correction2;
    param[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
  }
}

bool all_finite_scalar(std::size_t n, const double* x) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i])) return false;
  }
  return true;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{Isa::scalar,       gemm_scalar,     gemm_tn_acc_scalar,
                             relu_backward_scalar, colsum_acc_scalar, axpy_scalar,
                             dot_scalar,        adam_update_scalar, all_finite_scalar};
  return t;
}

}  // namespace quann::kernels
