#pragma once

// Dense double-precision inner loops used by the autodiff engine and the
// optimizer. Each kernel has a scalar reference implementation and, on x86-64,
// an AVX2/FMA variant; the variant is picked once at startup from CPUID and
// can be overridden with QUANN_SIMD=scalar|avx2 or set_isa().
//
// The AVX2 gemm and elementwise kernels visit reduction terms in the same
// order as the scalar ones, so they differ only by FMA rounding; dot uses
// lane-parallel partial sums. Equivalence tests pin both to ~1e-13 relative.

#include <cstddef>
#include <string_view>

namespace quann::kernels {

enum class Isa { scalar, avx2 };

// Applied when a gemm writes its output tile.
//   overwrite:  C = act(A*B + bias)
//   gated:      C = gate > 0 ? A*B : 0, gate laid out like C (leading dim ldc)
//   accumulate: C += A*B          (bias, gate must be null, relu false)
struct GemmEpilogue {
  const double* bias = nullptr;
  bool relu = false;
  bool accumulate = false;
  const double* gate = nullptr;
};

struct AdamStep {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  Isa isa;

  // C[m x n] (op)= A[m x k] * B[k x n]; A(i, p) = a[i*a_rs + p*a_cs],
  // B and C row-major with leading dimensions ldb, ldc.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t a_rs, std::size_t a_cs, const double* b, std::size_t ldb,
               double* c, std::size_t ldc, GemmEpilogue ep);

  // C[m x n] += A^T * B for A[rows x m], B[rows x n]; the long reduction
  // over rows is what weight gradients look like.
  void (*gemm_tn_acc)(std::size_t rows, std::size_t m, std::size_t n, const double* a,
                      std::size_t lda, const double* b, std::size_t ldb, double* c,
                      std::size_t ldc);

  // dz = (y > 0) ? dy : 0 over an m x n block; colsum (may be null) += column
  // sums of dz.
  void (*relu_backward)(std::size_t m, std::size_t n, const double* dy, const double* y,
                        double* dz, double* colsum);

  // out[n] += column sums of x[m x n].
  void (*colsum_acc)(std::size_t m, std::size_t n, const double* x, double* out);

  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  double (*dot)(std::size_t n, const double* x, const double* y);
  void (*adam_update)(std::size_t n, double* param, const double* grad, double* m,
                      double* v, const AdamStep& step);
  bool (*all_finite)(std::size_t n, const double* x);
};

const KernelTable& scalar_table();
// Null when the build has no AVX2 kernels.
const KernelTable* avx2_table();

bool isa_supported(Isa isa);
Isa active_isa();
// Throws ConfigError when the ISA is unavailable on this CPU/build.
void set_isa(Isa isa);
std::string_view isa_name(Isa isa);
const KernelTable& table(Isa isa);
const KernelTable& active();

inline void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
                 std::size_t a_rs, std::size_t a_cs, const double* b, std::size_t ldb,
                 double* c, std::size_t ldc, GemmEpilogue ep = {}) {
  active().gemm(m, n, k, a, a_rs, a_cs, b, ldb, c, ldc, ep);
}

inline void gemm_tn_acc(std::size_t rows, std::size_t m, std::size_t n, const double* a,
                        std::size_t lda, const double* b, std::size_t ldb, double* c,
                        std::size_t ldc) {
  active().gemm_tn_acc(rows, m, n, a, lda, b, ldb, c, ldc);
}

inline void relu_backward(std::size_t m, std::size_t n, const double* dy, const double* y,
                          double* dz, double* colsum) {
  active().relu_backward(m, n, dy, y, dz, colsum);
}

inline void colsum_acc(std::size_t m, std::size_t n, const double* x, double* out) {
  active().colsum_acc(m, n, x, out);
}

inline void axpy(std::size_t n, double alpha, const double* x, double* y) {
  active().axpy(n, alpha, x, y);
}

inline double dot(std::size_t n, const double* x, const double* y) {
  return active().dot(n, x, y);
}

inline void adam_update(std::size_t n, double* param, const double* grad, double* m,
                        double* v, const AdamStep& step) {
  active().adam_update(n, param, grad, m, v, step);
}

inline bool all_finite(std::size_t n, const double* x) { return active().all_finite(n, x); }

}  // namespace quann::kernels
