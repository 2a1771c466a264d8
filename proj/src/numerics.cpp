#include "hicenhance/numerics.hpp"

#include <cblas.h>

#include <cstdlib>

namespace hicenhance {

namespace {

// Some VMs mask the CPUID model; OpenBLAS then falls back to a generic kernel.
// Pin the core type (unless the user already chose one) before the first BLAS
// call, and keep BLAS single-threaded so results are deterministic.
__attribute__((constructor)) void blas_init() {
    if (!std::getenv("OPENBLAS_CORETYPE")) {
#if defined(__x86_64__)
        if (__builtin_cpu_supports("avx512f"))
            setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 1);
        else if (__builtin_cpu_supports("avx2"))
            setenv("OPENBLAS_CORETYPE", "HASWELL", 1);
#endif
    }
    openblas_set_num_threads(1);
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c,
                ldc);
}

}  // namespace hicenhance
