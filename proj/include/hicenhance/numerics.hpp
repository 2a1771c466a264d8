#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <cmath>

namespace hicenhance {

// Bulk-friendly exp: branchless Cephes-style range reduction + rational
// approximation, ~1 ulp rel. error on [-700, 700], auto-vectorizes.
inline double fast_exp(double x) {
    x = x < -700.0 ? -700.0 : (x > 700.0 ? 700.0 : x);
    constexpr double log2e = 1.4426950408889634;
    constexpr double c1 = 6.93145751953125e-1;
    constexpr double c2 = 1.42860682030941723212e-6;
    double px = std::nearbyint(x * log2e);
    auto n = static_cast<std::int64_t>(px);
    x -= px * c1;
    x -= px * c2;
    double xx = x * x;
    double p = x * (xx * (xx * 1.26177193074810590878e-4 + 3.02994407707441961300e-2) +
                    9.99999999999999999910e-1);
    double q = xx * (xx * (xx * 3.00198505138664455042e-6 + 2.52448340349684104192e-3) +
                     2.27265548208155028766e-1) +
               2.0;
    double r = 1.0 + 2.0 * p / (q - p);
    std::uint64_t bits;
    std::memcpy(&bits, &r, sizeof bits);
    bits += static_cast<std::uint64_t>(n) << 52;
    std::memcpy(&r, &bits, sizeof bits);
    return r;
}

inline void vexp(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = fast_exp(x[i]);
}

inline double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// softplus(raw) = target  =>  raw = log(e^target - 1)
inline double softplus_inverse(double target) {
    return std::log(std::expm1(target));
}

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

inline double gelu_grad(double x) {
    double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    double pdf = std::exp(-0.5 * x * x) * 0.3989422804014327;  // 1/sqrt(2*pi)
    return cdf + x * pdf;
}

// Zeroth-order-hold kernel g(u) = (e^u - 1)/u; g(0) = 1.
// Series below |u| = 1e-4 avoids the cancellation in e^u - 1.
inline double zoh_g(double u) {
    if (std::abs(u) < 1e-4) return 1.0 + u * (0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0)));
    return std::expm1(u) / u;
}

// Same function evaluated from a precomputed e^u (hot path re-uses fast_exp output).
inline double zoh_g_from_exp(double u, double eu) {
    if (std::abs(u) < 1e-4) return 1.0 + u * (0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0)));
    return (eu - 1.0) / u;
}

// g'(u) = (e^u (u - 1) + 1)/u^2, with the u -> 0 series for conditioning.
inline double zoh_g_grad(double u, double eu) {
    if (std::abs(u) < 1e-3)
        return 0.5 + u * (1.0 / 3.0 + u * (0.125 + u * (1.0 / 30.0 + u / 144.0)));
    return (eu * (u - 1.0) + 1.0) / (u * u);
}

// Row-major C = alpha*op(A)*op(B) + beta*C, single threaded.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc);

}  // namespace hicenhance
