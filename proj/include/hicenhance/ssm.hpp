#pragma once

#include <vector>

#include "hicenhance/tensor.hpp"

namespace hicenhance::ssm {

/// Continuous-time linear state space x(t) -> h(t) -> y(t) with diagonal
/// state matrix: h'(t) = A h(t) + B x(t), y(t) = C h(t).
struct ContinuousSsm {
    std::vector<double> a_diag;  // diagonal of A, length N
    std::vector<double> b_in;    // N
    std::vector<double> c_out;   // N
    double delta = 1.0;          // timescale, > 0

    int state_size() const { return static_cast<int>(a_diag.size()); }
};

/// Zeroth-order-hold discretization of ContinuousSsm.
struct DiscreteSsm {
    std::vector<double> a_bar;  // N, exp(delta * a)
    std::vector<double> b_bar;  // N
    std::vector<double> c_out;  // N

    int state_size() const { return static_cast<int>(a_bar.size()); }
};

/// Truncated impulse response (C B_bar, C A_bar B_bar, ..., C A_bar^{T-1} B_bar).
struct SsmKernel {
    std::vector<double> taps;
};

/// Learnable bundle for the input-selective scan: per-step A/B/C come from
/// linear projections of the feature vector, the timescale is a learnable
/// per-channel parameter (softplus keeps it positive).
struct SsmParams {
    int state_size = 16;   // N
    int feature_dim = 1;   // d
    Tensor w_a, w_b, w_c;  // [N, d]
    Tensor bias_a, bias_b, bias_c;  // [N]
    Tensor delta_raw;               // [d]; effective delta = softplus(delta_raw)

    static SsmParams make(int state_size, int feature_dim);
    void init(Rng& rng);
};

/// a_bar = exp(delta a); b_bar = (delta a)^{-1}(exp(delta a) - 1) delta b,
/// evaluated through the series limit near delta*a = 0.
DiscreteSsm discretize(const ContinuousSsm& ssm);

/// y_t = C h_t with h_t = A_bar h_{t-1} + B_bar x_t, h_0 = 0.
std::vector<double> scan_recurrent(const DiscreteSsm& ssm, const std::vector<double>& x);

SsmKernel build_kernel(const DiscreteSsm& ssm, int length);

/// Causal convolution y_t = sum_{s<=t} K[s] x_{t-s}; requires |K| = |x|.
std::vector<double> scan_kernel(const std::vector<double>& x, const SsmKernel& kernel);

/// Input-selective scan over a [T, d] sequence: per-step A/B/C are projected
/// from the input, discretized with the per-channel timescale, then run
/// through the recurrence channel by channel. Returns [T, d].
Tensor selective_scan(const Tensor& x, const SsmParams& params);

/// Cached intermediates from selective_scan_forward, consumed by the backward
/// pass. Sized for a [batch, T, d] input.
struct ScanCache {
    int batch = 0, len = 0, feat = 0, state = 0;
    std::vector<double> a_raw, b_proj, c_proj;  // [batch][T][N] each
    std::vector<double> a_neg;                  // [batch][T][N], -softplus(a_raw)
    std::vector<double> h;                      // [batch][d][T][N]
};

/// Batched forward for the network hot path; same math as selective_scan.
void selective_scan_forward(const Tensor& x, const SsmParams& params, Tensor& y,
                            ScanCache& cache);

/// Reverse-mode gradients of selective_scan_forward. Accumulates (+=) into
/// every output gradient buffer.
void selective_scan_backward(const Tensor& x, const SsmParams& params, const ScanCache& cache,
                             const Tensor& grad_y, Tensor& grad_x, SsmParams& grads);

}  // namespace hicenhance::ssm
