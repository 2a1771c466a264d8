#include "hicenhance/ssm.hpp"

#include <cmath>
#include <stdexcept>

#include "hicenhance/numerics.hpp"

namespace hicenhance::ssm {

namespace {

void check_dims(const ContinuousSsm& ssm) {
    if (ssm.delta <= 0.0) throw std::invalid_argument("ssm: delta must be > 0");
    if (ssm.a_diag.empty()) throw std::invalid_argument("ssm: empty state");
    if (ssm.b_in.size() != ssm.a_diag.size() || ssm.c_out.size() != ssm.a_diag.size())
        throw std::invalid_argument("ssm: A/B/C dimensions inconsistent");
}

}  // namespace

DiscreteSsm discretize(const ContinuousSsm& ssm) {
    check_dims(ssm);
    const int n = ssm.state_size();
    DiscreteSsm out;
    out.a_bar.resize(n);
    out.b_bar.resize(n);
    out.c_out = ssm.c_out;
    for (int i = 0; i < n; ++i) {
        const double u = ssm.delta * ssm.a_diag[i];
        out.a_bar[i] = std::exp(u);
        // (delta a)^{-1}(e^{delta a} - 1) delta b == delta b (e^u - 1)/u
        out.b_bar[i] = ssm.delta * ssm.b_in[i] * zoh_g(u);
    }
    return out;
}

std::vector<double> scan_recurrent(const DiscreteSsm& ssm, const std::vector<double>& x) {
    if (x.empty()) throw std::invalid_argument("scan_recurrent: empty input sequence");
    const int n = ssm.state_size();
    std::vector<double> h(n, 0.0);
    std::vector<double> y(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            h[i] = ssm.a_bar[i] * h[i] + ssm.b_bar[i] * x[t];
            acc += ssm.c_out[i] * h[i];
        }
        y[t] = acc;
    }
    return y;
}

SsmKernel build_kernel(const DiscreteSsm& ssm, int length) {
    if (length < 1) throw std::invalid_argument("build_kernel: length must be >= 1");
    const int n = ssm.state_size();
    SsmKernel k;
    k.taps.resize(length);
    std::vector<double> p = ssm.b_bar;  // A_bar^t B_bar
    for (int t = 0; t < length; ++t) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += ssm.c_out[i] * p[i];
        k.taps[t] = acc;
        for (int i = 0; i < n; ++i) p[i] *= ssm.a_bar[i];
    }
    return k;
}

std::vector<double> scan_kernel(const std::vector<double>& x, const SsmKernel& kernel) {
    if (x.size() != kernel.taps.size())
        throw std::invalid_argument("scan_kernel: kernel length must match input length");
    const int len = static_cast<int>(x.size());
    std::vector<double> y(x.size(), 0.0);
    for (int t = 0; t < len; ++t) {
        double acc = 0.0;
        for (int s = 0; s <= t; ++s) acc += kernel.taps[s] * x[t - s];
        y[t] = acc;
    }
    return y;
}

SsmParams SsmParams::make(int state_size, int feature_dim) {
    SsmParams p;
    p.state_size = state_size;
    p.feature_dim = feature_dim;
    p.w_a = Tensor({state_size, feature_dim});
    p.w_b = Tensor({state_size, feature_dim});
    p.w_c = Tensor({state_size, feature_dim});
    p.bias_a = Tensor({state_size});
    p.bias_b = Tensor({state_size});
    p.bias_c = Tensor({state_size});
    p.delta_raw = Tensor({feature_dim});
    return p;
}

void SsmParams::init(Rng& rng) {
    for (double& w : w_a.v) w = rng.trunc_normal(0.0, 0.02);
    for (double& w : w_b.v) w = rng.trunc_normal(0.0, 0.02);
    for (double& w : w_c.v) w = rng.trunc_normal(0.0, 0.02);
    // S4-style init: effective timescale log-uniform in [1e-3, 1e-1].
    const double lo = std::log(1e-3), hi = std::log(1e-1);
    for (double& d : delta_raw.v) d = softplus_inverse(std::exp(rng.uniform(lo, hi)));
}

Tensor selective_scan(const Tensor& x, const SsmParams& params) {
    if (x.rank() != 2 || x.dim(1) != params.feature_dim)
        throw std::invalid_argument("selective_scan: input must be [T, feature_dim]");
    const int len = x.dim(0), feat = params.feature_dim, n = params.state_size;

    // Per-step projections A, B, C <- Linear(x_t).
    Tensor a_raw({len, n}), b_proj({len, n}), c_proj({len, n});
    for (int t = 0; t < len; ++t)
        for (int i = 0; i < n; ++i) {
            double sa = params.bias_a.at(i), sb = params.bias_b.at(i), sc = params.bias_c.at(i);
            for (int c = 0; c < feat; ++c) {
                const double xv = x.at(t, c);
                sa += params.w_a.at(i, c) * xv;
                sb += params.w_b.at(i, c) * xv;
                sc += params.w_c.at(i, c) * xv;
            }
            a_raw.at(t, i) = sa;
            b_proj.at(t, i) = sb;
            c_proj.at(t, i) = sc;
        }

    Tensor y({len, feat});
    std::vector<double> h(n);
    for (int c = 0; c < feat; ++c) {
        const double dt = softplus(params.delta_raw.at(c));
        std::fill(h.begin(), h.end(), 0.0);
        for (int t = 0; t < len; ++t) {
            const double xv = x.at(t, c);
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                // Projected A is kept negative (stable) via -softplus.
                const double u = dt * -softplus(a_raw.at(t, i));
                const double a_bar = std::exp(u);
                const double b_bar = dt * b_proj.at(t, i) * zoh_g(u);
                h[i] = a_bar * h[i] + b_bar * xv;
                acc += c_proj.at(t, i) * h[i];
            }
            y.at(t, c) = acc;
        }
    }
    return y;
}

void selective_scan_forward(const Tensor& x, const SsmParams& params, Tensor& y,
                            ScanCache& cache) {
    if (x.rank() != 3 || x.dim(2) != params.feature_dim)
        throw std::invalid_argument("selective_scan_forward: input must be [batch, T, d]");
    const int batch = x.dim(0), len = x.dim(1), feat = x.dim(2), n = params.state_size;

    cache.batch = batch;
    cache.len = len;
    cache.feat = feat;
    cache.state = n;
    const std::size_t tn = static_cast<std::size_t>(len) * n;
    cache.a_raw.assign(batch * tn, 0.0);
    cache.b_proj.assign(batch * tn, 0.0);
    cache.c_proj.assign(batch * tn, 0.0);
    cache.a_neg.assign(batch * tn, 0.0);
    cache.h.assign(static_cast<std::size_t>(batch) * feat * tn, 0.0);
    y = Tensor({batch, len, feat});

    for (int b = 0; b < batch; ++b) {
        const double* xb = x.data() + static_cast<std::size_t>(b) * len * feat;
        double* ar = cache.a_raw.data() + b * tn;
        double* bp = cache.b_proj.data() + b * tn;
        double* cp = cache.c_proj.data() + b * tn;
        // [T, N] = [T, d] * [N, d]^T
        gemm(false, true, len, n, feat, 1.0, xb, feat, params.w_a.data(), feat, 0.0, ar, n);
        gemm(false, true, len, n, feat, 1.0, xb, feat, params.w_b.data(), feat, 0.0, bp, n);
        gemm(false, true, len, n, feat, 1.0, xb, feat, params.w_c.data(), feat, 0.0, cp, n);
        double* an = cache.a_neg.data() + b * tn;
        for (std::size_t i = 0; i < tn; ++i) {
            const std::size_t col = i % n;
            ar[i] += params.bias_a.at(static_cast<int>(col));
            bp[i] += params.bias_b.at(static_cast<int>(col));
            cp[i] += params.bias_c.at(static_cast<int>(col));
            an[i] = -softplus(ar[i]);
        }

        double* yb = y.data() + static_cast<std::size_t>(b) * len * feat;
        for (int c = 0; c < feat; ++c) {
            const double dt = softplus(params.delta_raw.at(c));
            double* hrow = cache.h.data() + (static_cast<std::size_t>(b) * feat + c) * tn;
            for (int t = 0; t < len; ++t) {
                const double* at = an + static_cast<std::size_t>(t) * n;
                const double* bt = bp + static_cast<std::size_t>(t) * n;
                const double* ct = cp + static_cast<std::size_t>(t) * n;
                double* ht = hrow + static_cast<std::size_t>(t) * n;
                const double* hprev = t ? ht - n : nullptr;
                const double xv = xb[static_cast<std::size_t>(t) * feat + c];
                double acc = 0.0;
                for (int i = 0; i < n; ++i) {
                    const double u = dt * at[i];
                    const double eu = fast_exp(u);
                    const double b_bar = dt * bt[i] * zoh_g_from_exp(u, eu);
                    const double hv = eu * (hprev ? hprev[i] : 0.0) + b_bar * xv;
                    ht[i] = hv;
                    acc += ct[i] * hv;
                }
                yb[static_cast<std::size_t>(t) * feat + c] = acc;
            }
        }
    }
}

void selective_scan_backward(const Tensor& x, const SsmParams& params, const ScanCache& cache,
                             const Tensor& grad_y, Tensor& grad_x, SsmParams& grads) {
    const int batch = cache.batch, len = cache.len, feat = cache.feat, n = cache.state;
    const std::size_t tn = static_cast<std::size_t>(len) * n;

    std::vector<double> da(tn), db(tn), dc(tn), dh(n);
    for (int b = 0; b < batch; ++b) {
        const double* xb = x.data() + static_cast<std::size_t>(b) * len * feat;
        const double* gyb = grad_y.data() + static_cast<std::size_t>(b) * len * feat;
        double* gxb = grad_x.data() + static_cast<std::size_t>(b) * len * feat;
        const double* ar = cache.a_raw.data() + b * tn;
        const double* an = cache.a_neg.data() + b * tn;
        const double* bp = cache.b_proj.data() + b * tn;
        const double* cp = cache.c_proj.data() + b * tn;
        std::fill(da.begin(), da.end(), 0.0);
        std::fill(db.begin(), db.end(), 0.0);
        std::fill(dc.begin(), dc.end(), 0.0);

        for (int c = 0; c < feat; ++c) {
            const double dt = softplus(params.delta_raw.at(c));
            const double* hrow = cache.h.data() + (static_cast<std::size_t>(b) * feat + c) * tn;
            std::fill(dh.begin(), dh.end(), 0.0);
            double d_dt = 0.0;
            for (int t = len - 1; t >= 0; --t) {
                const double* at = an + static_cast<std::size_t>(t) * n;
                const double* bt = bp + static_cast<std::size_t>(t) * n;
                const double* ct = cp + static_cast<std::size_t>(t) * n;
                const double* ht = hrow + static_cast<std::size_t>(t) * n;
                const double* hprev = t ? ht - n : nullptr;
                const double xv = xb[static_cast<std::size_t>(t) * feat + c];
                const double gy = gyb[static_cast<std::size_t>(t) * feat + c];
                double* dat = da.data() + static_cast<std::size_t>(t) * n;
                double* dbt = db.data() + static_cast<std::size_t>(t) * n;
                double* dct = dc.data() + static_cast<std::size_t>(t) * n;
                double dxv = 0.0;
                for (int i = 0; i < n; ++i) {
                    double g_h = dh[i] + gy * ct[i];  // y_t and h_{t+1} both read h_t
                    dct[i] += gy * ht[i];
                    const double u = dt * at[i];
                    const double eu = fast_exp(u);
                    const double g = zoh_g_from_exp(u, eu);
                    const double gp = zoh_g_grad(u, eu);
                    const double b_bar = dt * bt[i] * g;
                    const double hp = hprev ? hprev[i] : 0.0;
                    const double d_abar = g_h * hp;
                    const double d_bbar = g_h * xv;
                    dxv += g_h * b_bar;
                    const double du = d_abar * eu + d_bbar * dt * bt[i] * gp;
                    dat[i] += du * dt;
                    dbt[i] += d_bbar * dt * g;
                    d_dt += du * at[i] + d_bbar * bt[i] * g;
                    dh[i] = eu * g_h;  // into h_{t-1}
                }
                gxb[static_cast<std::size_t>(t) * feat + c] += dxv;
            }
            grads.delta_raw.at(c) += d_dt * sigmoid(params.delta_raw.at(c));
        }

        // -softplus between the projection and the scan.
        for (std::size_t i = 0; i < tn; ++i) da[i] *= -sigmoid(ar[i]);

        // Through the three linear projections.
        gemm(true, false, n, feat, len, 1.0, da.data(), n, xb, feat, 1.0, grads.w_a.data(), feat);
        gemm(true, false, n, feat, len, 1.0, db.data(), n, xb, feat, 1.0, grads.w_b.data(), feat);
        gemm(true, false, n, feat, len, 1.0, dc.data(), n, xb, feat, 1.0, grads.w_c.data(), feat);
        gemm(false, false, len, feat, n, 1.0, da.data(), n, params.w_a.data(), feat, 1.0, gxb, feat);
        gemm(false, false, len, feat, n, 1.0, db.data(), n, params.w_b.data(), feat, 1.0, gxb, feat);
        gemm(false, false, len, feat, n, 1.0, dc.data(), n, params.w_c.data(), feat, 1.0, gxb, feat);
        for (int t = 0; t < len; ++t)
            for (int i = 0; i < n; ++i) {
                grads.bias_a.at(i) += da[static_cast<std::size_t>(t) * n + i];
                grads.bias_b.at(i) += db[static_cast<std::size_t>(t) * n + i];
                grads.bias_c.at(i) += dc[static_cast<std::size_t>(t) * n + i];
            }
    }
}

}  // namespace hicenhance::ssm
