#include "hicenhance/autodiff.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "hicenhance/numerics.hpp"

namespace hicenhance::ad {

namespace {

// col is [Cin*k*k, Ho*Wo]; out-of-image taps are zero.
void im2col(const double* x, int c, int h, int w, int k, int stride, int pad, int ho, int wo,
            double* col) {
    for (int ci = 0; ci < c; ++ci)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                double* row = col + ((static_cast<std::size_t>(ci) * k + ki) * k + kj) *
                                        (static_cast<std::size_t>(ho) * wo);
                for (int oi = 0; oi < ho; ++oi) {
                    const int ii = oi * stride + ki - pad;
                    double* dst = row + static_cast<std::size_t>(oi) * wo;
                    if (ii < 0 || ii >= h) {
                        std::fill(dst, dst + wo, 0.0);
                        continue;
                    }
                    const double* src = x + (static_cast<std::size_t>(ci) * h + ii) * w;
                    for (int oj = 0; oj < wo; ++oj) {
                        const int jj = oj * stride + kj - pad;
                        dst[oj] = (jj < 0 || jj >= w) ? 0.0 : src[jj];
                    }
                }
            }
}

void col2im_add(const double* col, int c, int h, int w, int k, int stride, int pad, int ho,
                int wo, double* x) {
    for (int ci = 0; ci < c; ++ci)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                const double* row = col + ((static_cast<std::size_t>(ci) * k + ki) * k + kj) *
                                              (static_cast<std::size_t>(ho) * wo);
                for (int oi = 0; oi < ho; ++oi) {
                    const int ii = oi * stride + ki - pad;
                    if (ii < 0 || ii >= h) continue;
                    double* dst = x + (static_cast<std::size_t>(ci) * h + ii) * w;
                    const double* src = row + static_cast<std::size_t>(oi) * wo;
                    for (int oj = 0; oj < wo; ++oj) {
                        const int jj = oj * stride + kj - pad;
                        if (jj >= 0 && jj < w) dst[jj] += src[oj];
                    }
                }
            }
}

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

int input(Tape& t, Tensor x) { return t.push(std::move(x)); }

int conv2d(Tape& t, int x, Var w, Var b, int stride, int pad) {
    const Tensor& xv = t.val(x);
    const Tensor& wt = *w.value;
    require(xv.rank() == 4, "conv2d: input must be [B,C,H,W]");
    require(wt.rank() == 4 && wt.dim(2) == wt.dim(3), "conv2d: weight must be [Cout,Cin,k,k]");
    require(wt.dim(1) == xv.dim(1), "conv2d: input channels do not match weight");
    const int bsz = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
    const int cout = wt.dim(0), k = wt.dim(2);
    require((h + 2 * pad - k) >= 0 && (h + 2 * pad - k) % stride == 0 &&
                (wd + 2 * pad - k) % stride == 0,
            "conv2d: spatial size incompatible with kernel/stride/pad");
    const int ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
    const int kk = cin * k * k;
    const std::size_t hw = static_cast<std::size_t>(ho) * wo;

    Tensor out({bsz, cout, ho, wo});
    std::vector<double> col(static_cast<std::size_t>(kk) * hw);
    for (int bi = 0; bi < bsz; ++bi) {
        im2col(xv.data() + static_cast<std::size_t>(bi) * cin * h * wd, cin, h, wd, k, stride,
               pad, ho, wo, col.data());
        double* ob = out.data() + static_cast<std::size_t>(bi) * cout * hw;
        gemm(false, false, cout, static_cast<int>(hw), kk, 1.0, wt.data(), kk, col.data(),
             static_cast<int>(hw), 0.0, ob, static_cast<int>(hw));
        if (b.value)
            for (int co = 0; co < cout; ++co) {
                const double bv = b.value->at(co);
                double* orow = ob + static_cast<std::size_t>(co) * hw;
                for (std::size_t i = 0; i < hw; ++i) orow[i] += bv;
            }
    }

    const int id = t.next_id();
    return t.push(std::move(out), [=](Tape& tp) {
        const Tensor& xval = tp.val(x);
        const Tensor& g = tp.grad(id);
        Tensor& xg = tp.grad(x);
        std::vector<double> colb(static_cast<std::size_t>(kk) * hw);
        std::vector<double> dcol(static_cast<std::size_t>(kk) * hw);
        for (int bi = 0; bi < bsz; ++bi) {
            const std::size_t xoff = static_cast<std::size_t>(bi) * cin * h * wd;
            im2col(xval.data() + xoff, cin, h, wd, k, stride, pad, ho, wo, colb.data());
            const double* gb = g.data() + static_cast<std::size_t>(bi) * cout * hw;
            gemm(false, true, cout, kk, static_cast<int>(hw), 1.0, gb, static_cast<int>(hw),
                 colb.data(), static_cast<int>(hw), 1.0, w.grad->data(), kk);
            gemm(true, false, kk, static_cast<int>(hw), cout, 1.0, w.value->data(), kk, gb,
                 static_cast<int>(hw), 0.0, dcol.data(), static_cast<int>(hw));
            col2im_add(dcol.data(), cin, h, wd, k, stride, pad, ho, wo, xg.data() + xoff);
            if (b.grad)
                for (int co = 0; co < cout; ++co) {
                    double s = 0.0;
                    const double* grow = gb + static_cast<std::size_t>(co) * hw;
                    for (std::size_t i = 0; i < hw; ++i) s += grow[i];
                    b.grad->at(co) += s;
                }
        }
    });
}

int conv_transpose2d_2x(Tape& t, int x, Var w, Var b) {
    const Tensor& xv = t.val(x);
    const Tensor& wt = *w.value;
    require(xv.rank() == 4, "conv_transpose2d: input must be [B,C,H,W]");
    require(wt.rank() == 4 && wt.dim(2) == 2 && wt.dim(3) == 2,
            "conv_transpose2d: weight must be [Cin,Cout,2,2]");
    require(wt.dim(0) == xv.dim(1), "conv_transpose2d: input channels do not match weight");
    const int bsz = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
    const int cout = wt.dim(1);
    const std::size_t hw = static_cast<std::size_t>(h) * wd;
    const int co4 = cout * 4;

    // Stride equals kernel, so each output pixel has exactly one source:
    // out[b,co,2i+di,2j+dj] = sum_ci x[b,ci,i,j] w[ci,co,di,dj] (+ bias).
    Tensor out({bsz, cout, 2 * h, 2 * wd});
    std::vector<double> m(static_cast<std::size_t>(co4) * hw);
    for (int bi = 0; bi < bsz; ++bi) {
        const double* xb = xv.data() + static_cast<std::size_t>(bi) * cin * hw;
        gemm(true, false, co4, static_cast<int>(hw), cin, 1.0, wt.data(), co4, xb,
             static_cast<int>(hw), 0.0, m.data(), static_cast<int>(hw));
        for (int co = 0; co < cout; ++co) {
            const double bv = b.value ? b.value->at(co) : 0.0;
            for (int di = 0; di < 2; ++di)
                for (int dj = 0; dj < 2; ++dj) {
                    const double* src = m.data() + ((static_cast<std::size_t>(co) * 2 + di) * 2 + dj) * hw;
                    for (int i = 0; i < h; ++i) {
                        double* dst = &out.at(bi, co, 2 * i + di, dj);
                        for (int j = 0; j < wd; ++j) dst[2 * j] = src[static_cast<std::size_t>(i) * wd + j] + bv;
                    }
                }
        }
    }

    const int id = t.next_id();
    return t.push(std::move(out), [=](Tape& tp) {
        const Tensor& xval = tp.val(x);
        const Tensor& g = tp.grad(id);
        Tensor& xg = tp.grad(x);
        std::vector<double> dm(static_cast<std::size_t>(co4) * hw);
        for (int bi = 0; bi < bsz; ++bi) {
            for (int co = 0; co < cout; ++co) {
                double bsum = 0.0;
                for (int di = 0; di < 2; ++di)
                    for (int dj = 0; dj < 2; ++dj) {
                        double* dst = dm.data() + ((static_cast<std::size_t>(co) * 2 + di) * 2 + dj) * hw;
                        for (int i = 0; i < h; ++i) {
                            const double* src =
                                g.data() + ((static_cast<std::size_t>(bi) * cout + co) * (2 * h) +
                                            (2 * i + di)) * (2 * wd) + dj;
                            for (int j = 0; j < wd; ++j) {
                                dst[static_cast<std::size_t>(i) * wd + j] = src[2 * j];
                                bsum += src[2 * j];
                            }
                        }
                    }
                if (b.grad) b.grad->at(co) += bsum;
            }
            const double* xb = xval.data() + static_cast<std::size_t>(bi) * cin * hw;
            gemm(false, true, cin, co4, static_cast<int>(hw), 1.0, xb, static_cast<int>(hw),
                 dm.data(), static_cast<int>(hw), 1.0, w.grad->data(), co4);
            gemm(false, false, cin, static_cast<int>(hw), co4, 1.0, w.value->data(), co4,
                 dm.data(), static_cast<int>(hw), 1.0,
                 xg.data() + static_cast<std::size_t>(bi) * cin * hw, static_cast<int>(hw));
        }
    });
}

int layer_norm_chan(Tape& t, int x, Var gain, Var bias, double eps) {
    const Tensor& xv = t.val(x);
    require(xv.rank() == 4, "layer_norm: input must be [B,C,H,W]");
    const int bsz = xv.dim(0), c = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
    require(gain.value->size() == static_cast<std::size_t>(c) &&
                bias.value->size() == static_cast<std::size_t>(c),
            "layer_norm: gain/bias must have one entry per channel");
    const std::size_t hw = static_cast<std::size_t>(h) * wd;

    Tensor out(xv.shape);
    for (int bi = 0; bi < bsz; ++bi) {
        const double* xb = xv.data() + static_cast<std::size_t>(bi) * c * hw;
        double* ob = out.data() + static_cast<std::size_t>(bi) * c * hw;
        for (std::size_t p = 0; p < hw; ++p) {
            double mean = 0.0;
            for (int ci = 0; ci < c; ++ci) mean += xb[ci * hw + p];
            mean /= c;
            double var = 0.0;
            for (int ci = 0; ci < c; ++ci) {
                const double d = xb[ci * hw + p] - mean;
                var += d * d;
            }
            const double inv = 1.0 / std::sqrt(var / c + eps);
            for (int ci = 0; ci < c; ++ci)
                ob[ci * hw + p] = gain.value->at(ci) * (xb[ci * hw + p] - mean) * inv +
                                  bias.value->at(ci);
        }
    }

    const int id = t.next_id();
    return t.push(std::move(out), [=](Tape& tp) {
        const Tensor& xval = tp.val(x);
        const Tensor& g = tp.grad(id);
        Tensor& xg = tp.grad(x);
        for (int bi = 0; bi < bsz; ++bi) {
            const double* xb = xval.data() + static_cast<std::size_t>(bi) * c * hw;
            const double* gb = g.data() + static_cast<std::size_t>(bi) * c * hw;
            double* xgb = xg.data() + static_cast<std::size_t>(bi) * c * hw;
            for (std::size_t p = 0; p < hw; ++p) {
                double mean = 0.0;
                for (int ci = 0; ci < c; ++ci) mean += xb[ci * hw + p];
                mean /= c;
                double var = 0.0;
                for (int ci = 0; ci < c; ++ci) {
                    const double d = xb[ci * hw + p] - mean;
                    var += d * d;
                }
                const double inv = 1.0 / std::sqrt(var / c + eps);
                double s1 = 0.0, s2 = 0.0;
                for (int ci = 0; ci < c; ++ci) {
                    const double xhat = (xb[ci * hw + p] - mean) * inv;
                    const double gd = gain.value->at(ci) * gb[ci * hw + p];
                    s1 += gd;
                    s2 += gd * xhat;
                    gain.grad->at(ci) += gb[ci * hw + p] * xhat;
                    bias.grad->at(ci) += gb[ci * hw + p];
                }
                for (int ci = 0; ci < c; ++ci) {
                    const double xhat = (xb[ci * hw + p] - mean) * inv;
                    const double gd = gain.value->at(ci) * gb[ci * hw + p];
                    xgb[ci * hw + p] += inv * (gd - s1 / c - xhat * s2 / c);
                }
            }
        }
    });
}

int gelu(Tape& t, int x) {
    const Tensor& xv = t.val(x);
    Tensor out(xv.shape);
    for (std::size_t i = 0; i < xv.size(); ++i) out.v[i] = hicenhance::gelu(xv.v[i]);
    const int id = t.next_id();
    return t.push(std::move(out), [=](Tape& tp) {
        const Tensor& xval = tp.val(x);
        const Tensor& g = tp.grad(id);
        Tensor& xg = tp.grad(x);
        for (std::size_t i = 0; i < xval.size(); ++i) xg.v[i] += g.v[i] * gelu_grad(xval.v[i]);
    });
}

int add(Tape& t, int a, int b) {
    require(t.val(a).same_shape(t.val(b)), "add: shape mismatch");
    Tensor out = t.val(a);
    out += t.val(b);
    const int id = t.next_id();
    return t.push(std::move(out), [=](Tape& tp) {
        const Tensor& g = tp.grad(id);
        tp.grad(a) += g;
        tp.grad(b) += g;
    });
}

int concat_channels(Tape& t, int a, int b) {
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    require(av.rank() == 4 && bv.rank() == 4, "concat: inputs must be [B,C,H,W]");
    require(av.dim(0) == bv.dim(0) && av.dim(2) == bv.dim(2) && av.dim(3) == bv.dim(3),
            "concat: non-channel dims must match");
    const int bsz = av.dim(0), c1 = av.dim(1), c2 = bv.dim(1), h = av.dim(2), wd = av.dim(3);
    const std::size_t hw = static_cast<std::size_t>(h) * wd;
    Tensor out({bsz, c1 + c2, h, wd});
    for (int bi = 0; bi < bsz; ++bi) {
        std::copy_n(av.data() + static_cast<std::size_t>(bi) * c1 * hw, c1 * hw,
                    out.data() + static_cast<std::size_t>(bi) * (c1 + c2) * hw);
        std::copy_n(bv.data() + static_cast<std::size_t>(bi) * c2 * hw, c2 * hw,
                    out.data() + (static_cast<std::size_t>(bi) * (c1 + c2) + c1) * hw);
    }
    const int id = t.next_id();
    return t.push(std::move(out), [=](Tape& tp) {
        const Tensor& g = tp.grad(id);
        Tensor& ag = tp.grad(a);
        Tensor& bg = tp.grad(b);
        for (int bi = 0; bi < bsz; ++bi) {
            const double* gb = g.data() + static_cast<std::size_t>(bi) * (c1 + c2) * hw;
            double* ad = ag.data() + static_cast<std::size_t>(bi) * c1 * hw;
            double* bd = bg.data() + static_cast<std::size_t>(bi) * c2 * hw;
            for (std::size_t i = 0; i < c1 * hw; ++i) ad[i] += gb[i];
            for (std::size_t i = 0; i < c2 * hw; ++i) bd[i] += gb[c1 * hw + i];
        }
    });
}

int scan_path(Tape& t, int x, int path) {
    const Tensor& xv = t.val(x);
    require(xv.rank() == 4, "scan_path: input must be [B,C,H,W]");
    require(path >= 0 && path < 4, "scan_path: path must be in 0..3");
    const int bsz = xv.dim(0), c = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
    const int len = h * wd;
    Tensor out({bsz, len, c});
    for (int bi = 0; bi < bsz; ++bi)
        for (int ti = 0; ti < len; ++ti) {
            const int f = path_flat(path, ti, h, wd);
            for (int ci = 0; ci < c; ++ci) out.at(bi, ti, ci) = xv.at(bi, ci, f / wd, f % wd);
        }
    const int id = t.next_id();
    return t.push(std::move(out), [=](Tape& tp) {
        const Tensor& g = tp.grad(id);
        Tensor& xg = tp.grad(x);
        for (int bi = 0; bi < bsz; ++bi)
            for (int ti = 0; ti < len; ++ti) {
                const int f = path_flat(path, ti, h, wd);
                for (int ci = 0; ci < c; ++ci)
                    xg.at(bi, ci, f / wd, f % wd) += g.at(bi, ti, ci);
            }
    });
}

int merge_path(Tape& t, int seq, int path, int h, int w) {
    const Tensor& sv = t.val(seq);
    require(sv.rank() == 3, "merge_path: input must be [B,T,C]");
    require(sv.dim(1) == h * w, "merge_path: sequence length must equal H*W");
    const int bsz = sv.dim(0), len = sv.dim(1), c = sv.dim(2);
    Tensor out({bsz, c, h, w});
    for (int bi = 0; bi < bsz; ++bi)
        for (int ti = 0; ti < len; ++ti) {
            const int f = path_flat(path, ti, h, w);
            for (int ci = 0; ci < c; ++ci) out.at(bi, ci, f / w, f % w) = sv.at(bi, ti, ci);
        }
    const int id = t.next_id();
    return t.push(std::move(out), [=](Tape& tp) {
        const Tensor& g = tp.grad(id);
        Tensor& sg = tp.grad(seq);
        for (int bi = 0; bi < bsz; ++bi)
            for (int ti = 0; ti < len; ++ti) {
                const int f = path_flat(path, ti, h, w);
                for (int ci = 0; ci < c; ++ci) sg.at(bi, ti, ci) += g.at(bi, ci, f / w, f % w);
            }
    });
}

int selective_scan_node(Tape& t, int x, ssm::SsmParams& params, ssm::SsmParams& param_grads) {
    auto cache = std::make_shared<ssm::ScanCache>();
    Tensor y;
    ssm::selective_scan_forward(t.val(x), params, y, *cache);
    const int id = t.next_id();
    ssm::SsmParams* p = &params;
    ssm::SsmParams* pg = &param_grads;
    return t.push(std::move(y), [=](Tape& tp) {
        ssm::selective_scan_backward(tp.val(x), *p, *cache, tp.grad(id), tp.grad(x), *pg);
    });
}

int l1_loss(Tape& t, int pred, Tensor target) {
    const Tensor& pv = t.val(pred);
    require(pv.shape == target.shape, "l1_loss: prediction/target shape mismatch");
    const double n = static_cast<double>(pv.size());
    double s = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) s += std::abs(pv.v[i] - target.v[i]);
    Tensor out({1});
    out.v[0] = s / n;
    const int id = t.next_id();
    auto tgt = std::make_shared<Tensor>(std::move(target));
    return t.push(std::move(out), [=](Tape& tp) {
        const double g0 = tp.grad(id).v[0];
        const Tensor& pval = tp.val(pred);
        Tensor& pg = tp.grad(pred);
        for (std::size_t i = 0; i < pval.size(); ++i) {
            const double d = pval.v[i] - tgt->v[i];
            pg.v[i] += g0 * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
        }
    });
}

}  // namespace hicenhance::ad
