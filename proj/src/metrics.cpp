#include "hicenhance/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hicenhance::metrics {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (a.shape != b.shape)
        throw std::invalid_argument(std::string(who) + ": shapes differ");
    if (a.v.empty()) throw std::invalid_argument(std::string(who) + ": empty input");
}

struct Moments {
    double mean_a = 0.0, mean_b = 0.0;
    double var_a = 0.0, var_b = 0.0;  // population (1/N)
    double cov = 0.0;
};

Moments moments(const double* a, const double* b, std::size_t n) {
    Moments mo;
    for (std::size_t i = 0; i < n; ++i) {
        mo.mean_a += a[i];
        mo.mean_b += b[i];
    }
    mo.mean_a /= static_cast<double>(n);
    mo.mean_b /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - mo.mean_a;
        const double db = b[i] - mo.mean_b;
        mo.var_a += da * da;
        mo.var_b += db * db;
        mo.cov += da * db;
    }
    mo.var_a /= static_cast<double>(n);
    mo.var_b /= static_cast<double>(n);
    mo.cov /= static_cast<double>(n);
    return mo;
}

double ssim_from_moments(const Moments& mo) {
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const double num = (2.0 * mo.mean_a * mo.mean_b + c1) * (2.0 * mo.cov + c2);
    const double den =
        (mo.mean_a * mo.mean_a + mo.mean_b * mo.mean_b + c1) * (mo.var_a + mo.var_b + c2);
    return num / den;
}

ScalarResult pcc_of(const double* a, const double* b, std::size_t n) {
    const Moments mo = moments(a, b, n);
    if (mo.var_a == 0.0) return {0.0, false, "constant prediction"};
    if (mo.var_b == 0.0) return {0.0, false, "constant target"};
    return {mo.cov / std::sqrt(mo.var_a * mo.var_b), true, {}};
}

// Average ranks: ties within a run of equal values all get the run's mean rank.
std::vector<double> average_ranks(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

std::string shortest(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void atomic_write(const std::string& path, const std::string& body) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp + " for writing");
        f << body;
        if (!f) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

}  // namespace

double ssim(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "ssim");
    return ssim_from_moments(moments(pred.v.data(), target.v.data(), pred.v.size()));
}

double ssim_windowed(const Tensor& pred, const Tensor& target, int window) {
    require_same_shape(pred, target, "ssim");
    if (pred.rank() != 2) throw std::invalid_argument("ssim: windowed form needs [h,w] maps");
    const int h = pred.dim(0), w = pred.dim(1);
    if (window < 1 || h < window || w < window)
        throw std::invalid_argument("ssim: window exceeds the map");
    std::vector<double> a(static_cast<std::size_t>(window) * window);
    std::vector<double> b(a.size());
    double total = 0.0;
    int count = 0;
    for (int i = 0; i + window <= h; ++i)
        for (int j = 0; j + window <= w; ++j) {
            std::size_t k = 0;
            for (int di = 0; di < window; ++di)
                for (int dj = 0; dj < window; ++dj, ++k) {
                    a[k] = pred.at(i + di, j + dj);
                    b[k] = target.at(i + di, j + dj);
                }
            total += ssim_from_moments(moments(a.data(), b.data(), a.size()));
            ++count;
        }
    return total / count;
}

PsnrResult psnr(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "psnr");
    double mse = 0.0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        const double d = pred.v[i] - target.v[i];
        mse += d * d;
    }
    mse /= static_cast<double>(pred.v.size());
    if (mse == 0.0) return {std::numeric_limits<double>::infinity(), true};
    return {10.0 * std::log10(1.0 / mse), false};
}

ScalarResult pcc(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "pcc");
    return pcc_of(pred.v.data(), target.v.data(), pred.v.size());
}

ScalarResult srcc(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "srcc");
    const std::vector<double> ra = average_ranks(pred.v);
    const std::vector<double> rb = average_ranks(target.v);
    return pcc_of(ra.data(), rb.data(), ra.size());
}

std::vector<DistancePcc> pcc_by_distance(const Tensor& pred, const Tensor& target,
                                         int max_distance) {
    require_same_shape(pred, target, "pcc by distance");
    if (pred.rank() != 2 || pred.dim(0) != pred.dim(1))
        throw std::invalid_argument("pcc by distance: maps must be square");
    const int n = pred.dim(0);
    std::vector<DistancePcc> out;
    for (int d = 0; d <= std::min(max_distance, n - 1); ++d) {
        std::vector<double> a, b;
        a.reserve(static_cast<std::size_t>(n - d));
        b.reserve(static_cast<std::size_t>(n - d));
        for (int i = 0; i + d < n; ++i) {
            a.push_back(pred.at(i, i + d));
            b.push_back(target.at(i, i + d));
        }
        const ScalarResult r = pcc_of(a.data(), b.data(), a.size());
        out.push_back({d, r.value, r.defined});
    }
    return out;
}

Tensor clamp01(Tensor x) {
    for (double& v : x.v) v = std::clamp(v, 0.0, 1.0);
    return x;
}

MetricReport evaluate_patches(const std::vector<Tensor>& pred,
                              const std::vector<Tensor>& target) {
    if (pred.size() != target.size() || pred.empty())
        throw std::invalid_argument("evaluate: need equally many prediction/target patches");
    MetricReport r;
    r.patches = static_cast<int>(pred.size());
    double psnr_sum = 0.0, pcc_sum = 0.0, srcc_sum = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const Tensor p = clamp01(pred[k]);
        r.ssim += ssim(p, target[k]);
        const PsnrResult ps = psnr(p, target[k]);
        if (ps.infinite)
            ++r.psnr_infinite;
        else
            psnr_sum += ps.value;
        const ScalarResult pc = pcc(p, target[k]);
        if (pc.defined)
            pcc_sum += pc.value;
        else
            ++r.pcc_undefined;
        const ScalarResult sr = srcc(p, target[k]);
        if (sr.defined)
            srcc_sum += sr.value;
        else
            ++r.srcc_undefined;
    }
    r.ssim /= r.patches;
    const int psnr_n = r.patches - r.psnr_infinite;
    const int pcc_n = r.patches - r.pcc_undefined;
    const int srcc_n = r.patches - r.srcc_undefined;
    r.psnr = psnr_n > 0 ? psnr_sum / psnr_n : 0.0;
    r.pcc = pcc_n > 0 ? pcc_sum / pcc_n : 0.0;
    r.srcc = srcc_n > 0 ? srcc_sum / srcc_n : 0.0;
    return r;
}

void write_report_csv(const MetricReport& r, const std::string& path) {
    std::ostringstream out;
    const bool all_inf = r.patches > 0 && r.psnr_infinite == r.patches;
    out << "metric,value,skipped\n";
    out << "ssim," << shortest(r.ssim) << ",0\n";
    out << "psnr," << (all_inf ? "inf" : shortest(r.psnr)) << ',' << r.psnr_infinite << '\n';
    out << "pcc," << shortest(r.pcc) << ',' << r.pcc_undefined << '\n';
    out << "srcc," << shortest(r.srcc) << ',' << r.srcc_undefined << '\n';
    out << "patches," << r.patches << ",0\n";
    atomic_write(path, out.str());
}

std::string format_report_text(const MetricReport& r) {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof(buf), "%-8s %10s   %s\n", "metric", "value", "notes");
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-8s %10.4f\n", "ssim", r.ssim);
    out += buf;
    if (r.patches > 0 && r.psnr_infinite == r.patches)
        std::snprintf(buf, sizeof(buf), "%-8s %10s   %d patch(es) with zero error\n", "psnr",
                      "inf", r.psnr_infinite);
    else
        std::snprintf(buf, sizeof(buf), "%-8s %10.4f   %d patch(es) with zero error\n", "psnr",
                      r.psnr, r.psnr_infinite);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-8s %10.4f   %d undefined\n", "pcc", r.pcc,
                  r.pcc_undefined);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-8s %10.4f   %d undefined\n", "srcc", r.srcc,
                  r.srcc_undefined);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-8s %10d\n", "patches", r.patches);
    out += buf;
    return out;
}

void write_distance_csv(const std::vector<DistancePcc>& rows, const std::string& path) {
    std::ostringstream out;
    out << "distance_bin,pcc,defined\n";
    for (const DistancePcc& r : rows)
        out << r.distance << ',' << shortest(r.value) << ',' << (r.defined ? 1 : 0) << '\n';
    atomic_write(path, out.str());
}

void LoopSets::validate() const {
    for (int l = 0; l < 2; ++l) {
        if (loops[static_cast<std::size_t>(l)] <= 0)
            throw std::invalid_argument("loop score: each cell line needs loops > 0");
        for (int s = 0; s < 2; ++s) {
            const long long a = overlap[static_cast<std::size_t>(l)][static_cast<std::size_t>(s)];
            if (a < 0 || a > loops[static_cast<std::size_t>(l)])
                throw std::invalid_argument(
                    "loop score: overlap counts must lie in [0, loops]");
        }
    }
}

LoopScoreTable loop_weighted_score(const LoopSets& sets) {
    sets.validate();
    LoopScoreTable t;
    for (int l = 0; l < 2; ++l)
        for (int s = 0; s < 2; ++s)
            t.p[static_cast<std::size_t>(l)][static_cast<std::size_t>(s)] =
                static_cast<double>(
                    sets.overlap[static_cast<std::size_t>(l)][static_cast<std::size_t>(s)]) /
                static_cast<double>(sets.loops[static_cast<std::size_t>(l)]);
    for (int s = 0; s < 2; ++s) {
        const double den = t.p[0][static_cast<std::size_t>(s)] + t.p[1][static_cast<std::size_t>(s)];
        if (den == 0.0) {
            t.defined[static_cast<std::size_t>(s)] = false;
            t.w[0][static_cast<std::size_t>(s)] = t.w[1][static_cast<std::size_t>(s)] =
                std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        for (int l = 0; l < 2; ++l)
            t.w[static_cast<std::size_t>(l)][static_cast<std::size_t>(s)] =
                t.p[static_cast<std::size_t>(l)][static_cast<std::size_t>(s)] / den;
    }
    return t;
}

}  // namespace hicenhance::metrics
