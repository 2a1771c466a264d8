#pragma once

#include <array>
#include <string>
#include <vector>

#include "hicenhance/tensor.hpp"

namespace hicenhance::metrics {

/// Correlation result; undefined (with a reason) when an input is constant.
struct ScalarResult {
    double value = 0.0;
    bool defined = true;
    std::string reason;
};

struct PsnrResult {
    double value = 0.0;
    bool infinite = false;  // zero mean squared error
};

/// Structural similarity from global image statistics (population variance),
/// C1 = 0.01^2, C2 = 0.03^2. Always in [-1, 1]; symmetric in its arguments.
double ssim(const Tensor& pred, const Tensor& target);

/// Mean SSIM over all dense window x window patches (uniform window).
/// Requires both sides >= window.
double ssim_windowed(const Tensor& pred, const Tensor& target, int window = 11);

/// 10 log10(1 / MSE) for values scaled to [0, 1].
PsnrResult psnr(const Tensor& pred, const Tensor& target);

/// Pearson correlation over flattened entries.
ScalarResult pcc(const Tensor& pred, const Tensor& target);

/// Spearman rank correlation; ties receive average ranks.
ScalarResult srcc(const Tensor& pred, const Tensor& target);

struct DistancePcc {
    int distance = 0;
    double value = 0.0;
    bool defined = true;
};

/// Pearson correlation of the d-th diagonals of two equal square maps, for
/// d = 0 .. min(max_distance, n-1). Constant diagonals are flagged undefined.
std::vector<DistancePcc> pcc_by_distance(const Tensor& pred, const Tensor& target,
                                         int max_distance);

/// Clamp a copy of the tensor into [0, 1] (predictions are clamped before
/// every metric so MAX = 1 stays meaningful).
Tensor clamp01(Tensor x);

/// Unweighted per-patch means over a paired set. Undefined or infinite
/// per-patch values are counted rather than averaged.
struct MetricReport {
    int patches = 0;
    double ssim = 0.0;
    double psnr = 0.0;  // mean over finite-psnr patches
    int psnr_infinite = 0;
    double pcc = 0.0;  // mean over defined patches
    int pcc_undefined = 0;
    double srcc = 0.0;
    int srcc_undefined = 0;
};

MetricReport evaluate_patches(const std::vector<Tensor>& pred,
                              const std::vector<Tensor>& target);

void write_report_csv(const MetricReport& r, const std::string& path);
std::string format_report_text(const MetricReport& r);
void write_distance_csv(const std::vector<DistancePcc>& rows, const std::string& path);

/// Loop/super-enhancer overlap counts for two cell lines: loops[l] is the
/// number of loops specific to line l, overlap[l][s] how many of them touch
/// a super-enhancer specific to line s.
struct LoopSets {
    std::array<long long, 2> loops{0, 0};
    std::array<std::array<long long, 2>, 2> overlap{{{0, 0}, {0, 0}}};

    void validate() const;  // loops > 0, 0 <= overlap[l][s] <= loops[l]
};

/// Per (line, enhancer-set) proportions p[l][s] = overlap[l][s] / loops[l]
/// and weighted scores w[l][s] = p[l][s] / (p[0][s] + p[1][s]). A zero
/// column denominator leaves that s undefined.
struct LoopScoreTable {
    std::array<std::array<double, 2>, 2> p{{{0, 0}, {0, 0}}};
    std::array<std::array<double, 2>, 2> w{{{0, 0}, {0, 0}}};
    std::array<bool, 2> defined{true, true};
};

LoopScoreTable loop_weighted_score(const LoopSets& sets);

}  // namespace hicenhance::metrics
