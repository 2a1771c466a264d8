#include <doctest.h>

#include <array>
#include <cmath>

#include "hicenhance/blocks.hpp"
#include "hicenhance/numerics.hpp"

using namespace hicenhance;

namespace {

Tensor random_map(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.v) v = rng.uniform(-1.0, 1.0);
    return t;
}

}  // namespace

TEST_CASE("cross_scan enumerated 2x2 paths and degenerate sizes") {
    Tensor m({1, 2, 2});
    m.v = {1.0, 2.0, 3.0, 4.0};
    auto paths = blocks::cross_scan(m);
    auto col = [&](int p) {
        std::vector<double> v;
        for (int t = 0; t < 4; ++t) v.push_back(paths[static_cast<std::size_t>(p)].at(t, 0));
        return v;
    };
    CHECK(col(0) == std::vector<double>{1, 2, 3, 4});
    CHECK(col(1) == std::vector<double>{4, 3, 2, 1});
    CHECK(col(2) == std::vector<double>{1, 3, 2, 4});
    CHECK(col(3) == std::vector<double>{4, 2, 3, 1});

    Tensor one({1, 1, 1});
    one.v = {7.0};
    for (const Tensor& p : blocks::cross_scan(one)) CHECK(p.at(0, 0) == 7.0);

    // One row: row-major equals column-major.
    Tensor row({2, 1, 5});
    Rng rng(3);
    for (double& v : row.v) v = rng.uniform(-1.0, 1.0);
    auto rp = blocks::cross_scan(row);
    for (int t = 0; t < 5; ++t)
        for (int c = 0; c < 2; ++c) CHECK(rp[0].at(t, c) == rp[2].at(t, c));
}

TEST_CASE("cross_merge inverts cross_scan: round trip is exactly 4x the map") {
    Rng rng(17);
    Tensor m = random_map({3, 5, 7}, rng);
    Tensor back = blocks::cross_merge(blocks::cross_scan(m), 5, 7);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(back.v[i] == 4.0 * m.v[i]);
}

TEST_CASE("cross_merge with one live path reproduces that path's map") {
    Rng rng(18);
    Tensor m = random_map({2, 3, 4}, rng);
    auto paths = blocks::cross_scan(m);
    std::array<Tensor, 4> only{Tensor({12, 2}), Tensor({12, 2}), Tensor({12, 2}),
                               Tensor({12, 2})};
    only[3] = paths[3];
    Tensor back = blocks::cross_merge(only, 3, 4);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(back.v[i] == m.v[i]);
}

TEST_CASE("cross_merge rejects length mismatches") {
    std::array<Tensor, 4> bad{Tensor({6, 2}), Tensor({6, 2}), Tensor({5, 2}), Tensor({6, 2})};
    CHECK_THROWS_AS(blocks::cross_merge(bad, 2, 3), std::invalid_argument);
}

TEST_CASE("layer_norm wrapper: gain 1 bias 0 sends [1,3] to about [-1,1]") {
    Tensor m({2, 1, 1});
    m.v = {1.0, 3.0};
    Tensor out = blocks::layer_norm(m, Tensor::full({2}, 1.0), Tensor({2}));
    CHECK(out.v[0] == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(out.v[1] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("ss2d with zero read-out projections is the zero map") {
    std::array<ssm::SsmParams, 4> params;
    Rng rng(21);
    for (auto& p : params) {
        p = ssm::SsmParams::make(4, 3);
        p.init(rng);
        p.w_c.fill(0.0);  // y_t = C h_t with C = 0
        p.bias_c.fill(0.0);
    }
    Tensor m = random_map({3, 4, 4}, rng);
    Tensor out = blocks::ss2d(m, params);
    REQUIRE(out.shape == m.shape);
    for (double v : out.v) CHECK(v == 0.0);
}

TEST_CASE("ss2d on a 1x1 map is the sum of four one-step scans of the pixel") {
    std::array<ssm::SsmParams, 4> params;
    Rng rng(22);
    for (auto& p : params) {
        p = ssm::SsmParams::make(3, 2);
        p.init(rng);
        for (double& v : p.bias_b.v) v = rng.uniform(-0.5, 0.5);
        for (double& v : p.bias_c.v) v = rng.uniform(-0.5, 0.5);
    }
    Tensor m({2, 1, 1});
    m.v = {0.7, -0.3};
    Tensor out = blocks::ss2d(m, params);

    for (int c = 0; c < 2; ++c) {
        double want = 0.0;
        for (auto& p : params) {
            // One step from h_0 = 0: y = C (B_bar x); hand-evaluated.
            const double dt = std::log1p(std::exp(p.delta_raw.at(c)));
            for (int i = 0; i < 3; ++i) {
                double araw = p.bias_a.at(i), braw = p.bias_b.at(i), craw = p.bias_c.at(i);
                for (int k = 0; k < 2; ++k) {
                    araw += p.w_a.at(i, k) * m.v[static_cast<std::size_t>(k)];
                    braw += p.w_b.at(i, k) * m.v[static_cast<std::size_t>(k)];
                    craw += p.w_c.at(i, k) * m.v[static_cast<std::size_t>(k)];
                }
                const double u = dt * -std::log1p(std::exp(araw));
                const double bbar = dt * braw * std::expm1(u) / u;
                want += craw * bbar * m.v[static_cast<std::size_t>(c)];
            }
        }
        CHECK(out.v[static_cast<std::size_t>(c)] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("ss2d output reacts to pixels that precede the probe on some path") {
    std::array<ssm::SsmParams, 4> params;
    Rng rng(23);
    for (auto& p : params) {
        p = ssm::SsmParams::make(2, 1);
        p.init(rng);
        for (double& v : p.bias_b.v) v = rng.uniform(0.1, 0.5);
        for (double& v : p.bias_c.v) v = rng.uniform(0.1, 0.5);
    }
    Rng drng(24);
    Tensor m = random_map({1, 3, 3}, rng);
    Tensor base = blocks::ss2d(m, params);
    // Every pixel precedes the center on at least one of the four paths, so a
    // finite perturbation anywhere must reach the center output.
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            Tensor m2 = m;
            m2.at(0, i, j) += 0.25;
            Tensor out = blocks::ss2d(m2, params);
            CHECK(out.at(0, 1, 1) != base.at(0, 1, 1));
        }
}

TEST_CASE("lefn with all-zero weights collapses to the zero map") {
    blocks::LefnLayer l = blocks::LefnLayer::make(3, 6);
    Rng rng(25);
    Tensor m = random_map({3, 4, 5}, rng);
    Tensor out = blocks::lefn(m, l);
    REQUIRE(out.shape == m.shape);
    for (double v : out.v) CHECK(v == 0.0);  // GELU(0) = 0 through all three layers
}

TEST_CASE("lefn with identity kernels is a triple GELU") {
    const int c = 2;
    blocks::LefnLayer l = blocks::LefnLayer::make(c, c);
    for (int i = 0; i < c; ++i) {
        l.expand.w.at(i, i, 0, 0) = 1.0;
        l.spatial.w.at(i, i, 1, 1) = 1.0;  // center tap of the 3x3
        l.project.w.at(i, i, 0, 0) = 1.0;
    }
    Rng rng(26);
    Tensor m = random_map({c, 3, 3}, rng);
    Tensor out = blocks::lefn(m, l);
    for (std::size_t i = 0; i < m.size(); ++i)
        CHECK(out.v[i] == doctest::Approx(gelu(gelu(gelu(m.v[i])))).epsilon(1e-14));
}

TEST_CASE("lefn support is local: Chebyshev radius 1") {
    blocks::LefnLayer l = blocks::LefnLayer::make(2, 4);
    Rng rng(27);
    l.init(rng);
    for (double& v : l.expand.b.v) v = rng.uniform(-0.2, 0.2);
    for (double& v : l.spatial.b.v) v = rng.uniform(-0.2, 0.2);
    for (double& v : l.project.b.v) v = rng.uniform(-0.2, 0.2);
    Tensor m = random_map({2, 7, 7}, rng);
    Tensor base = blocks::lefn(m, l);
    Tensor m2 = m;
    m2.at(1, 3, 3) += 0.5;
    Tensor out = blocks::lefn(m2, l);
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 7; ++j) {
                const bool inside = std::abs(i - 3) <= 1 && std::abs(j - 3) <= 1;
                if (!inside) CHECK(out.at(c, i, j) == base.at(c, i, j));
            }
    CHECK(out.at(0, 3, 3) != base.at(0, 3, 3));
}

TEST_CASE("holistic block with zero mixer and ffn weights is the identity") {
    blocks::HolisticBlock b = blocks::HolisticBlock::make(3, 4, 6);
    // make() leaves every conv/scan weight zero; norms are gain 1 / bias 0.
    Rng rng(28);
    Tensor m = random_map({3, 4, 4}, rng);
    Tensor out = blocks::holistic_scan_block(m, b);
    REQUIRE(out.shape == m.shape);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(out.v[i] == m.v[i]);
}

TEST_CASE("holistic block preserves shape for assorted configurations") {
    Rng rng(29);
    for (auto [c, h, w] : {std::tuple{2, 4, 4}, {4, 3, 5}, {6, 2, 2}}) {
        blocks::HolisticBlock b = blocks::HolisticBlock::make(c, 3, 2 * c);
        b.init(rng);
        Tensor m = random_map({c, h, w}, rng);
        Tensor out = blocks::holistic_scan_block(m, b);
        CHECK(out.shape == m.shape);
        for (double v : out.v) CHECK(std::isfinite(v));
    }
}

TEST_CASE("holistic block: gradient from a center output reaches every input pixel") {
    const int c = 2, h = 5, w = 5;
    blocks::HolisticBlock blk = blocks::HolisticBlock::make(c, 3, 2 * c);
    Rng rng(30);
    blk.init(rng);
    // Lift the scan read-out so path contributions are well above noise.
    for (auto& p : blk.mixer.p) {
        for (double& v : p.bias_b.v) v = rng.uniform(0.2, 0.6);
        for (double& v : p.bias_c.v) v = rng.uniform(0.2, 0.6);
    }
    ad::Tape t;
    Tensor x = random_map({1, c, h, w}, rng);
    const int xn = ad::input(t, x);
    const int out = blk.apply(t, xn);
    t.grad(out).at(0, 0, h / 2, w / 2) = 1.0;
    t.backward(out);
    int nonzero = 0;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double mass = 0.0;
            for (int ci = 0; ci < c; ++ci) mass += std::abs(t.grad(xn).at(0, ci, i, j));
            if (mass > 0.0) ++nonzero;
        }
    CHECK(nonzero == h * w);
}

TEST_CASE("flop tallies follow the layer dimensions") {
    blocks::Conv2dLayer conv = blocks::Conv2dLayer::make(3, 8, 3, 1, 1);
    CHECK(conv.flops(10, 10) == 2ull * 9 * 3 * 8 * 10 * 10);
    blocks::Conv2dLayer down = blocks::Conv2dLayer::make(4, 8, 2, 2, 0);
    CHECK(down.flops(10, 10) == 2ull * 4 * 4 * 8 * 5 * 5);
    blocks::TransposeConv2x2Layer up = blocks::TransposeConv2x2Layer::make(8, 4);
    CHECK(up.flops(5, 5) == 2ull * 4 * 8 * 4 * 5 * 5);
    blocks::LayerNormLayer ln = blocks::LayerNormLayer::make(6);
    CHECK(ln.flops(4, 4) == 2ull * 4 * 6 * 4 * 4);
    blocks::Ss2dLayer ss = blocks::Ss2dLayer::make(6, 4);
    CHECK(ss.flops(4, 4) == 4ull * (2 * 3 * 16 * 6 * 4 + 2 * 6 * 16 * 6 * 4));
    blocks::LefnLayer lf = blocks::LefnLayer::make(4, 16);
    CHECK(lf.flops(4, 4) == 2ull * 4 * 16 * 16 + 2ull * 9 * 16 * 16 * 16 + 2ull * 16 * 4 * 16);
}
