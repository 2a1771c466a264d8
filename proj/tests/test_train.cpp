// Optimizer and training loop: closed-form Adam oracles, an independent
// straight-line Adam re-implementation, determinism contracts, and the
// finite-difference gradient-check harness.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "hicenhance/pipeline.hpp"
#include "hicenhance/train.hpp"

namespace tr = hicenhance::train;
namespace md = hicenhance::model;
using hicenhance::Tensor;
using hicenhance::ad::ParamRef;

namespace {

// A single scalar "model parameter" with a settable gradient.
struct Scalar {
    Tensor w{{1}};
    Tensor g{{1}};
    ParamRef ref() { return ParamRef{"w", &w, &g}; }
};

tr::Dataset make_dataset(int count, int side, std::uint64_t seed) {
    hicenhance::Rng rng(seed);
    tr::Dataset data;
    for (int k = 0; k < count; ++k) {
        tr::Sample s;
        s.input = Tensor({side, side});
        s.target = Tensor({side, side});
        for (double& v : s.input.v) v = rng.uniform(0.0, 1.0);
        for (double& v : s.target.v) v = rng.uniform(0.0, 1.0);
        data.push_back(std::move(s));
    }
    return data;
}

md::Model tiny_model(int c, int side, int state, std::uint64_t seed,
                     bool baseline = false) {
    md::ModelConfig cfg;
    cfg.c = c;
    cfg.blocks_per_stage = 1;
    cfg.state_size = state;
    cfg.side = side;
    cfg.baseline_only = baseline;
    md::Model m = md::Model::make(cfg);
    m.init(seed);
    return m;
}

}  // namespace

TEST_CASE("mean absolute error evaluates hand examples") {
    Tensor a({2, 2}), b({2, 2});
    a.v = {0.0, 1.0, 1.0, 0.0};
    b.v = {1.0, 1.0, 0.0, 0.0};
    CHECK(tr::l1_value(a, b) == 0.5);
    CHECK(tr::l1_value(a, a) == 0.0);

    Tensor c = a;
    for (double& v : c.v) v += 0.5;
    CHECK(tr::l1_value(c, a) == 0.5);

    Tensor wrong({3});
    CHECK_THROWS_AS(tr::l1_value(a, wrong), std::invalid_argument);

    // Non-negative, and zero only at equality.
    hicenhance::Rng rng(8);
    Tensor x({4, 4}), y({4, 4});
    for (int k = 0; k < 16; ++k) {
        x.v[static_cast<std::size_t>(k)] = rng.uniform(-1.0, 1.0);
        y.v[static_cast<std::size_t>(k)] = rng.uniform(-1.0, 1.0);
    }
    CHECK(tr::l1_value(x, y) > 0.0);
}

TEST_CASE("training config validation rejects bad hyperparameters") {
    tr::TrainConfig ok;
    CHECK_NOTHROW(ok.validate());
    ok.lr = 0.0;  // explicitly allowed: a frozen run must still work
    CHECK_NOTHROW(ok.validate());

    tr::TrainConfig bad;
    bad.lr = -1e-4;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.beta1 = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.beta2 = -0.1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.eps = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("adam leaves parameters untouched under zero gradients") {
    Scalar p;
    p.w.v[0] = 0.713;
    auto params = std::vector<ParamRef>{p.ref()};
    tr::OptimizerState st = tr::OptimizerState::make(params);
    tr::TrainConfig cfg;
    for (int k = 0; k < 5; ++k) tr::adam_step(params, st, cfg);
    CHECK(p.w.v[0] == 0.713);
    CHECK(st.step == 5);
}

TEST_CASE("first adam step with unit gradient moves by lr over one plus eps") {
    Scalar p;
    p.g.v[0] = 1.0;
    auto params = std::vector<ParamRef>{p.ref()};
    tr::OptimizerState st = tr::OptimizerState::make(params);
    tr::TrainConfig cfg;
    tr::adam_step(params, st, cfg);
    // Bias correction makes mhat = 1 and vhat = 1 exactly at step one.
    const double expect = -cfg.lr * 1.0 / (1.0 + cfg.eps);
    CHECK(p.w.v[0] == doctest::Approx(expect).epsilon(1e-15));
    CHECK(std::abs(std::abs(p.w.v[0]) - cfg.lr) <= 2e-8 * cfg.lr);
}

TEST_CASE("constant gradients drive the adam step magnitude to lr") {
    // With a constant gradient g, mhat = g and vhat = g^2 at every step, so
    // the update magnitude approaches lr regardless of |g|.
    for (double g : {1e-3, 1.0, 100.0}) {
        Scalar p;
        p.g.v[0] = g;
        auto params = std::vector<ParamRef>{p.ref()};
        tr::OptimizerState st = tr::OptimizerState::make(params);
        tr::TrainConfig cfg;
        double prev = p.w.v[0];
        double delta = 0.0;
        for (int k = 0; k < 1000; ++k) {
            prev = p.w.v[0];
            tr::adam_step(params, st, cfg);
            delta = p.w.v[0] - prev;
        }
        CHECK(std::abs(std::abs(delta) - cfg.lr) <= 1e-3 * cfg.lr);
        CHECK(delta < 0.0);  // descends against a positive gradient
    }
    // Negative constant gradient ascends.
    Scalar p;
    p.g.v[0] = -2.0;
    auto params = std::vector<ParamRef>{p.ref()};
    tr::OptimizerState st = tr::OptimizerState::make(params);
    tr::TrainConfig cfg;
    tr::adam_step(params, st, cfg);
    CHECK(p.w.v[0] > 0.0);
}

TEST_CASE("adam matches an independent straight-line reference") {
    // Two tensors, random gradient sequence, recomputed here with nothing
    // shared with the implementation.
    hicenhance::Rng rng(99);
    Tensor w1({3}), g1({3}), w2({2, 2}), g2({2, 2});
    for (double& v : w1.v) v = rng.uniform(-1.0, 1.0);
    for (double& v : w2.v) v = rng.uniform(-1.0, 1.0);
    std::vector<ParamRef> params{{"a", &w1, &g1}, {"b", &w2, &g2}};

    tr::TrainConfig cfg;
    cfg.lr = 3e-3;
    cfg.beta1 = 0.8;
    cfg.beta2 = 0.95;
    cfg.eps = 1e-7;
    tr::OptimizerState st = tr::OptimizerState::make(params);

    std::vector<double> rw = w1.v;  // reference copies
    std::vector<double> rw2 = w2.v;
    std::vector<double> rm(3, 0.0), rv(3, 0.0), rm2(4, 0.0), rv2(4, 0.0);

    hicenhance::Rng gseq(7);
    for (int step = 1; step <= 50; ++step) {
        for (double& v : g1.v) v = gseq.uniform(-2.0, 2.0);
        for (double& v : g2.v) v = gseq.uniform(-2.0, 2.0);

        auto ref_update = [&](std::vector<double>& w, std::vector<double>& m,
                              std::vector<double>& v, const std::vector<double>& g) {
            for (std::size_t k = 0; k < w.size(); ++k) {
                m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * g[k];
                v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * g[k] * g[k];
                const double mhat = m[k] / (1 - std::pow(cfg.beta1, step));
                const double vhat = v[k] / (1 - std::pow(cfg.beta2, step));
                w[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            }
        };
        ref_update(rw, rm, rv, g1.v);
        ref_update(rw2, rm2, rv2, g2.v);
        tr::adam_step(params, st, cfg);

        for (int k = 0; k < 3; ++k)
            CHECK(w1.v[static_cast<std::size_t>(k)] ==
                  doctest::Approx(rw[static_cast<std::size_t>(k)]).epsilon(1e-14));
        for (int k = 0; k < 4; ++k)
            CHECK(w2.v[static_cast<std::size_t>(k)] ==
                  doctest::Approx(rw2[static_cast<std::size_t>(k)]).epsilon(1e-14));
    }
}

TEST_CASE("gradient clipping rescales the whole update direction") {
    Scalar p;
    p.g.v[0] = 1000.0;
    auto params = std::vector<ParamRef>{p.ref()};
    tr::OptimizerState st = tr::OptimizerState::make(params);
    tr::TrainConfig cfg;
    cfg.grad_clip = 1.0;  // clips g to 1, so the first step equals lr/(1+eps)
    tr::adam_step(params, st, cfg);
    CHECK(p.w.v[0] == doctest::Approx(-cfg.lr / (1.0 + cfg.eps)).epsilon(1e-12));
}

TEST_CASE("a tiny model overfits eight patches") {
    // Eight structured low/high-coverage patch pairs from the synthetic
    // generator, the generator's own intended training data at desk scale.
    namespace pl = hicenhance::pipeline;
    const pl::ContactMap raw = pl::synthesize_map(40, 77);
    const pl::Normalized target_map = pl::normalize_values(raw);
    const pl::Normalized input_map =
        pl::normalize_values(pl::downsample_reads(raw, 1.0 / 16.0, 77));
    const pl::PatchSet in_ps = pl::extract_patches(input_map.map, 8);
    const pl::PatchSet tg_ps = pl::extract_patches(target_map.map, 8);
    tr::Dataset data;
    for (std::size_t k = 0; k < 8; ++k)
        data.push_back({in_ps.patches[k].data, tg_ps.patches[k].data});

    md::Model m = tiny_model(4, 8, 4, 21);
    tr::TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.lr = 5e-3;
    cfg.epochs = 200;  // one step per epoch at batch 8
    cfg.seed = 1;
    const tr::TrainResult r = tr::train(m, data, {}, cfg);
    REQUIRE(r.history.size() == 200);
    CHECK(r.history.back().step == 200);
    CHECK(r.history.back().train_l1 < 0.1 * r.history.front().train_l1);
}

TEST_CASE("training is deterministic for a fixed seed") {
    const tr::Dataset data = make_dataset(6, 8, 11);
    tr::TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.lr = 1e-3;
    cfg.epochs = 5;
    cfg.seed = 123;

    md::Model m1 = tiny_model(2, 8, 2, 3);
    md::Model m2 = tiny_model(2, 8, 2, 3);
    const tr::TrainResult r1 = tr::train(m1, data, data, cfg);
    const tr::TrainResult r2 = tr::train(m2, data, data, cfg);
    REQUIRE(r1.history.size() == r2.history.size());
    for (std::size_t k = 0; k < r1.history.size(); ++k) {
        CHECK(r1.history[k].train_l1 == r2.history[k].train_l1);
        CHECK(r1.history[k].val_l1 == r2.history[k].val_l1);
        CHECK(r1.history[k].step == r2.history[k].step);
    }
    const auto p1 = m1.params(), p2 = m2.params();
    for (std::size_t i = 0; i < p1.size(); ++i)
        CHECK(p1[i].value->v == p2[i].value->v);
}

TEST_CASE("zero learning rate freezes the loss history") {
    const tr::Dataset data = make_dataset(6, 8, 11);
    tr::TrainConfig cfg;
    cfg.batch_size = 4;  // ragged final batch: the mean must still be stable
    cfg.lr = 0.0;
    cfg.epochs = 4;
    cfg.seed = 9;
    md::Model m = tiny_model(2, 8, 2, 3);
    const tr::TrainResult r = tr::train(m, data, data, cfg);
    for (const tr::HistoryRow& row : r.history) {
        // Shuffling regroups the batches, so the sample-weighted epoch mean
        // is identical up to summation order.
        CHECK(row.train_l1 == doctest::Approx(r.history.front().train_l1).epsilon(1e-14));
        CHECK(row.val_l1 == r.history.front().val_l1);
    }
}

TEST_CASE("the retained checkpoint is the best validation epoch") {
    const tr::Dataset train_set = make_dataset(8, 8, 17);
    const tr::Dataset val_set = make_dataset(4, 8, 18);
    tr::TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.lr = 3e-3;
    cfg.epochs = 12;
    cfg.seed = 2;
    md::Model m = tiny_model(2, 8, 2, 6);
    const auto path = (std::filesystem::temp_directory_path() / "he_best.ckpt").string();
    const tr::TrainResult r = tr::train(m, train_set, val_set, cfg, path);

    double min_val = r.history.front().val_l1;
    for (const tr::HistoryRow& row : r.history) min_val = std::min(min_val, row.val_l1);
    CHECK(r.best_val == min_val);
    CHECK(r.best_val <= r.history.back().val_l1);
    CHECK(r.best_epoch >= 1);

    // Restoring the snapshot reproduces the recorded best validation loss.
    tr::apply_snapshot(m, r.best_params);
    CHECK(tr::evaluate_l1(m, val_set, cfg.batch_size) == r.best_val);

    // The checkpoint on disk stores f32 weights, so its reload matches to
    // single precision.
    md::Model loaded = md::Model::load(path);
    CHECK(tr::evaluate_l1(loaded, val_set, cfg.batch_size) ==
          doctest::Approx(r.best_val).epsilon(1e-5));
}

TEST_CASE("non-finite losses abort with step diagnostics") {
    md::Model m = tiny_model(2, 8, 2, 4);
    m.params()[0].value->v[0] = std::nan("");
    const tr::Dataset data = make_dataset(4, 8, 3);
    tr::TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 1;
    try {
        tr::train(m, data, {}, cfg);
        FAIL("expected an abort");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("non-finite") != std::string::npos);
        CHECK(msg.find("step 1") != std::string::npos);
        CHECK(msg.find("batch") != std::string::npos);
    }
}

TEST_CASE("zero-target patches can be dropped from training") {
    tr::Dataset data = make_dataset(4, 8, 30);
    data[1].target.fill(0.0);
    data[3].target.fill(0.0);

    tr::TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.lr = 0.0;
    cfg.epochs = 1;
    cfg.drop_zero_targets = true;
    md::Model m = tiny_model(2, 8, 2, 4);
    const tr::TrainResult with_drop = tr::train(m, data, {}, cfg);

    // The frozen-epoch loss must equal the mean over exactly the two kept
    // samples, which an independent evaluation reproduces.
    const tr::Dataset kept{data[0], data[2]};
    CHECK(with_drop.history.front().train_l1 ==
          doctest::Approx(tr::evaluate_l1(m, kept, 8)).epsilon(1e-15));

    tr::Dataset all_zero(2, data[1]);
    CHECK_THROWS_AS(tr::train(m, all_zero, {}, cfg), std::invalid_argument);
}

TEST_CASE("loss history lands on disk as csv") {
    std::vector<tr::HistoryRow> rows{{1, 1, 0.5, 0.6}, {2, 2, 0.25, 0.4}};
    const auto path = (std::filesystem::temp_directory_path() / "he_hist.csv").string();
    tr::write_history_csv(rows, path);
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line == "step,train_l1,val_l1");
    std::getline(f, line);
    CHECK(line == "1,0.5,0.6");
    std::getline(f, line);
    CHECK(line == "2,0.25,0.4");
}

TEST_CASE("gradient check passes on a small full model") {
    // side 4 collapses the bottleneck to 1x1 but still runs every layer.
    md::Model m = tiny_model(2, 4, 2, 13);
    hicenhance::Rng rng(40);
    Tensor input({4, 4}), base({4, 4});
    for (double& v : input.v) v = rng.uniform(0.0, 1.0);
    // Keep the L1 kink far away from every perturbed prediction: offset the
    // model's own output by +-0.3 per pixel.
    base = m.forward_map(input);
    Tensor target = base;
    for (std::size_t k = 0; k < target.v.size(); ++k)
        target.v[k] += (k % 2 == 0 ? 0.3 : -0.3);

    const tr::GradCheckReport report = tr::grad_check(m, input, target);
    CHECK(report.max_rel_err <= 1e-4);
    CHECK(report.passed(1e-4));
    REQUIRE(!report.entries.empty());
    for (std::size_t k = 1; k < report.entries.size(); ++k)
        CHECK(report.entries[k - 1].rel_err >= report.entries[k].rel_err);
    CHECK(report.entries.front().rel_err == report.max_rel_err);
}

TEST_CASE("unused parameters check out as zero both ways") {
    // The locality baseline never touches the scan blocks, so their
    // gradients must be zero analytically and by finite differences.
    md::Model m = tiny_model(2, 4, 2, 14, /*baseline=*/true);
    hicenhance::Rng rng(41);
    Tensor input({4, 4});
    for (double& v : input.v) v = rng.uniform(0.0, 1.0);
    Tensor target = m.forward_map(input);
    for (std::size_t k = 0; k < target.v.size(); ++k)
        target.v[k] += (k % 2 == 0 ? 0.3 : -0.3);

    const tr::GradCheckReport report = tr::grad_check(m, input, target);
    CHECK(report.passed(1e-4));
    bool saw_scan_param = false;
    for (const tr::GradCheckEntry& e : report.entries)
        if (e.name.find("enc1") != std::string::npos) {
            saw_scan_param = true;
            CHECK(e.analytic == 0.0);
            CHECK(e.numeric == 0.0);
        }
    CHECK(saw_scan_param);
}
