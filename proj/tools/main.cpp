// hicenhance: command-line front end for the contact-map enhancement library.
//
// Subcommands cover the full workflow: synthesize test data, preprocess a map
// into paired training patches, train a model, enhance a map with a trained
// checkpoint, evaluate predictions, and inspect cost (flops), receptive field
// (erf), and loop/enhancer overlap scores (loopscore).
//
// Every subcommand reads its settings from three layers with increasing
// precedence: built-in defaults, an optional key=value --config file, then
// explicit command-line flags. --dump-config prints the merged result and
// exits. Exit codes: 0 success, 1 numeric failure, 2 usage or I/O error.

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hicenhance/errors.hpp"
#include "hicenhance/metrics.hpp"
#include "hicenhance/model.hpp"
#include "hicenhance/pipeline.hpp"
#include "hicenhance/runconfig.hpp"
#include "hicenhance/train.hpp"

namespace {

namespace pl = hicenhance::pipeline;
namespace md = hicenhance::model;
namespace tr = hicenhance::train;
namespace mt = hicenhance::metrics;
using hicenhance::Tensor;
using hicenhance::cli::RunConfig;

// ---------------------------------------------------------------------------
// Config plumbing: each subcommand owns a RunConfig plus the CLI11 bindings
// that feed explicitly-given flags into it after the config file is merged.

struct CommandConfig {
    RunConfig rc;
    std::deque<std::string> captured;  // stable storage for CLI11 references
    std::vector<std::pair<CLI::Option*, std::string>> bindings;
    std::string config_path;
    bool dump = false;

    explicit CommandConfig(std::vector<std::pair<std::string, std::string>> defaults)
        : rc(std::move(defaults)) {}

    CLI::Option* bind(CLI::App* cmd, const std::string& flag, const std::string& key,
                      const std::string& desc) {
        captured.emplace_back();
        CLI::Option* opt = cmd->add_option(flag, captured.back(), desc);
        bindings.emplace_back(opt, key);
        return opt;
    }

    void add_common(CLI::App* cmd) {
        cmd->add_option("--config", config_path,
                        "key=value config file (explicit flags override it)");
        cmd->add_flag("--dump-config", dump, "print the effective configuration and exit");
    }

    /// defaults < config file < explicit flags. Returns false after printing
    /// the effective configuration for --dump-config.
    bool merge() {
        if (!config_path.empty()) rc.load_file(config_path);
        for (std::size_t i = 0; i < bindings.size(); ++i)
            if (bindings[i].first->count() > 0) rc.set(bindings[i].second, captured[i]);
        if (dump) {
            rc.dump(std::cout);
            return false;
        }
        return true;
    }
};

// ---------------------------------------------------------------------------
// Small helpers shared by the command implementations.

const std::string& require_key(const RunConfig& rc, const std::string& key,
                               const std::string& flag) {
    const std::string& v = rc.get_string(key);
    if (v.empty())
        throw std::runtime_error("missing required setting '" + key + "' (flag " + flag + ")");
    return v;
}

std::uint64_t as_seed(long long v) {
    if (v < 0) throw std::runtime_error("seed must be non-negative");
    return static_cast<std::uint64_t>(v);
}

pl::MapFormat parse_format(const std::string& s) {
    if (s == "coo") return pl::MapFormat::coo;
    if (s == "dense") return pl::MapFormat::dense;
    throw std::runtime_error("unknown map format '" + s + "' (expected coo or dense)");
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<long long> split_ints(const std::string& s, std::size_t expected,
                                  const std::string& what) {
    const std::vector<std::string> parts = split_csv(s);
    if (parts.size() != expected)
        throw std::runtime_error(what + " expects " + std::to_string(expected) +
                                 " comma-separated integers, got '" + s + "'");
    std::vector<long long> out;
    for (const std::string& p : parts) {
        long long v = 0;
        const auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), v);
        if (ec != std::errc{} || ptr != p.data() + p.size())
            throw std::runtime_error(what + ": '" + p + "' is not an integer");
        out.push_back(v);
    }
    return out;
}

std::string shortest(double v) {  // shortest decimal digits that round-trip
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

void write_text_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc | std::ios::binary);
        if (!f) throw std::runtime_error("cannot open " + tmp + " for writing");
        f << text;
        if (!f) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

const char* subset_name(pl::Subset s) {
    switch (s) {
        case pl::Subset::validation: return "validation";
        case pl::Subset::test: return "test";
        default: return "train";
    }
}

md::ModelConfig model_config_from(const RunConfig& rc, bool baseline) {
    md::ModelConfig mc;
    mc.c = static_cast<int>(rc.get_int("c"));
    mc.blocks_per_stage = static_cast<int>(rc.get_int("blocks"));
    mc.state_size = static_cast<int>(rc.get_int("state"));
    mc.side = static_cast<int>(rc.get_int("side"));
    mc.global_residual = rc.get_bool("global_residual");
    mc.baseline_only = baseline;
    mc.validate();
    return mc;
}

// ---------------------------------------------------------------------------
// synthesize

void run_synthesize(const RunConfig& rc) {
    pl::SynthParams p;
    p.scale = rc.get_double("scale");
    p.with_tads = rc.get_bool("tads");
    p.with_loops = rc.get_bool("loops");
    const int n = static_cast<int>(rc.get_int("n"));
    const std::uint64_t seed = as_seed(rc.get_int("seed"));
    const std::string& out = require_key(rc, "out", "--out");
    const std::string fmt_name = rc.get_string("format");

    const pl::ContactMap m = pl::synthesize_map(n, seed, p);
    pl::save_map(m, out, parse_format(fmt_name));
    std::cout << "wrote " << n << "x" << n << " " << fmt_name << " map to " << out << "\n";
}

// ---------------------------------------------------------------------------
// preprocess

void run_preprocess(const RunConfig& rc) {
    const std::string& in = require_key(rc, "in", "--in");
    const std::string& outdir = require_key(rc, "out", "--out");
    const double ratio = rc.get_double("ratio");
    const std::uint64_t seed = as_seed(rc.get_int("seed"));
    const int side = static_cast<int>(rc.get_int("side"));
    const double tol = rc.get_double("tol");
    const int maxiter = static_cast<int>(rc.get_int("maxiter"));

    pl::ContactMap raw = pl::load_map(in);
    const std::string chrom = rc.get_string("chrom");
    if (!chrom.empty()) raw.chrom = chrom;
    const pl::Subset split = pl::classify_chromosome(raw.chrom);

    const pl::ContactMap balanced = pl::balance(raw, tol, maxiter);
    const pl::Normalized target = pl::normalize_values(balanced);
    const pl::ContactMap low = pl::downsample_reads(balanced, ratio, seed);
    const pl::Normalized input = pl::normalize_values(low);

    pl::PatchSet target_ps = pl::extract_patches(target.map, side);
    pl::PatchSet input_ps = pl::extract_patches(input.map, side);
    target_ps.chrom = input_ps.chrom = raw.chrom;

    std::filesystem::create_directories(outdir);
    pl::save_patches(input_ps, outdir + "/input.patches");
    pl::save_patches(target_ps, outdir + "/target.patches");

    nlohmann::json j;
    j["chrom"] = raw.chrom;
    j["n"] = raw.n;
    j["bin_size"] = raw.bin_size;
    j["ratio"] = ratio;
    j["seed"] = seed;
    j["side"] = side;
    j["blocks"] = input_ps.blocks;
    j["patches"] = input_ps.patches.size();
    j["split"] = subset_name(split);
    j["input_scale"] = input.scale;
    j["target_scale"] = target.scale;
    j["input_archive"] = "input.patches";
    j["target_archive"] = "target.patches";
    write_text_atomic(outdir + "/manifest.json", j.dump(2) + "\n");

    std::cout << "wrote " << input_ps.patches.size() << " patch pair(s) (side " << side
              << ", split " << subset_name(split) << ") to " << outdir << "\n";
}

// ---------------------------------------------------------------------------
// train

struct LoadedDir {
    std::string split;
    pl::PatchSet input, target;
};

LoadedDir load_data_dir(const std::string& dir, int side) {
    const std::string mpath = dir + "/manifest.json";
    std::ifstream mf(mpath);
    if (!mf) throw std::runtime_error("cannot open " + mpath);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(mf);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(mpath + ": " + e.what());
    }
    LoadedDir d;
    d.split = j.value("split", "train");
    d.input = pl::load_patches(dir + "/" + j.value("input_archive", "input.patches"));
    d.target = pl::load_patches(dir + "/" + j.value("target_archive", "target.patches"));
    if (d.input.side != side || d.target.side != side)
        throw std::runtime_error(dir + ": patch side " + std::to_string(d.input.side) +
                                 " does not match the model side " + std::to_string(side));
    if (d.input.patches.size() != d.target.patches.size())
        throw std::runtime_error(dir + ": input/target patch counts differ");
    for (std::size_t i = 0; i < d.input.patches.size(); ++i) {
        const pl::Patch& a = d.input.patches[i];
        const pl::Patch& b = d.target.patches[i];
        if (a.row_block != b.row_block || a.col_block != b.col_block)
            throw std::runtime_error(dir + ": input/target patch origins differ at entry " +
                                     std::to_string(i));
    }
    return d;
}

void run_train(const RunConfig& rc) {
    const std::vector<std::string> dirs = split_csv(require_key(rc, "data", "--data"));
    const std::string& ckpt = require_key(rc, "out", "--out");
    std::string history = rc.get_string("history");
    if (history.empty()) history = ckpt + ".history.csv";

    const md::ModelConfig mc = model_config_from(rc, /*baseline=*/false);

    tr::TrainConfig tc;
    tc.batch_size = static_cast<int>(rc.get_int("batch"));
    tc.lr = rc.get_double("lr");
    tc.beta1 = rc.get_double("beta1");
    tc.beta2 = rc.get_double("beta2");
    tc.eps = rc.get_double("eps");
    tc.epochs = static_cast<int>(rc.get_int("epochs"));
    tc.seed = as_seed(rc.get_int("seed"));
    tc.checkpoint_every = static_cast<int>(rc.get_int("checkpoint_every"));
    tc.grad_clip = rc.get_double("clip");
    tc.weight_decay = rc.get_double("decay");
    tc.drop_zero_targets = rc.get_bool("drop_zero_targets");
    tc.validate();

    tr::Dataset train_set, val_set;
    int skipped_test = 0;
    for (const std::string& dir : dirs) {
        LoadedDir d = load_data_dir(dir, mc.side);
        if (d.split == "test") {
            ++skipped_test;
            continue;
        }
        tr::Dataset& dst = (d.split == "validation") ? val_set : train_set;
        for (std::size_t i = 0; i < d.input.patches.size(); ++i)
            dst.push_back({std::move(d.input.patches[i].data), std::move(d.target.patches[i].data)});
    }
    if (train_set.empty())
        throw std::runtime_error("no training patches: every --data directory was empty, "
                                 "validation, or test");

    md::Model model = md::Model::make(mc);
    model.init(tc.seed);
    std::cout << "training on " << train_set.size() << " patch pair(s), validating on "
              << val_set.size();
    if (skipped_test > 0) std::cout << " (skipped " << skipped_test << " test dir(s))";
    std::cout << "\nmodel: c=" << mc.c << " blocks=" << mc.blocks_per_stage
              << " state=" << mc.state_size << " side=" << mc.side
              << " parameters=" << model.param_count() << "\n";

    const tr::TrainResult res = tr::train(model, train_set, val_set, tc, ckpt);
    tr::write_history_csv(res.history, history);

    const tr::HistoryRow& last = res.history.back();
    std::cout << "epochs " << tc.epochs << ", steps " << last.step << ": train L1 "
              << shortest(last.train_l1) << ", best "
              << (val_set.empty() ? "train" : "validation") << " L1 " << shortest(res.best_val)
              << " at epoch " << res.best_epoch << "\ncheckpoint: " << ckpt
              << "\nhistory: " << history << "\n";
}

// ---------------------------------------------------------------------------
// enhance

void run_enhance(const RunConfig& rc) {
    const std::string& in = require_key(rc, "in", "--in");
    const std::string& model_path = require_key(rc, "model", "--model");
    const std::string& out = require_key(rc, "out", "--out");
    const pl::MapFormat fmt = parse_format(rc.get_string("format"));
    const bool denorm = rc.get_bool("denormalize");
    const double tol = rc.get_double("tol");
    const int maxiter = static_cast<int>(rc.get_int("maxiter"));

    md::Model model = md::Model::load(model_path);
    const int side = model.cfg.side;

    const pl::ContactMap raw = pl::load_map(in);
    const pl::ContactMap balanced = pl::balance(raw, tol, maxiter);
    const pl::Normalized norm = pl::normalize_values(balanced);
    pl::PatchSet ps = pl::extract_patches(norm.map, side);
    for (pl::Patch& p : ps.patches) p.data = model.forward_map(p.data);

    pl::ContactMap pred = pl::reassemble(ps);
    for (int i = 0; i < pred.n; ++i)  // the network does not guarantee symmetry
        for (int j = i; j < pred.n; ++j) {
            double v = 0.5 * (pred.at(i, j) + pred.at(j, i));
            v = std::min(1.0, std::max(0.0, v));
            pred.at(i, j) = pred.at(j, i) = v;
        }
    if (denorm) pred = pl::denormalize_values(pred, norm.scale);
    pred.bin_size = raw.bin_size;
    pred.chrom = raw.chrom;
    pred.validate();
    pl::save_map(pred, out, fmt);

    std::cout << "enhanced " << raw.n << "x" << raw.n << " map (" << ps.patches.size()
              << " patch(es)";
    if (pred.n != raw.n)
        std::cout << ", trailing " << raw.n - pred.n << " bin(s) beyond the patch grid dropped";
    std::cout << ") -> " << out << "\n";
}

// ---------------------------------------------------------------------------
// evaluate

void run_evaluate(const RunConfig& rc) {
    const std::string& pred_path = require_key(rc, "pred", "--pred");
    const std::string& target_path = require_key(rc, "target", "--target");
    const int side = static_cast<int>(rc.get_int("side"));
    const long long max_distance = rc.get_int("max_distance");
    const std::string out = rc.get_string("out");
    const std::string distances = rc.get_string("distances");
    const long long window = rc.get_int("window");

    pl::ContactMap pred = pl::load_map(pred_path);
    pl::ContactMap target = pl::load_map(target_path);
    if (pred.n != target.n)
        throw std::runtime_error("size mismatch: prediction is " + std::to_string(pred.n) +
                                 " bins, target is " + std::to_string(target.n));
    // Scoring assumes the normalized [0, 1] scale; entries outside are clipped
    // on both sides so identical files always score as identical.
    for (double& v : pred.counts) v = std::min(1.0, std::max(0.0, v));
    for (double& v : target.counts) v = std::min(1.0, std::max(0.0, v));

    std::vector<Tensor> pred_patches, target_patches;
    if (pred.n >= side) {
        for (const pl::Patch& p : pl::extract_patches(pred, side).patches)
            pred_patches.push_back(p.data);
        for (const pl::Patch& p : pl::extract_patches(target, side).patches)
            target_patches.push_back(p.data);
    } else {  // smaller than one patch: score the whole map as a single patch
        pred_patches.emplace_back(std::vector<int>{pred.n, pred.n}, pred.counts);
        target_patches.emplace_back(std::vector<int>{target.n, target.n}, target.counts);
    }

    const mt::MetricReport report = mt::evaluate_patches(pred_patches, target_patches);
    std::cout << mt::format_report_text(report);

    const Tensor pred_whole({pred.n, pred.n}, pred.counts);
    const Tensor target_whole({target.n, target.n}, target.counts);
    if (window > 0) {
        const double w = mt::ssim_windowed(pred_whole, target_whole, static_cast<int>(window));
        std::printf("windowed ssim (window %lld, whole map): %.4f\n",
                    static_cast<long long>(window), w);
    }
    if (!out.empty()) mt::write_report_csv(report, out);
    if (!distances.empty()) {
        const int cap = max_distance < 0 ? pred.n - 1 : static_cast<int>(max_distance);
        mt::write_distance_csv(mt::pcc_by_distance(pred_whole, target_whole, cap), distances);
    }
}

// ---------------------------------------------------------------------------
// flops

void run_flops(const RunConfig& rc) {
    const md::ModelConfig mc = model_config_from(rc, rc.get_bool("baseline"));
    md::Model m = md::Model::make(mc);
    const std::uint64_t flops = m.count_flops();
    std::cout << "parameters: " << m.param_count() << "\n"
              << "flops per forward (batch 1): " << flops << "\n";
    std::printf("gflops: %.6f\n", static_cast<double>(flops) / 1e9);
}

// ---------------------------------------------------------------------------
// erf

void run_erf(const RunConfig& rc) {
    const std::string model_path = rc.get_string("model");
    const std::uint64_t seed = as_seed(rc.get_int("seed"));
    const int batch = static_cast<int>(rc.get_int("batch"));
    const std::string out = rc.get_string("out");

    md::Model m = [&] {
        if (!model_path.empty()) return md::Model::load(model_path);
        md::Model fresh = md::Model::make(model_config_from(rc, rc.get_bool("baseline")));
        fresh.init(seed);
        return fresh;
    }();
    const int side = m.cfg.side;
    long long row = rc.get_int("row"), col = rc.get_int("col");
    if (row < 0) row = side / 2;
    if (col < 0) col = side / 2;
    if (row >= side || col >= side)
        throw std::runtime_error("probe (" + std::to_string(row) + "," + std::to_string(col) +
                                 ") outside a " + std::to_string(side) + "-bin map");

    const Tensor g = md::effective_receptive_field(m, static_cast<int>(row),
                                                   static_cast<int>(col), batch, seed);
    long long nonzero = 0;
    int radius = -1;
    for (int i = 0; i < side; ++i)
        for (int j = 0; j < side; ++j)
            if (g.at(i, j) != 0.0) {
                ++nonzero;
                radius = std::max(radius, std::max(std::abs(i - static_cast<int>(row)),
                                                   std::abs(j - static_cast<int>(col))));
            }
    std::cout << "probe: (" << row << "," << col << ") on " << side << "x" << side << "\n";
    std::printf("nonzero fraction: %.4f\n",
                static_cast<double>(nonzero) / (static_cast<double>(side) * side));
    std::cout << "max chebyshev radius: " << radius << "\n";

    if (!out.empty()) {
        std::string csv;
        for (int i = 0; i < side; ++i) {
            for (int j = 0; j < side; ++j) {
                if (j) csv += ',';
                csv += shortest(g.at(i, j));
            }
            csv += '\n';
        }
        write_text_atomic(out, csv);
        std::cout << "saliency grid: " << out << "\n";
    }
}

// ---------------------------------------------------------------------------
// loopscore

void run_loopscore(const RunConfig& rc) {
    const std::vector<long long> counts =
        split_ints(require_key(rc, "counts", "--counts"), 4, "--counts");
    const std::vector<long long> totals =
        split_ints(require_key(rc, "totals", "--totals"), 2, "--totals");
    const std::string out = rc.get_string("out");

    mt::LoopSets sets;
    sets.loops = {totals[0], totals[1]};
    // counts order: line0/set0, line1/set0, line0/set1, line1/set1
    sets.overlap[0][0] = counts[0];
    sets.overlap[1][0] = counts[1];
    sets.overlap[0][1] = counts[2];
    sets.overlap[1][1] = counts[3];
    sets.validate();
    const mt::LoopScoreTable tab = mt::loop_weighted_score(sets);

    std::printf("%-6s %-6s %8s %8s %8s %8s\n", "line", "set", "overlap", "loops", "P", "W");
    for (int s = 0; s < 2; ++s)
        for (int l = 0; l < 2; ++l) {
            if (tab.defined[s])
                std::printf("%-6d %-6d %8lld %8lld %8.3f %8.3f\n", l, s, sets.overlap[l][s],
                            sets.loops[l], tab.p[l][s], tab.w[l][s]);
            else
                std::printf("%-6d %-6d %8lld %8lld %8.3f %8s\n", l, s, sets.overlap[l][s],
                            sets.loops[l], tab.p[l][s], "undef");
        }

    if (!out.empty()) {
        std::string csv = "line,set,overlap,loops,p,w,defined\n";
        for (int s = 0; s < 2; ++s)
            for (int l = 0; l < 2; ++l) {
                csv += std::to_string(l) + ',' + std::to_string(s) + ',' +
                       std::to_string(sets.overlap[l][s]) + ',' + std::to_string(sets.loops[l]) +
                       ',' + shortest(tab.p[l][s]) + ',' +
                       (tab.defined[s] ? shortest(tab.w[l][s]) : "") + ',' +
                       (tab.defined[s] ? "1" : "0") + '\n';
            }
        write_text_atomic(out, csv);
    }
}

// ---------------------------------------------------------------------------
// Wiring: one setup function per subcommand.

void add_model_flags(CLI::App* cmd, CommandConfig& cc, bool with_baseline) {
    cc.bind(cmd, "--c", "c", "base feature channels (stages run at c/2c/4c)");
    cc.bind(cmd, "--blocks", "blocks", "scan blocks per stage");
    cc.bind(cmd, "--state", "state", "state size per scan direction");
    cc.bind(cmd, "--side", "side", "square patch size the model operates on");
    cc.bind(cmd, "--global-residual", "global_residual", "add an input->output skip (true/false)");
    if (with_baseline)
        cc.bind(cmd, "--baseline", "baseline",
                "input/output projections only (locality baseline, true/false)");
}

CommandConfig& add_synthesize(CLI::App& app, std::deque<CommandConfig>& store) {
    CLI::App* cmd = app.add_subcommand(
        "synthesize", "write a synthetic contact map (distance decay + domains + loop peaks)");
    cmd->alias("synth");
    store.emplace_back(std::vector<std::pair<std::string, std::string>>{
        {"n", "160"},
        {"seed", "7"},
        {"out", ""},
        {"tads", "true"},
        {"loops", "true"},
        {"scale", "200"},
        {"format", "coo"},
    });
    CommandConfig& cc = store.back();
    cc.bind(cmd, "--n", "n", "map size in bins (>= 40)");
    cc.bind(cmd, "--seed", "seed", "random seed");
    cc.bind(cmd, "--out", "out", "output map path");
    cc.bind(cmd, "--tads", "tads", "draw enriched domain blocks (true/false)");
    cc.bind(cmd, "--loops", "loops", "add corner peaks at domain anchors (true/false)");
    cc.bind(cmd, "--scale", "scale", "expected diagonal count away from domains");
    cc.bind(cmd, "--format", "format", "output format: coo or dense");
    cc.add_common(cmd);
    cmd->callback([&cc] {
        if (cc.merge()) run_synthesize(cc.rc);
    });
    return cc;
}

CommandConfig& add_preprocess(CLI::App& app, std::deque<CommandConfig>& store) {
    CLI::App* cmd = app.add_subcommand(
        "preprocess", "balance, downsample, normalize, and cut a map into paired patches");
    store.emplace_back(std::vector<std::pair<std::string, std::string>>{
        {"in", ""},
        {"out", ""},
        {"ratio", "0.0625"},
        {"seed", "0"},
        {"side", "40"},
        {"chrom", ""},
        {"tol", "1e-6"},
        {"maxiter", "1000"},
    });
    CommandConfig& cc = store.back();
    cc.bind(cmd, "--in", "in", "input map (coo or dense, autodetected)");
    cc.bind(cmd, "--out", "out", "output directory for patch archives + manifest");
    cc.bind(cmd, "--ratio", "ratio", "read-retention ratio for the low-coverage input");
    cc.bind(cmd, "--seed", "seed", "downsampling seed");
    cc.bind(cmd, "--side", "side", "patch size in bins");
    cc.bind(cmd, "--chrom", "chrom", "chromosome label (decides train/validation/test split)");
    cc.bind(cmd, "--tol", "tol", "balancing convergence tolerance");
    cc.bind(cmd, "--maxiter", "maxiter", "balancing iteration cap");
    cc.add_common(cmd);
    cmd->callback([&cc] {
        if (cc.merge()) run_preprocess(cc.rc);
    });
    return cc;
}

CommandConfig& add_train(CLI::App& app, std::deque<CommandConfig>& store,
                         std::vector<std::string>& data_dirs) {
    CLI::App* cmd = app.add_subcommand("train", "train an enhancement model on patch directories");
    store.emplace_back(std::vector<std::pair<std::string, std::string>>{
        {"data", ""},
        {"out", ""},
        {"history", ""},
        {"c", "32"},
        {"blocks", "2"},
        {"state", "16"},
        {"side", "40"},
        {"global_residual", "false"},
        {"epochs", "100"},
        {"batch", "64"},
        {"lr", "1e-4"},
        {"beta1", "0.9"},
        {"beta2", "0.999"},
        {"eps", "1e-8"},
        {"seed", "0"},
        {"clip", "0"},
        {"decay", "0"},
        {"drop_zero_targets", "false"},
        {"checkpoint_every", "0"},
    });
    CommandConfig& cc = store.back();
    CLI::Option* data_opt = cmd->add_option(
        "--data", data_dirs, "preprocessed directory (repeatable; split read from its manifest)");
    cc.bind(cmd, "--out", "out", "checkpoint output path");
    cc.bind(cmd, "--history", "history", "loss history CSV (default: <out>.history.csv)");
    add_model_flags(cmd, cc, /*with_baseline=*/false);
    cc.bind(cmd, "--epochs", "epochs", "training epochs");
    cc.bind(cmd, "--batch", "batch", "minibatch size");
    cc.bind(cmd, "--lr", "lr", "learning rate");
    cc.bind(cmd, "--beta1", "beta1", "first-moment decay");
    cc.bind(cmd, "--beta2", "beta2", "second-moment decay");
    cc.bind(cmd, "--eps", "eps", "optimizer epsilon");
    cc.bind(cmd, "--seed", "seed", "init + shuffle seed");
    cc.bind(cmd, "--clip", "clip", "global-norm gradient clip (0 disables)");
    cc.bind(cmd, "--decay", "decay", "decoupled weight decay (0 disables)");
    cc.bind(cmd, "--drop-zero-targets", "drop_zero_targets",
            "drop samples whose target patch is all zero (true/false)");
    cc.bind(cmd, "--checkpoint-every", "checkpoint_every",
            "epochs between rolling .latest snapshots (0 = best-only)");
    cc.add_common(cmd);
    cmd->callback([&cc, data_opt, &data_dirs] {
        if (data_opt->count() > 0) {
            std::string joined;
            for (const std::string& d : data_dirs) {
                if (!joined.empty()) joined += ',';
                joined += d;
            }
            cc.rc.set("data", joined);
        }
        if (cc.merge()) run_train(cc.rc);
    });
    return cc;
}

CommandConfig& add_enhance(CLI::App& app, std::deque<CommandConfig>& store) {
    CLI::App* cmd = app.add_subcommand(
        "enhance", "run a trained model over a map patch-by-patch and write the result");
    store.emplace_back(std::vector<std::pair<std::string, std::string>>{
        {"in", ""},
        {"model", ""},
        {"out", ""},
        {"format", "dense"},
        {"denormalize", "false"},
        {"tol", "1e-6"},
        {"maxiter", "1000"},
    });
    CommandConfig& cc = store.back();
    cc.bind(cmd, "--in", "in", "input map (coo or dense, autodetected)");
    cc.bind(cmd, "--model", "model", "model checkpoint");
    cc.bind(cmd, "--out", "out", "output map path");
    cc.bind(cmd, "--format", "format", "output format: coo or dense");
    cc.bind(cmd, "--denormalize", "denormalize",
            "rescale the output by the input's clip value (true/false)");
    cc.bind(cmd, "--tol", "tol", "balancing convergence tolerance");
    cc.bind(cmd, "--maxiter", "maxiter", "balancing iteration cap");
    cc.add_common(cmd);
    cmd->callback([&cc] {
        if (cc.merge()) run_enhance(cc.rc);
    });
    return cc;
}

CommandConfig& add_evaluate(CLI::App& app, std::deque<CommandConfig>& store) {
    CLI::App* cmd = app.add_subcommand(
        "evaluate", "score a predicted map against a target (per-patch metrics)");
    store.emplace_back(std::vector<std::pair<std::string, std::string>>{
        {"pred", ""},
        {"target", ""},
        {"side", "40"},
        {"max_distance", "-1"},
        {"out", ""},
        {"distances", ""},
        {"window", "0"},
    });
    CommandConfig& cc = store.back();
    cc.bind(cmd, "--pred", "pred", "predicted map (normalized [0,1] scale; entries are clipped)");
    cc.bind(cmd, "--target", "target", "reference map (same scale and size)");
    cc.bind(cmd, "--side", "side", "patch size for per-patch averaging");
    cc.bind(cmd, "--max-distance", "max_distance",
            "largest diagonal offset for --distances (-1 = all)");
    cc.bind(cmd, "--out", "out", "metric report CSV path");
    cc.bind(cmd, "--distances", "distances", "per-distance correlation CSV path");
    cc.bind(cmd, "--window", "window", "also print whole-map windowed ssim (0 disables)");
    cc.add_common(cmd);
    cmd->callback([&cc] {
        if (cc.merge()) run_evaluate(cc.rc);
    });
    return cc;
}

CommandConfig& add_flops(CLI::App& app, std::deque<CommandConfig>& store) {
    CLI::App* cmd =
        app.add_subcommand("flops", "print parameter count and per-forward flop cost");
    store.emplace_back(std::vector<std::pair<std::string, std::string>>{
        {"c", "32"},
        {"blocks", "2"},
        {"state", "16"},
        {"side", "40"},
        {"global_residual", "false"},
        {"baseline", "false"},
    });
    CommandConfig& cc = store.back();
    add_model_flags(cmd, cc, /*with_baseline=*/true);
    cc.add_common(cmd);
    cmd->callback([&cc] {
        if (cc.merge()) run_flops(cc.rc);
    });
    return cc;
}

CommandConfig& add_erf(CLI::App& app, std::deque<CommandConfig>& store) {
    CLI::App* cmd = app.add_subcommand(
        "erf", "map the effective receptive field of one output pixel over the input");
    store.emplace_back(std::vector<std::pair<std::string, std::string>>{
        {"model", ""},
        {"c", "32"},
        {"blocks", "2"},
        {"state", "16"},
        {"side", "40"},
        {"global_residual", "false"},
        {"baseline", "false"},
        {"row", "-1"},
        {"col", "-1"},
        {"batch", "8"},
        {"seed", "7"},
        {"out", ""},
    });
    CommandConfig& cc = store.back();
    cc.bind(cmd, "--model", "model", "checkpoint to probe (omit for a fresh seeded model)");
    add_model_flags(cmd, cc, /*with_baseline=*/true);
    cc.bind(cmd, "--row", "row", "probe output row (-1 = center)");
    cc.bind(cmd, "--col", "col", "probe output column (-1 = center)");
    cc.bind(cmd, "--batch", "batch", "random probe inputs to average");
    cc.bind(cmd, "--seed", "seed", "probe (and fresh-init) seed");
    cc.bind(cmd, "--out", "out", "saliency grid CSV path");
    cc.add_common(cmd);
    cmd->callback([&cc] {
        if (cc.merge()) run_erf(cc.rc);
    });
    return cc;
}

CommandConfig& add_loopscore(CLI::App& app, std::deque<CommandConfig>& store) {
    CLI::App* cmd = app.add_subcommand(
        "loopscore", "weighted overlap scores for two loop sets against two annotation sets");
    store.emplace_back(std::vector<std::pair<std::string, std::string>>{
        {"counts", ""},
        {"totals", ""},
        {"out", ""},
    });
    CommandConfig& cc = store.back();
    cc.bind(cmd, "--counts", "counts",
            "overlap counts line0/set0,line1/set0,line0/set1,line1/set1");
    cc.bind(cmd, "--totals", "totals", "total loops per line: line0,line1");
    cc.bind(cmd, "--out", "out", "score table CSV path");
    cc.add_common(cmd);
    cmd->callback([&cc] {
        if (cc.merge()) run_loopscore(cc.rc);
    });
    return cc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hicenhance: contact-map enhancement workflow "
                 "(synthesize / preprocess / train / enhance / evaluate / flops / erf / "
                 "loopscore)"};
    app.require_subcommand(1);

    std::deque<CommandConfig> store;
    std::vector<std::string> data_dirs;
    add_synthesize(app, store);
    add_preprocess(app, store);
    add_train(app, store, data_dirs);
    add_enhance(app, store);
    add_evaluate(app, store);
    add_flops(app, store);
    add_erf(app, store);
    add_loopscore(app, store);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints help or the parse error
        return code == 0 ? 0 : 2;
    } catch (const hicenhance::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
