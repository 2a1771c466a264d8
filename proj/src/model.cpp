#include "hicenhance/model.hpp"

#include <cmath>

#include "hicenhance/binio.hpp"
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace hicenhance::model {

void ModelConfig::validate() const {
    if (c < 1 || c % 2 != 0) throw std::invalid_argument("config: C must be positive and even");
    if (side < 4 || side % 4 != 0)
        throw std::invalid_argument("config: side must be divisible by 4");
    if (blocks_per_stage < 0) throw std::invalid_argument("config: negative block count");
    if (state_size < 1) throw std::invalid_argument("config: state size must be >= 1");
}

Model Model::make(const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    const int c = cfg.c, n = cfg.state_size;
    m.inproj = blocks::Conv2dLayer::make(1, c, 3, 1, 1);
    m.down1 = blocks::Conv2dLayer::make(c, 2 * c, 2, 2, 0);
    m.down2 = blocks::Conv2dLayer::make(2 * c, 4 * c, 2, 2, 0);
    m.up1 = blocks::TransposeConv2x2Layer::make(4 * c, 2 * c);
    m.up2 = blocks::TransposeConv2x2Layer::make(4 * c, c);
    m.reduce = blocks::Conv2dLayer::make(2 * c, c, 1, 1, 0);
    m.outproj = blocks::Conv2dLayer::make(c, 1, 3, 1, 1);
    // Hidden widths follow the per-stage filter plans; the block output width
    // is pinned to the stage width by the residual connections.
    for (int i = 0; i < cfg.blocks_per_stage; ++i) {
        m.enc1.push_back(blocks::HolisticBlock::make(c, n, 4 * c));
        m.enc2.push_back(blocks::HolisticBlock::make(2 * c, n, 8 * c));
        m.bottleneck.push_back(blocks::HolisticBlock::make(4 * c, n, 4 * c));
        m.dec2.push_back(blocks::HolisticBlock::make(4 * c, n, 16 * c));
        m.dec1.push_back(blocks::HolisticBlock::make(2 * c, n, 8 * c));
    }
    return m;
}

void Model::init(std::uint64_t seed) {
    Rng rng(seed);
    inproj.init(rng);
    for (auto& b : enc1) b.init(rng);
    down1.init(rng);
    for (auto& b : enc2) b.init(rng);
    down2.init(rng);
    for (auto& b : bottleneck) b.init(rng);
    up1.init(rng);
    for (auto& b : dec2) b.init(rng);
    up2.init(rng);
    for (auto& b : dec1) b.init(rng);
    reduce.init(rng);
    outproj.init(rng);
}

ForwardPass Model::forward(ad::Tape& t, Tensor input, ShapeTrace* trace) {
    if (input.rank() != 4 || input.dim(1) != 1 || input.dim(2) != cfg.side ||
        input.dim(3) != cfg.side)
        throw std::invalid_argument("forward: input must be [B,1,side,side]");
    auto record = [&](const char* stage, int node) {
        if (trace) trace->push_back({stage, t.val(node).shape});
    };

    ForwardPass fp;
    fp.input = ad::input(t, std::move(input));
    if (cfg.baseline_only) {
        int e = inproj.apply(t, fp.input);
        record("input_projection", e);
        int o = outproj.apply(t, e);
        if (cfg.global_residual) o = ad::add(t, o, fp.input);
        record("output", o);
        fp.output = o;
        return fp;
    }

    int e1 = inproj.apply(t, fp.input);
    record("input_projection", e1);
    for (auto& b : enc1) e1 = b.apply(t, e1);
    record("encoder1", e1);
    int e2 = down1.apply(t, e1);
    for (auto& b : enc2) e2 = b.apply(t, e2);
    record("encoder2", e2);
    int e3 = down2.apply(t, e2);
    for (auto& b : bottleneck) e3 = b.apply(t, e3);
    record("bottleneck", e3);

    int d2 = ad::concat_channels(t, up1.apply(t, e3), e2);
    for (auto& b : dec2) d2 = b.apply(t, d2);
    record("decoder2", d2);
    int d1 = ad::concat_channels(t, up2.apply(t, d2), e1);
    for (auto& b : dec1) d1 = b.apply(t, d1);
    record("decoder1", d1);

    int o = outproj.apply(t, reduce.apply(t, d1));
    if (cfg.global_residual) o = ad::add(t, o, fp.input);
    record("output", o);
    fp.output = o;
    return fp;
}

Tensor Model::forward_map(const Tensor& map) {
    if (map.rank() != 2 || map.dim(0) != cfg.side || map.dim(1) != cfg.side)
        throw std::invalid_argument("forward_map: input must be [side,side]");
    ad::Tape t;
    ForwardPass fp = forward(t, Tensor({1, 1, cfg.side, cfg.side}, map.v));
    return Tensor({cfg.side, cfg.side}, t.val(fp.output).v);
}

std::vector<ad::ParamRef> Model::params() {
    std::vector<ad::ParamRef> out;
    inproj.collect(out, "inproj");
    for (std::size_t i = 0; i < enc1.size(); ++i)
        enc1[i].collect(out, "enc1." + std::to_string(i));
    down1.collect(out, "down1");
    for (std::size_t i = 0; i < enc2.size(); ++i)
        enc2[i].collect(out, "enc2." + std::to_string(i));
    down2.collect(out, "down2");
    for (std::size_t i = 0; i < bottleneck.size(); ++i)
        bottleneck[i].collect(out, "bottleneck." + std::to_string(i));
    up1.collect(out, "up1");
    for (std::size_t i = 0; i < dec2.size(); ++i)
        dec2[i].collect(out, "dec2." + std::to_string(i));
    up2.collect(out, "up2");
    for (std::size_t i = 0; i < dec1.size(); ++i)
        dec1[i].collect(out, "dec1." + std::to_string(i));
    reduce.collect(out, "reduce");
    outproj.collect(out, "outproj");
    return out;
}

std::size_t Model::param_count() {
    std::size_t n = 0;
    for (const auto& p : params()) n += p.value->size();
    return n;
}

void Model::zero_grads() {
    for (auto& p : params()) p.grad->fill(0.0);
}

std::uint64_t Model::count_flops() const {
    const int s = cfg.side;
    std::uint64_t total = inproj.flops(s, s) + outproj.flops(s, s);
    if (cfg.baseline_only) return total;
    for (const auto& b : enc1) total += b.flops(s, s);
    total += down1.flops(s, s);
    for (const auto& b : enc2) total += b.flops(s / 2, s / 2);
    total += down2.flops(s / 2, s / 2);
    for (const auto& b : bottleneck) total += b.flops(s / 4, s / 4);
    total += up1.flops(s / 4, s / 4);
    for (const auto& b : dec2) total += b.flops(s / 2, s / 2);
    total += up2.flops(s / 2, s / 2);
    for (const auto& b : dec1) total += b.flops(s, s);
    total += reduce.flops(s, s);
    return total;
}

using binio::get_f32;
using binio::get_u32;
using binio::put_f32;
using binio::put_u32;

void Model::save(const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("checkpoint: cannot open " + tmp + " for writing");
        const unsigned char version = 1;
        f.write(reinterpret_cast<const char*>(&version), 1);
        put_u32(f, static_cast<std::uint32_t>(cfg.c));
        put_u32(f, static_cast<std::uint32_t>(cfg.blocks_per_stage));
        put_u32(f, static_cast<std::uint32_t>(cfg.state_size));
        put_u32(f, static_cast<std::uint32_t>(cfg.side));
        put_u32(f, (cfg.global_residual ? 1u : 0u) | (cfg.baseline_only ? 2u : 0u));
        auto refs = params();
        put_u32(f, static_cast<std::uint32_t>(refs.size()));
        for (const auto& p : refs) {
            put_u32(f, static_cast<std::uint32_t>(p.name.size()));
            f.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
            put_u32(f, static_cast<std::uint32_t>(p.value->rank()));
            for (int d : p.value->shape) put_u32(f, static_cast<std::uint32_t>(d));
            for (double v : p.value->v) put_f32(f, static_cast<float>(v));
        }
        if (!f) throw std::runtime_error("checkpoint: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("checkpoint: cannot rename " + tmp + " to " + path);
}

Model Model::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    unsigned char version = 0;
    f.read(reinterpret_cast<char*>(&version), 1);
    if (!f || version != 1)
        throw std::runtime_error("checkpoint: unsupported version in " + path);
    ModelConfig cfg;
    cfg.c = static_cast<int>(get_u32(f));
    cfg.blocks_per_stage = static_cast<int>(get_u32(f));
    cfg.state_size = static_cast<int>(get_u32(f));
    cfg.side = static_cast<int>(get_u32(f));
    const std::uint32_t flags = get_u32(f);
    cfg.global_residual = (flags & 1u) != 0;
    cfg.baseline_only = (flags & 2u) != 0;

    Model m = Model::make(cfg);
    auto refs = m.params();
    std::unordered_map<std::string, ad::ParamRef*> by_name;
    for (auto& p : refs) by_name[p.name] = &p;

    const std::uint32_t count = get_u32(f);
    if (count != refs.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = get_u32(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        if (!f) throw std::runtime_error("checkpoint: truncated file");
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("checkpoint: unknown parameter '" + name + "'");
        const std::uint32_t rank = get_u32(f);
        std::vector<int> dims(rank);
        for (auto& d : dims) d = static_cast<int>(get_u32(f));
        if (dims != it->second->value->shape)
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        for (double& v : it->second->value->v) v = static_cast<double>(get_f32(f));
    }
    return m;
}

Tensor effective_receptive_field(Model& m, int probe_row, int probe_col, int batch,
                                 std::uint64_t seed) {
    const int s = m.cfg.side;
    if (probe_row < 0 || probe_row >= s || probe_col < 0 || probe_col >= s)
        throw std::invalid_argument("erf: probe outside the map");
    Rng rng(seed);
    Tensor x({batch, 1, s, s});
    for (double& v : x.v) v = rng.uniform(0.0, 1.0);

    ad::Tape t;
    ForwardPass fp = m.forward(t, std::move(x));
    m.zero_grads();
    Tensor& og = t.grad(fp.output);
    for (int b = 0; b < batch; ++b) og.at(b, 0, probe_row, probe_col) = 1.0;
    t.backward(fp.output);

    Tensor sal({s, s});
    const Tensor& ig = t.grad(fp.input);
    for (int b = 0; b < batch; ++b)
        for (int i = 0; i < s; ++i)
            for (int j = 0; j < s; ++j) sal.at(i, j) += std::abs(ig.at(b, 0, i, j));
    double mx = 0.0;
    for (double v : sal.v) mx = std::max(mx, v);
    if (mx > 0.0)
        for (double& v : sal.v) v /= mx;
    return sal;
}

}  // namespace hicenhance::model
