#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hicenhance/autodiff.hpp"
#include "hicenhance/ssm.hpp"
#include "hicenhance/tensor.hpp"

namespace hicenhance::blocks {

using ad::ParamRef;
using ad::Tape;
using ad::Var;

/// Flatten a [C,H,W] map along the four traversal paths; each sequence is
/// [H*W, C]. Path 0 row-major, 1 its reverse, 2 column-major, 3 its reverse.
std::array<Tensor, 4> cross_scan(const Tensor& fm);

/// Inverse-permute each sequence back onto the grid and sum the four maps.
Tensor cross_merge(const std::array<Tensor, 4>& paths, int h, int w);

struct Conv2dLayer {
    int cin = 0, cout = 0, k = 1, stride = 1, pad = 0;
    Tensor w, b, gw, gb;

    static Conv2dLayer make(int cin, int cout, int k, int stride, int pad);
    void init(Rng& rng);
    int apply(Tape& t, int x);
    void collect(std::vector<ParamRef>& out, const std::string& prefix);
    std::uint64_t flops(int h, int w) const;  // per batch element, input h x w
};

struct TransposeConv2x2Layer {
    int cin = 0, cout = 0;
    Tensor w, b, gw, gb;  // w: [Cin,Cout,2,2]

    static TransposeConv2x2Layer make(int cin, int cout);
    void init(Rng& rng);
    int apply(Tape& t, int x);
    void collect(std::vector<ParamRef>& out, const std::string& prefix);
    std::uint64_t flops(int h, int w) const;
};

struct LayerNormLayer {
    int c = 0;
    Tensor gain, bias, ggain, gbias;

    static LayerNormLayer make(int c);  // gain 1, bias 0
    int apply(Tape& t, int x);
    void collect(std::vector<ParamRef>& out, const std::string& prefix);
    std::uint64_t flops(int h, int w) const;
};

/// Four independent selective-scan bundles, one per traversal path; merge by
/// elementwise sum (downstream affine layers absorb the factor 4).
struct Ss2dLayer {
    int c = 0, state = 0;
    std::array<ssm::SsmParams, 4> p, g;

    static Ss2dLayer make(int c, int state);
    void init(Rng& rng);
    int apply(Tape& t, int x);  // [B,C,H,W] -> [B,C,H,W]
    void collect(std::vector<ParamRef>& out, const std::string& prefix);
    std::uint64_t flops(int h, int w) const;
};

/// Locally-enhanced feed-forward: 1x1 expand -> GELU -> 3x3 (pad 1) -> GELU
/// -> 1x1 project back to the input width -> GELU.
struct LefnLayer {
    Conv2dLayer expand, spatial, project;

    static LefnLayer make(int c, int hidden);
    void init(Rng& rng);
    int apply(Tape& t, int x);
    void collect(std::vector<ParamRef>& out, const std::string& prefix);
    std::uint64_t flops(int h, int w) const;
};

/// Pre-norm residual block: u = x + SS2D(Norm(x)); out = u + LEFN(Norm(u)).
struct HolisticBlock {
    LayerNormLayer norm1, norm2;
    Ss2dLayer mixer;
    LefnLayer ffn;

    static HolisticBlock make(int c, int state, int hidden);
    void init(Rng& rng);
    int apply(Tape& t, int x);
    void collect(std::vector<ParamRef>& out, const std::string& prefix);
    std::uint64_t flops(int h, int w) const;
};

// Single-map (unbatched, forward-only) wrappers over a scratch tape.
Tensor layer_norm(const Tensor& fm, const Tensor& gain, const Tensor& bias);
Tensor ss2d(const Tensor& fm, std::array<ssm::SsmParams, 4>& params);
Tensor lefn(const Tensor& fm, LefnLayer& layer);
Tensor holistic_scan_block(const Tensor& fm, HolisticBlock& block);

}  // namespace hicenhance::blocks
