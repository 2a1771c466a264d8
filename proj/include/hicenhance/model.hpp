#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hicenhance/blocks.hpp"

namespace hicenhance::model {

struct ModelConfig {
    int c = 32;               // base feature dim; stages run at C / 2C / 4C
    int blocks_per_stage = 2;
    int state_size = 16;      // SSM state per scan direction
    int side = 40;            // square input size; halved twice
    bool global_residual = false;  // optional input->output skip (off by default)
    bool baseline_only = false;    // input/output projections only (locality baseline)

    void validate() const;
};

struct ShapeTraceEntry {
    std::string stage;
    std::vector<int> shape;
};
using ShapeTrace = std::vector<ShapeTraceEntry>;

struct ForwardPass {
    int input = -1;   // tape id of the input leaf
    int output = -1;  // tape id of the final map
};

/// Symmetric autoencoder over square maps: 3x3 input projection to C, two
/// encoder stages of holistic scan blocks with 2x2 strided-conv downsampling
/// (C -> 2C -> 4C), a bottleneck stage, then mirrored 2x2 transposed-conv
/// upsampling with skip concatenation, a 1x1 reduction and a 3x3 output
/// projection back to one channel.
struct Model {
    ModelConfig cfg;
    blocks::Conv2dLayer inproj, down1, down2, reduce, outproj;
    blocks::TransposeConv2x2Layer up1, up2;
    std::vector<blocks::HolisticBlock> enc1, enc2, bottleneck, dec2, dec1;

    static Model make(const ModelConfig& cfg);
    void init(std::uint64_t seed);

    /// input: [B,1,side,side]. Records stage output shapes into trace if given.
    ForwardPass forward(ad::Tape& t, Tensor input, ShapeTrace* trace = nullptr);

    /// Single-map convenience: [side,side] -> [side,side], forward only.
    Tensor forward_map(const Tensor& map);

    std::vector<ad::ParamRef> params();
    std::size_t param_count();
    void zero_grads();

    /// Deterministic per-forward cost (batch 1) under the documented MAC
    /// costing convention; 2 flops per MAC.
    std::uint64_t count_flops() const;

    void save(const std::string& path);
    static Model load(const std::string& path);
};

/// |d output[probe] / d input| averaged over `batch` uniform random inputs,
/// normalized so the maximum is 1 (left all-zero if the gradient vanishes).
Tensor effective_receptive_field(Model& m, int probe_row, int probe_col, int batch,
                                 std::uint64_t seed);

}  // namespace hicenhance::model
