#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "hicenhance/ssm.hpp"
#include "hicenhance/tensor.hpp"

namespace hicenhance::ad {

/// View of a parameter tensor and its gradient accumulator. Parameters live
/// outside the tape (owned by layers); ops accumulate with += into grad.
struct Var {
    Tensor* value = nullptr;
    Tensor* grad = nullptr;
};

/// Named parameter view used by the model registry, optimizer and checkpoints.
struct ParamRef {
    std::string name;
    Tensor* value = nullptr;
    Tensor* grad = nullptr;
};

/// Reverse-mode tape. Each node owns its activation; gradients are allocated
/// lazily on first touch. backward(root) runs the recorded closures in
/// reverse order; if grad(root) was not seeded by the caller it is seeded
/// with ones.
class Tape {
  public:
    int push(Tensor val, std::function<void(Tape&)> back = nullptr) {
        nodes_.push_back(Node{std::move(val), Tensor{}, std::move(back)});
        return static_cast<int>(nodes_.size()) - 1;
    }
    int next_id() const { return static_cast<int>(nodes_.size()); }

    Tensor& val(int id) { return nodes_[static_cast<std::size_t>(id)].val; }
    const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }

    Tensor& grad(int id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.v.size() != n.val.v.size()) n.grad = Tensor(n.val.shape);
        return n.grad;
    }
    bool has_grad(int id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        return n.grad.v.size() == n.val.v.size();
    }

    void backward(int root) {
        if (!has_grad(root)) grad(root).fill(1.0);
        for (int id = root; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.back && n.grad.v.size() == n.val.v.size()) n.back(*this);
        }
    }

  private:
    struct Node {
        Tensor val;
        Tensor grad;
        std::function<void(Tape&)> back;
    };
    std::deque<Node> nodes_;
};

/// Leaf holding a copy of x.
int input(Tape& t, Tensor x);

/// x: [B,Cin,H,W], w: [Cout,Cin,k,k], optional bias [Cout]. Requires
/// (H + 2 pad - k) divisible by stride.
int conv2d(Tape& t, int x, Var w, Var b, int stride, int pad);

/// Transposed conv, kernel 2, stride 2 (exact inverse geometry of the 2x2
/// downsampler). x: [B,Cin,H,W], w: [Cin,Cout,2,2], out [B,Cout,2H,2W].
int conv_transpose2d_2x(Tape& t, int x, Var w, Var b);

/// Normalizes the channel vector at each (b,h,w) to zero mean / unit variance
/// (population 1/C convention), then applies the per-channel affine.
int layer_norm_chan(Tape& t, int x, Var gain, Var bias, double eps = 1e-5);

int gelu(Tape& t, int x);
int add(Tape& t, int a, int b);
int concat_channels(Tape& t, int a, int b);

/// Flatten a [B,C,H,W] map into a [B,H*W,C] sequence along one of the four
/// traversal paths: 0 row-major, 1 its reverse, 2 column-major, 3 its reverse.
int scan_path(Tape& t, int x, int path);

/// Inverse of scan_path: place a [B,T,C] sequence back onto the [B,C,H,W] grid.
int merge_path(Tape& t, int seq, int path, int h, int w);

/// Input-selective scan over [B,T,C] with fused hand-derived backward.
int selective_scan_node(Tape& t, int x, ssm::SsmParams& params, ssm::SsmParams& param_grads);

/// Mean absolute error against a fixed target; scalar node of shape {1}.
int l1_loss(Tape& t, int pred, Tensor target);

/// Sequence position -> row-major flat index for traversal path 0..3.
inline int path_flat(int path, int t, int h, int w) {
    switch (path) {
        case 0: return t;
        case 1: return h * w - 1 - t;
        case 2: return (t % h) * w + t / h;
        default: {
            const int s = h * w - 1 - t;
            return (s % h) * w + s / h;
        }
    }
}

}  // namespace hicenhance::ad
