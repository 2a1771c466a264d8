#pragma once

#include <cassert>
#include <cstddef>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hicenhance {

/// Dense rank-<=4 real array. Row-major, innermost dimension last.
/// Network tensors are laid out [batch, channels, height, width].
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(count(shape), 0.0) {}
    Tensor(std::vector<int> s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
        if (v.size() != count(shape)) throw std::invalid_argument("tensor: data/shape mismatch");
    }

    static std::size_t count(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d < 1) throw std::invalid_argument("tensor: dimension < 1");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }
    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double x) {
        Tensor t(std::move(s));
        std::fill(t.v.begin(), t.v.end(), x);
        return t;
    }

    std::size_t size() const { return v.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    double* data() { return v.data(); }
    const double* data() const { return v.data(); }

    double& at(int a) { return v[static_cast<std::size_t>(a)]; }
    double at(int a) const { return v[static_cast<std::size_t>(a)]; }
    double& at(int a, int b) { return v[static_cast<std::size_t>(a) * shape[1] + b]; }
    double at(int a, int b) const { return v[static_cast<std::size_t>(a) * shape[1] + b]; }
    double& at(int a, int b, int c) {
        return v[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
    }
    double at(int a, int b, int c) const {
        return v[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
    }
    double& at(int a, int b, int c, int d) {
        return v[((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }
    double at(int a, int b, int c, int d) const {
        return v[((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    Tensor& operator+=(const Tensor& o) {
        assert(same_shape(o));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
        return *this;
    }
    Tensor& operator*=(double s) {
        for (double& x : v) x *= s;
        return *this;
    }
};

inline std::string shape_string(const std::vector<int>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out + ")";
}

/// Seeded RNG for parameter init and data synthesis.
struct Rng {
    std::mt19937_64 gen;
    explicit Rng(std::uint64_t seed) : gen(seed) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen);
    }
    double normal(double mean, double sd) {
        return std::normal_distribution<double>(mean, sd)(gen);
    }
    // Normal rejection-sampled to |x - mean| <= 2 sd.
    double trunc_normal(double mean, double sd) {
        for (;;) {
            double x = normal(mean, sd);
            if (std::abs(x - mean) <= 2.0 * sd) return x;
        }
    }
    std::uint64_t next() { return gen(); }
};

}  // namespace hicenhance
