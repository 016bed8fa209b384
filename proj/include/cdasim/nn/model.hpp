#pragma once

// Parameter containers for the 13 -> LSTM(10) -> Dense(5, ReLU) -> Dense(3, ReLU)
// -> Dense(1, linear) network.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdasim/features.hpp"
#include "cdasim/util/rng.hpp"

namespace cdasim::nn {

inline constexpr std::size_t kInputs = kInputFields;
inline constexpr std::size_t kHidden = 10;
inline constexpr std::array<std::size_t, 4> kDenseChain = {kHidden, 5, 3, 1};

/// Row-major dense matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool operator==(const Matrix&) const = default;
};

enum Gate : std::size_t { kInputGate = 0, kForgetGate = 1, kOutputGate = 2, kCandidate = 3 };
inline constexpr std::array<const char*, 4> kGateNames = {"input", "forget", "output", "candidate"};

struct LstmParams {
    std::array<Matrix, 4> wx;                 // kHidden x kInputs, per gate
    std::array<Matrix, 4> wh;                 // kHidden x kHidden, per gate
    std::array<std::vector<double>, 4> bias;  // kHidden, per gate

    bool operator==(const LstmParams&) const = default;
};

struct DenseParams {
    Matrix w;  // out x in
    std::vector<double> b;

    bool operator==(const DenseParams&) const = default;
};

struct ModelParams {
    LstmParams lstm;
    std::array<DenseParams, 3> dense;
    NormStats norm;
    int seq_len = 1;

    bool operator==(const ModelParams&) const = default;
};

/// Zero-valued parameters with the fixed shapes.
inline ModelParams zero_model(int seq_len = 1) {
    ModelParams m;
    for (std::size_t g = 0; g < 4; ++g) {
        m.lstm.wx[g] = Matrix(kHidden, kInputs);
        m.lstm.wh[g] = Matrix(kHidden, kHidden);
        m.lstm.bias[g].assign(kHidden, 0.0);
    }
    for (std::size_t l = 0; l < 3; ++l) {
        m.dense[l].w = Matrix(kDenseChain[l + 1], kDenseChain[l]);
        m.dense[l].b.assign(kDenseChain[l + 1], 0.0);
    }
    m.seq_len = seq_len;
    for (std::size_t i = 0; i < kRecordFields; ++i) m.norm.max[i] = 1.0;
    return m;
}

/// Glorot-uniform weights, zero biases, forget-gate bias +1.
inline ModelParams init_model(std::uint64_t seed, int seq_len = 1) {
    ModelParams m = zero_model(seq_len);
    Rng rng(seed);
    auto fill = [&](Matrix& w) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
        for (double& v : w.data) v = uniform_real(rng, -limit, limit);
    };
    for (std::size_t g = 0; g < 4; ++g) {
        fill(m.lstm.wx[g]);
        fill(m.lstm.wh[g]);
    }
    m.lstm.bias[kForgetGate].assign(kHidden, 1.0);
    for (auto& d : m.dense) fill(d.w);
    return m;
}

/// Visits every trainable tensor in a fixed order as (name, flat values).
/// NormStats and seq_len are not trainable and are not visited.
template <typename Params, typename Fn>
void for_each_tensor(Params& m, Fn&& fn) {
    for (std::size_t g = 0; g < 4; ++g) {
        fn(std::string("lstm.wx.") + kGateNames[g], std::span(m.lstm.wx[g].data));
        fn(std::string("lstm.wh.") + kGateNames[g], std::span(m.lstm.wh[g].data));
        fn(std::string("lstm.b.") + kGateNames[g], std::span(m.lstm.bias[g]));
    }
    for (std::size_t l = 0; l < 3; ++l) {
        fn("dense" + std::to_string(l) + ".w", std::span(m.dense[l].w.data));
        fn("dense" + std::to_string(l) + ".b", std::span(m.dense[l].b));
    }
}

inline std::size_t parameter_count(const ModelParams& m) {
    std::size_t n = 0;
    for_each_tensor(m, [&](const std::string&, auto values) { n += values.size(); });
    return n;
}

/// Throws std::invalid_argument unless every tensor has its fixed shape.
inline void check_shapes(const ModelParams& m) {
    auto expect = [](const Matrix& w, std::size_t r, std::size_t c, const std::string& what) {
        if (w.rows != r || w.cols != c || w.data.size() != r * c)
            throw std::invalid_argument(what + ": expected " + std::to_string(r) + "x" + std::to_string(c) + ", got " +
                                        std::to_string(w.rows) + "x" + std::to_string(w.cols));
    };
    for (std::size_t g = 0; g < 4; ++g) {
        expect(m.lstm.wx[g], kHidden, kInputs, std::string("lstm.wx.") + kGateNames[g]);
        expect(m.lstm.wh[g], kHidden, kHidden, std::string("lstm.wh.") + kGateNames[g]);
        if (m.lstm.bias[g].size() != kHidden)
            throw std::invalid_argument(std::string("lstm.b.") + kGateNames[g] + ": expected 10 values");
    }
    for (std::size_t l = 0; l < 3; ++l) {
        expect(m.dense[l].w, kDenseChain[l + 1], kDenseChain[l], "dense" + std::to_string(l) + ".w");
        if (m.dense[l].b.size() != kDenseChain[l + 1])
            throw std::invalid_argument("dense" + std::to_string(l) + ".b: wrong length");
    }
    if (m.seq_len < 1) throw std::invalid_argument("seq_len must be >= 1");
}

}  // namespace cdasim::nn
