#pragma once

// Forward pass and exact MSE gradients (backpropagation through time) for the
// LSTM + dense head.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdasim/nn/model.hpp"

namespace cdasim::nn {

using HiddenVector = std::array<double, kHidden>;

struct LstmStepOut {
    HiddenVector h{};
    HiddenVector c{};
};

struct Sample {
    std::span<const InputVector> window;  // oldest first, length seq_len
    double target = 0.0;
};

struct Gradients {
    ModelParams grad;  // same shapes as the model; norm/seq_len unused
    double mse = 0.0;
};

namespace detail {

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

struct StepCache {
    InputVector x{};
    HiddenVector h_prev{}, c_prev{};
    std::array<HiddenVector, 4> gate{};  // activated i, f, o, g
    HiddenVector c{}, tanh_c{}, h{};
};

inline void lstm_step_cached(const LstmParams& p, const InputVector& x, const HiddenVector& h,
                             const HiddenVector& c, StepCache& out) {
    out.x = x;
    out.h_prev = h;
    out.c_prev = c;
    for (std::size_t g = 0; g < 4; ++g) {
        const Matrix& wx = p.wx[g];
        const Matrix& wh = p.wh[g];
        for (std::size_t u = 0; u < kHidden; ++u) {
            double z = p.bias[g][u];
            const double* rx = &wx.data[u * kInputs];
            for (std::size_t k = 0; k < kInputs; ++k) z += rx[k] * x[k];
            const double* rh = &wh.data[u * kHidden];
            for (std::size_t k = 0; k < kHidden; ++k) z += rh[k] * h[k];
            out.gate[g][u] = g == kCandidate ? std::tanh(z) : sigmoid(z);
        }
    }
    for (std::size_t u = 0; u < kHidden; ++u) {
        out.c[u] = out.gate[kForgetGate][u] * c[u] + out.gate[kInputGate][u] * out.gate[kCandidate][u];
        out.tanh_c[u] = std::tanh(out.c[u]);
        out.h[u] = out.gate[kOutputGate][u] * out.tanh_c[u];
    }
}

struct ForwardCache {
    std::vector<StepCache> steps;
    std::array<std::vector<double>, 3> pre;   // dense pre-activations
    std::array<std::vector<double>, 3> post;  // dense outputs (ReLU, ReLU, identity)
};

inline double forward_cached(const ModelParams& m, std::span<const InputVector> window, ForwardCache& cache) {
    cache.steps.resize(window.size());
    HiddenVector h{}, c{};
    for (std::size_t t = 0; t < window.size(); ++t) {
        lstm_step_cached(m.lstm, window[t], h, c, cache.steps[t]);
        h = cache.steps[t].h;
        c = cache.steps[t].c;
    }
    std::span<const double> in(h);
    for (std::size_t l = 0; l < 3; ++l) {
        const DenseParams& d = m.dense[l];
        auto& pre = cache.pre[l];
        auto& post = cache.post[l];
        pre.assign(d.w.rows, 0.0);
        post.assign(d.w.rows, 0.0);
        for (std::size_t r = 0; r < d.w.rows; ++r) {
            double z = d.b[r];
            for (std::size_t k = 0; k < d.w.cols; ++k) z += d.w(r, k) * in[k];
            pre[r] = z;
            post[r] = l < 2 ? std::max(z, 0.0) : z;
        }
        in = std::span<const double>(post);
    }
    return cache.post[2][0];
}

}  // namespace detail

/// One LSTM cell update: i, f, o = sigmoid(Wx + Uh + b), g = tanh(...),
/// c' = f*c + i*g, h' = o*tanh(c').
inline LstmStepOut lstm_step(const LstmParams& p, std::span<const double> x, std::span<const double> h,
                             std::span<const double> c) {
    if (x.size() != kInputs || h.size() != kHidden || c.size() != kHidden)
        throw std::invalid_argument("lstm_step: expected x[13], h[10], c[10]");
    InputVector xv;
    HiddenVector hv, cv;
    std::copy(x.begin(), x.end(), xv.begin());
    std::copy(h.begin(), h.end(), hv.begin());
    std::copy(c.begin(), c.end(), cv.begin());
    detail::StepCache s;
    detail::lstm_step_cached(p, xv, hv, cv, s);
    return {s.h, s.c};
}

/// Normalised price prediction for one window (zero initial state).
inline double forward(const ModelParams& m, std::span<const InputVector> window) {
    if (window.size() != static_cast<std::size_t>(m.seq_len))
        throw std::invalid_argument("forward: window length " + std::to_string(window.size()) + " != seq_len " +
                                    std::to_string(m.seq_len));
    detail::ForwardCache cache;
    return detail::forward_cached(m, window, cache);
}

/// Mean squared error over the batch and its exact gradient.
inline Gradients backward(const ModelParams& m, std::span<const Sample> batch) {
    if (batch.empty()) throw std::invalid_argument("backward: empty batch");
    Gradients out{zero_model(m.seq_len), 0.0};
    ModelParams& g = out.grad;
    const double scale = 2.0 / static_cast<double>(batch.size());
    detail::ForwardCache cache;

    for (const Sample& s : batch) {
        if (s.window.size() != static_cast<std::size_t>(m.seq_len))
            throw std::invalid_argument("backward: window length != seq_len");
        const double y = detail::forward_cached(m, s.window, cache);
        const double err = y - s.target;
        out.mse += err * err;

        // Dense head, last layer first.
        std::vector<double> delta{scale * err};
        for (int l = 2; l >= 0; --l) {
            const DenseParams& d = m.dense[static_cast<std::size_t>(l)];
            DenseParams& gd = g.dense[static_cast<std::size_t>(l)];
            std::span<const double> in = l == 0 ? std::span<const double>(cache.steps.back().h)
                                                : std::span<const double>(cache.post[static_cast<std::size_t>(l - 1)]);
            std::vector<double> back(d.w.cols, 0.0);
            for (std::size_t r = 0; r < d.w.rows; ++r) {
                gd.b[r] += delta[r];
                for (std::size_t k = 0; k < d.w.cols; ++k) {
                    gd.w(r, k) += delta[r] * in[k];
                    back[k] += d.w(r, k) * delta[r];
                }
            }
            if (l > 0) {
                const auto& pre = cache.pre[static_cast<std::size_t>(l - 1)];
                for (std::size_t k = 0; k < back.size(); ++k)
                    if (pre[k] <= 0.0) back[k] = 0.0;
            }
            delta = std::move(back);
        }

        // Through time.
        HiddenVector dh{}, dc{};
        std::copy(delta.begin(), delta.end(), dh.begin());
        for (std::size_t t = cache.steps.size(); t-- > 0;) {
            const detail::StepCache& st = cache.steps[t];
            std::array<HiddenVector, 4> dz{};
            HiddenVector dc_prev{};
            for (std::size_t u = 0; u < kHidden; ++u) {
                const double i = st.gate[kInputGate][u];
                const double f = st.gate[kForgetGate][u];
                const double o = st.gate[kOutputGate][u];
                const double gg = st.gate[kCandidate][u];
                const double d_o = dh[u] * st.tanh_c[u];
                const double d_c = dc[u] + dh[u] * o * (1.0 - st.tanh_c[u] * st.tanh_c[u]);
                dz[kInputGate][u] = d_c * gg * i * (1.0 - i);
                dz[kForgetGate][u] = d_c * st.c_prev[u] * f * (1.0 - f);
                dz[kOutputGate][u] = d_o * o * (1.0 - o);
                dz[kCandidate][u] = d_c * i * (1.0 - gg * gg);
                dc_prev[u] = d_c * f;
            }
            HiddenVector dh_prev{};
            for (std::size_t gi = 0; gi < 4; ++gi) {
                Matrix& gwx = g.lstm.wx[gi];
                Matrix& gwh = g.lstm.wh[gi];
                const Matrix& wh = m.lstm.wh[gi];
                for (std::size_t u = 0; u < kHidden; ++u) {
                    const double z = dz[gi][u];
                    g.lstm.bias[gi][u] += z;
                    for (std::size_t k = 0; k < kInputs; ++k) gwx(u, k) += z * st.x[k];
                    for (std::size_t k = 0; k < kHidden; ++k) {
                        gwh(u, k) += z * st.h_prev[k];
                        dh_prev[k] += wh(u, k) * z;
                    }
                }
            }
            dh = dh_prev;
            dc = dc_prev;
        }
    }
    out.mse /= static_cast<double>(batch.size());
    return out;
}

inline double batch_mse(const ModelParams& m, std::span<const Sample> batch) {
    if (batch.empty()) throw std::invalid_argument("batch_mse: empty batch");
    detail::ForwardCache cache;
    double sum = 0.0;
    for (const Sample& s : batch) {
        const double e = detail::forward_cached(m, s.window, cache) - s.target;
        sum += e * e;
    }
    return sum / static_cast<double>(batch.size());
}

}  // namespace cdasim::nn
