#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdasim/nn/model.hpp"

namespace cdasim::nn {

struct AdamState {
    double learning_rate = 1.5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step = 0;
    std::vector<double> m;  // first moments, flat in for_each_tensor order
    std::vector<double> v;  // second moments
};

/// Bias-corrected Adam update on flat spans; moments are sized on first use.
inline void adam_update(AdamState& s, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam: parameter/gradient size mismatch");
    if (s.m.empty()) {
        s.m.assign(params.size(), 0.0);
        s.v.assign(params.size(), 0.0);
    }
    if (s.m.size() != params.size()) throw std::invalid_argument("adam: state shaped for a different model");
    ++s.step;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
        s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
        const double m_hat = s.m[i] / c1;
        const double v_hat = s.v[i] / c2;
        params[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
    }
}

inline std::vector<double> flatten(const ModelParams& m) {
    std::vector<double> flat;
    for_each_tensor(m, [&](const std::string&, std::span<const double> t) { flat.insert(flat.end(), t.begin(), t.end()); });
    return flat;
}

inline void unflatten(ModelParams& m, std::span<const double> flat) {
    std::size_t pos = 0;
    for_each_tensor(m, [&](const std::string&, std::span<double> t) {
        if (pos + t.size() > flat.size()) throw std::invalid_argument("unflatten: too few values");
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), t.size(), t.begin());
        pos += t.size();
    });
    if (pos != flat.size()) throw std::invalid_argument("unflatten: too many values");
}

/// One Adam step over every trainable tensor of `params`.
inline void adam_step(AdamState& s, ModelParams& params, const ModelParams& grads) {
    auto p = flatten(params);
    auto g = flatten(grads);
    adam_update(s, p, g);
    unflatten(params, p);
}

}  // namespace cdasim::nn
