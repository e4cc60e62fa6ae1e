#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "flq/ad/tensor.hpp"
#include "flq/core/errors.hpp"

namespace flq::ad {

// Bias-corrected Adam over a set of parameter blocks.
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<Tensor> m, v;

    explicit AdamState(double learning_rate = 1e-3) : lr(learning_rate) {}

    void ensure_slots(const std::vector<Tensor*>& params) {
        if (!m.empty()) return;
        for (const Tensor* p : params) {
            m.push_back(Tensor::zeros(p->shape));
            v.push_back(Tensor::zeros(p->shape));
        }
    }
};

inline void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
                      AdamState& state) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
    state.ensure_slots(params);
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (!grads[b]->same_shape(*params[b]))
            throw std::invalid_argument("adam_step: shape mismatch in block " + std::to_string(b));
        if (!grads[b]->all_finite())
            throw NumericalError("adam_step: non-finite gradient in block " + std::to_string(b) +
                                 " at step " + std::to_string(state.step + 1));
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t b = 0; b < params.size(); ++b) {
        Tensor& p = *params[b];
        const Tensor& g = *grads[b];
        Tensor& m = state.m[b];
        Tensor& v = state.v[b];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

} // namespace flq::ad
