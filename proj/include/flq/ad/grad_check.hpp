#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "flq/ad/tensor.hpp"

namespace flq::ad {

// Compares analytic gradients against central finite differences.
// The callable evaluates the scalar loss for a given parameter set and, when
// the output pointer is non-null, also fills one gradient tensor per block.
struct GradCheckReport {
    struct Block {
        std::string name;
        double max_rel_error = 0.0;
    };
    std::vector<Block> blocks;
    double max_rel_error = 0.0;

    bool pass(double tolerance) const { return max_rel_error < tolerance; }
};

using LossFn = std::function<double(const std::vector<Tensor>&, std::vector<Tensor>*)>;

inline double grad_rel_error(double analytic, double numeric) {
    const double denom = std::max(std::abs(analytic), std::abs(numeric)) + 1e-6;
    return std::abs(analytic - numeric) / denom;
}

inline GradCheckReport gradient_check(const LossFn& loss_fn, std::vector<Tensor> params,
                                      const std::vector<std::string>& names = {},
                                      double h = 1e-5) {
    std::vector<Tensor> analytic;
    loss_fn(params, &analytic);
    GradCheckReport report;
    for (std::size_t b = 0; b < params.size(); ++b) {
        GradCheckReport::Block block;
        block.name = b < names.size() ? names[b] : "block" + std::to_string(b);
        for (std::size_t i = 0; i < params[b].size(); ++i) {
            const double orig = params[b][i];
            params[b][i] = orig + h;
            const double lp = loss_fn(params, nullptr);
            params[b][i] = orig - h;
            const double lm = loss_fn(params, nullptr);
            params[b][i] = orig;
            const double numeric = (lp - lm) / (2.0 * h);
            block.max_rel_error =
                std::max(block.max_rel_error, grad_rel_error(analytic[b][i], numeric));
        }
        report.max_rel_error = std::max(report.max_rel_error, block.max_rel_error);
        report.blocks.push_back(std::move(block));
    }
    return report;
}

} // namespace flq::ad
