#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flq/ad/tensor.hpp"
#include "flq/core/parallel.hpp"
#include "flq/core/rng.hpp"

namespace flq::eval {

struct TsneOptions {
    double perplexity = 100.0;
    int iters = 1000;
    double learning_rate = 200.0;
    int exaggeration_iters = 250;
    double exaggeration = 12.0;
    double momentum_early = 0.5;
    double momentum_late = 0.8;
    int momentum_switch = 250;
    int log_every = 50;
    std::uint64_t seed = 0;
};

struct TsneResult {
    ad::Tensor coords;                          // [N x 2]
    std::vector<std::pair<int, double>> kl_log; // (iteration, KL divergence)
    double max_entropy_error = 0.0;             // calibration residual, nats
};

namespace detail {

// Conditional distribution for row i at precision beta; returns entropy in
// nats and fills p (row of length n, p[i] = 0).
inline double conditional_row(const std::vector<double>& d2, std::size_t i, double beta,
                              std::vector<double>& p) {
    const std::size_t n = p.size();
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        p[j] = j == i ? 0.0 : std::exp(-beta * d2[j]);
        sum += p[j];
    }
    if (sum <= 0.0 || !std::isfinite(sum)) return -1.0;
    double entropy = 0.0;
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) {
        p[j] *= inv;
        if (p[j] > 1e-300) entropy -= p[j] * std::log(p[j]);
    }
    return entropy;
}

} // namespace detail

// Exact symmetric t-SNE. Per-point precisions are calibrated by binary
// search until the conditional entropy matches log(perplexity); plain
// momentum gradient descent with early exaggeration does the rest.
inline TsneResult tsne_embed(const ad::Tensor& data, const TsneOptions& opt = {}) {
    if (data.rank() != 2) throw std::invalid_argument("tsne: data must be [N x D]");
    const std::size_t n = data.shape[0], dim = data.shape[1];
    if (double(n) <= 3.0 * opt.perplexity)
        throw std::invalid_argument(
            "tsne: need N > 3 * perplexity (N = " + std::to_string(n) + ", perplexity = " +
            std::to_string(opt.perplexity) + "); use a smaller perplexity");

    const double target_entropy = std::log(opt.perplexity);

    // Pairwise squared distances.
    std::vector<double> d2(n * n, 0.0);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < dim; ++c) {
                    const double diff = data.data[i * dim + c] - data.data[j * dim + c];
                    s += diff * diff;
                }
                d2[i * n + j] = s;
            }
        }
    });

    // Per-point binary search for the precision matching the target entropy.
    std::vector<double> p_cond(n * n, 0.0);
    std::vector<double> entropy_err(n, 0.0);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        std::vector<double> row(n, 0.0), d2row(n, 0.0);
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = 0; j < n; ++j) d2row[j] = d2[i * n + j];
            double beta = 1.0;
            double lo = 0.0, hi = std::numeric_limits<double>::infinity();
            double entropy = 0.0;
            for (int it = 0; it < 200; ++it) {
                entropy = detail::conditional_row(d2row, i, beta, row);
                if (entropy < 0.0) { // all mass underflowed; soften
                    hi = beta;
                    beta = 0.5 * (lo + beta);
                    continue;
                }
                const double diff = entropy - target_entropy;
                if (std::abs(diff) < 1e-7) break;
                if (diff > 0.0) { // too flat, sharpen
                    lo = beta;
                    beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
                } else {
                    hi = beta;
                    beta = 0.5 * (lo + beta);
                }
            }
            entropy_err[i] = std::abs(entropy - target_entropy);
            for (std::size_t j = 0; j < n; ++j) p_cond[i * n + j] = row[j];
        }
    });

    TsneResult res;
    for (double e : entropy_err) res.max_entropy_error = std::max(res.max_entropy_error, e);

    // Symmetrize: P_ij = (p_j|i + p_i|j) / (2N).
    std::vector<double>& pmat = p_cond;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = (pmat[i * n + j] + pmat[j * n + i]) / (2.0 * double(n));
            pmat[i * n + j] = v;
            pmat[j * n + i] = v;
        }
        pmat[i * n + i] = 0.0;
    }

    Rng rng(opt.seed);
    std::vector<double> y(n * 2), vel(n * 2, 0.0), grad(n * 2, 0.0);
    for (auto& v : y) v = rng.normal() * 1e-4;

    std::vector<double> qnum(n * n, 0.0); // 1 / (1 + |y_i - y_j|^2)

    for (int iter = 0; iter < opt.iters; ++iter) {
        const double exaggeration = iter < opt.exaggeration_iters ? opt.exaggeration : 1.0;
        const double momentum =
            iter < opt.momentum_switch ? opt.momentum_early : opt.momentum_late;

        parallel_for(n, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double dy0 = y[i * 2] - y[j * 2];
                    const double dy1 = y[i * 2 + 1] - y[j * 2 + 1];
                    qnum[i * n + j] = i == j ? 0.0 : 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
                }
            }
        });
        double z = 0.0; // fixed-order reduction
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) z += qnum[i * n + j];
        const double inv_z = 1.0 / z;

        parallel_for(n, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                double g0 = 0.0, g1 = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    if (j == i) continue;
                    const double q = qnum[i * n + j];
                    const double coeff = (exaggeration * pmat[i * n + j] - q * inv_z) * q;
                    g0 += coeff * (y[i * 2] - y[j * 2]);
                    g1 += coeff * (y[i * 2 + 1] - y[j * 2 + 1]);
                }
                grad[i * 2] = 4.0 * g0;
                grad[i * 2 + 1] = 4.0 * g1;
            }
        });

        for (std::size_t k = 0; k < n * 2; ++k) {
            vel[k] = momentum * vel[k] - opt.learning_rate * grad[k];
            y[k] += vel[k];
        }

        if (opt.log_every > 0 &&
            ((iter + 1) % opt.log_every == 0 || iter + 1 == opt.iters)) {
            double kl = 0.0; // against the true (non-exaggerated) P
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double p = pmat[i * n + j];
                    if (p <= 1e-300) continue;
                    const double q = std::max(qnum[i * n + j] * inv_z, 1e-12);
                    kl += p * std::log(p / q);
                }
            }
            res.kl_log.emplace_back(iter + 1, kl);
        }
    }

    res.coords = ad::Tensor({n, 2}, std::move(y));
    return res;
}

} // namespace flq::eval
