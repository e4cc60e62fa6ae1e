#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "flq/ad/tensor.hpp"
#include "flq/core/stats.hpp"
#include "flq/qcbm/binner.hpp"

namespace flq::qcbm {

// Multi-bandwidth RBF Gram matrix. The standard kernel lives on the 256
// standardized bin midpoints x_b = PhiInv((b + 0.5)/256):
//   K[b,c] = sum_sigma exp(-(x_b - x_c)^2 / (2 sigma^2))
struct MmdKernel {
    static constexpr std::array<double, 3> kBandwidths = {0.25, 0.5, 1.0};

    std::size_t n = 0;
    std::vector<double> gram; // n x n, symmetric

    static MmdKernel from_points(const std::vector<double>& x,
                                 const std::vector<double>& bandwidths) {
        MmdKernel k;
        k.n = x.size();
        k.gram.assign(k.n * k.n, 0.0);
        for (std::size_t b = 0; b < k.n; ++b) {
            for (std::size_t c = b; c < k.n; ++c) {
                const double d2 = (x[b] - x[c]) * (x[b] - x[c]);
                double v = 0.0;
                for (double s : bandwidths) v += std::exp(-d2 / (2.0 * s * s));
                k.gram[b * k.n + c] = v;
                k.gram[c * k.n + b] = v;
            }
        }
        return k;
    }

    static MmdKernel standard() {
        constexpr int nb = GaussianBinner::kBins;
        std::vector<double> x(nb);
        for (int b = 0; b < nb; ++b) x[b] = normal_cdf_inv((double(b) + 0.5) / double(nb));
        return from_points(x, {kBandwidths.begin(), kBandwidths.end()});
    }

    double at(std::size_t b, std::size_t c) const { return gram[b * n + c]; }
};

// MMD^2(p, q) = (p - q)^T K (p - q); for discrete p, q this equals the
// three-term expectation form E_p[k] - 2 E_pq[k] + E_q[k].
inline double mmd2(const std::vector<double>& p, const std::vector<double>& q,
                   const MmdKernel& kernel) {
    if (p.size() != kernel.n || q.size() != kernel.n)
        throw std::invalid_argument("mmd2: distribution size does not match the kernel");
    const std::size_t n = kernel.n;
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = p[i] - q[i];
    double acc = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        const double* row = kernel.gram.data() + b * n;
        double rowdot = 0.0;
        for (std::size_t c = 0; c < n; ++c) rowdot += row[c] * d[c];
        acc += d[b] * rowdot;
    }
    return acc;
}

// Gradient of MMD^2 wrt circuit angles: 2 (p - q)^T K J, with J the
// parameter-shift Jacobian of the Born distribution.
inline std::vector<double> mmd2_gradient(const std::vector<double>& p,
                                         const std::vector<double>& q, const MmdKernel& kernel,
                                         const ad::Tensor& jacobian) {
    const std::size_t n = kernel.n;
    if (p.size() != n || q.size() != n || jacobian.shape[0] != n)
        throw std::invalid_argument("mmd2_gradient: sizes do not match the kernel");
    std::vector<double> r(n, 0.0); // r = K (p - q)
    for (std::size_t b = 0; b < n; ++b) {
        const double* row = kernel.gram.data() + b * n;
        double acc = 0.0;
        for (std::size_t c = 0; c < n; ++c) acc += row[c] * (p[c] - q[c]);
        r[b] = acc;
    }
    const std::size_t n_params = jacobian.shape[1];
    std::vector<double> grad(n_params, 0.0);
    for (std::size_t b = 0; b < n; ++b) {
        const double rb = 2.0 * r[b];
        const double* jrow = jacobian.data.data() + b * n_params;
        for (std::size_t j = 0; j < n_params; ++j) grad[j] += rb * jrow[j];
    }
    return grad;
}

} // namespace flq::qcbm
