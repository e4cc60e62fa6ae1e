#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "flq/core/stats.hpp"

namespace flq::qcbm {

// Equal-probability (quantile) quantizer: 256 bins under a Gaussian fit of
// the data, with the bin's representative value at its probability midpoint.
struct GaussianBinner {
    static constexpr int kBins = 256;

    double mu = 0.0;
    double sigma = 1.0;

    // b = clamp(floor(256 * Phi((v - mu)/sigma)), 0, 255)
    int quantize(double v) const {
        if (!std::isfinite(v)) throw std::invalid_argument("GaussianBinner: non-finite value");
        const double u = normal_cdf((v - mu) / sigma);
        int b = int(std::floor(double(kBins) * u));
        if (b < 0) b = 0;
        if (b >= kBins) b = kBins - 1;
        return b;
    }

    // v = mu + sigma * PhiInv((b + 0.5)/256)
    double dequantize(int b) const {
        if (b < 0 || b >= kBins) throw std::out_of_range("GaussianBinner: bin out of range");
        return mu + sigma * normal_cdf_inv((double(b) + 0.5) / double(kBins));
    }
};

inline GaussianBinner fit_binner(std::span<const double> values) {
    if (values.size() < 2) throw std::invalid_argument("fit_binner: need at least 2 values");
    auto [mu, sigma] = mean_stddev(values);
    if (!(sigma > 0.0))
        throw std::invalid_argument("fit_binner: zero variance (degenerate dimension)");
    return GaussianBinner{mu, sigma};
}

// Normalized 256-bin histogram of the quantized values.
inline std::vector<double> target_distribution(const GaussianBinner& binner,
                                               std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("target_distribution: empty input");
    std::vector<double> q(GaussianBinner::kBins, 0.0);
    for (double v : values) q[std::size_t(binner.quantize(v))] += 1.0;
    const double inv = 1.0 / double(values.size());
    for (double& v : q) v *= inv;
    return q;
}

} // namespace flq::qcbm
