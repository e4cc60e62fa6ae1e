#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace flq {

// Iterative radix-2 Cooley-Tukey, in place. Length must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft_inplace: length must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

// Dominant nonzero frequency of a real series, in cycles per sample.
// The mean is removed and the series is truncated to a power of two.
inline double dominant_frequency(const std::vector<double>& series) {
    std::size_t n = 1;
    while (n * 2 <= series.size()) n *= 2;
    if (n < 8) throw std::invalid_argument("dominant_frequency: series too short");
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += series[i];
    mean /= static_cast<double>(n);
    std::vector<std::complex<double>> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = series[i] - mean;
    fft_inplace(a);
    std::size_t best = 1;
    double best_mag = 0.0;
    for (std::size_t k = 1; k <= n / 2; ++k) {
        const double mag = std::abs(a[k]);
        if (mag > best_mag) {
            best_mag = mag;
            best = k;
        }
    }
    return static_cast<double>(best) / static_cast<double>(n);
}

} // namespace flq
