#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "flq/ad/tensor.hpp"

namespace flq::eval {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major d x d).
// Returns eigenvalues ascending with matching eigenvector columns.
inline void jacobi_eigen(std::vector<double> a, std::size_t d, std::vector<double>& eigvals,
                         std::vector<double>& eigvecs /* column-major [d x d] */) {
    eigvecs.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) eigvecs[i * d + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double akp = a[k * d + p], akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double apk = a[p * d + k], aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double vkp = eigvecs[k * d + p], vkq = eigvecs[k * d + q];
                    eigvecs[k * d + p] = c * vkp - s * vkq;
                    eigvecs[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    eigvals.assign(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) eigvals[i] = a[i * d + i];
}

struct PcaResult {
    ad::Tensor components;                  // [k x D], orthonormal rows
    std::vector<double> explained_variance; // eigenvalues of the kept components
    std::vector<double> explained_ratio;
    ad::Tensor coords;                      // [N x k], centered data * components^T
    std::vector<double> center;             // column means
    bool reduced = false;                   // k was reduced on a degenerate covariance
};

// PCA via eigendecomposition of the sample covariance. Components get a
// deterministic sign: the largest-magnitude entry of each is made positive.
inline PcaResult pca_fit_project(const ad::Tensor& data, std::size_t k = 2) {
    if (data.rank() != 2) throw std::invalid_argument("pca: data must be [N x D]");
    const std::size_t n = data.shape[0], d = data.shape[1];
    if (n < k + 1) throw std::invalid_argument("pca: need at least k+1 rows");
    PcaResult res;
    res.center.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) res.center[j] += data.data[i * d + j];
    for (auto& c : res.center) c /= double(n);

    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < d; ++p) {
            const double vp = data.data[i * d + p] - res.center[p];
            for (std::size_t q = p; q < d; ++q)
                cov[p * d + q] += vp * (data.data[i * d + q] - res.center[q]);
        }
    }
    for (std::size_t p = 0; p < d; ++p)
        for (std::size_t q = 0; q < p; ++q) cov[p * d + q] = cov[q * d + p];
    for (auto& v : cov) v /= double(n - 1);

    std::vector<double> eigvals, eigvecs;
    jacobi_eigen(cov, d, eigvals, eigvecs);

    std::vector<std::size_t> idx(d);
    for (std::size_t i = 0; i < d; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return eigvals[a] > eigvals[b];
    });

    double total_var = 0.0;
    for (double v : eigvals) total_var += std::max(v, 0.0);

    // Drop components whose variance is numerically zero.
    std::size_t keep = 0;
    for (std::size_t i = 0; i < k && i < d; ++i) {
        if (eigvals[idx[i]] > 1e-12 * std::max(total_var, 1e-300)) ++keep;
    }
    if (keep < k) res.reduced = true;
    if (keep == 0) throw std::invalid_argument("pca: covariance has no usable direction");

    res.components = ad::Tensor({keep, d});
    for (std::size_t c = 0; c < keep; ++c) {
        const std::size_t e = idx[c];
        // column e of eigvecs
        std::size_t max_j = 0;
        for (std::size_t j = 1; j < d; ++j)
            if (std::abs(eigvecs[j * d + e]) > std::abs(eigvecs[max_j * d + e])) max_j = j;
        const double sign = eigvecs[max_j * d + e] >= 0.0 ? 1.0 : -1.0;
        for (std::size_t j = 0; j < d; ++j)
            res.components.data[c * d + j] = sign * eigvecs[j * d + e];
        res.explained_variance.push_back(eigvals[e]);
        res.explained_ratio.push_back(total_var > 0.0 ? eigvals[e] / total_var : 0.0);
    }

    res.coords = ad::Tensor({n, keep});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < keep; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j)
                s += (data.data[i * d + j] - res.center[j]) * res.components.data[c * d + j];
            res.coords.data[i * keep + c] = s;
        }
    return res;
}

} // namespace flq::eval
