#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "flq/core/parallel.hpp"
#include "flq/core/rng.hpp"

namespace flq::ad {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)), data(count(shape), fill) {}
    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != count(shape)) throw std::invalid_argument("Tensor: shape/data mismatch");
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
    }
    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i)
            s += (i ? "x" : "") + std::to_string(shape[i]);
        return s + "]";
    }
};

// C[m,n] = A[m,k] * B[k,n], parallel over row bands with a 4-way unrolled
// k loop. Each output row is produced by exactly one worker, so the result
// does not depend on the partitioning.
inline void matmul_into(const double* a, const double* b, double* c, std::size_t m,
                        std::size_t k, std::size_t n) {
    parallel_for(m, [&](std::size_t rb, std::size_t re) {
        for (std::size_t r = rb; r < re; ++r) {
            const double* arow = a + r * k;
            double* crow = c + r * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
            std::size_t kk = 0;
            for (; kk + 4 <= k; kk += 4) {
                const double a0 = arow[kk], a1 = arow[kk + 1];
                const double a2 = arow[kk + 2], a3 = arow[kk + 3];
                const double* b0 = b + kk * n;
                const double* b1 = b0 + n;
                const double* b2 = b1 + n;
                const double* b3 = b2 + n;
                for (std::size_t j = 0; j < n; ++j)
                    crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            for (; kk < k; ++kk) {
                const double av = arow[kk];
                const double* brow = b + kk * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
        throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() + " " +
                                    b.shape_str());
    Tensor c({a.shape[0], b.shape[1]});
    matmul_into(a.data.data(), b.data.data(), c.data.data(), a.shape[0], a.shape[1], b.shape[1]);
    return c;
}

// C[m,n] = A[m,k] * B[n,k]^T. The dot-product form defeats vectorization, so
// one side is transposed up front to reach the streaming kernel; whichever
// matrix is smaller pays the transpose.
inline Tensor matmul_bt(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[1])
        throw std::invalid_argument("matmul_bt: incompatible shapes " + a.shape_str() + " " +
                                    b.shape_str());
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
    Tensor c({m, n});
    if (b.size() <= a.size()) {
        std::vector<double> bt(k * n);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t kk = 0; kk < k; ++kk) bt[kk * n + j] = b.data[j * k + kk];
        matmul_into(a.data.data(), bt.data(), c.data.data(), m, k, n);
    } else {
        // C^T = B * A^T, with the small A transposed.
        std::vector<double> at(k * m);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t kk = 0; kk < k; ++kk) at[kk * m + r] = a.data[r * k + kk];
        std::vector<double> ct(n * m);
        matmul_into(b.data.data(), at.data(), ct.data(), n, k, m);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t r = 0; r < m; ++r) c.data[r * n + j] = ct[j * m + r];
    }
    return c;
}

// C[k,n] = A[m,k]^T * B[m,n]
inline Tensor matmul_at(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[0] != b.shape[0])
        throw std::invalid_argument("matmul_at: incompatible shapes " + a.shape_str() + " " +
                                    b.shape_str());
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor c({k, n});
    parallel_for(k, [&](std::size_t rb, std::size_t re) {
        for (std::size_t r = rb; r < re; ++r) {
            double* crow = c.data.data() + r * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const double av = a.data[i * k + r];
                if (av == 0.0) continue;
                const double* brow = b.data.data() + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
    return c;
}

// Kaiming-uniform init for ReLU stacks, Xavier-uniform for linear heads.
inline Tensor kaiming_uniform(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / double(fan_in));
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

inline Tensor xavier_uniform(std::vector<std::size_t> shape, std::size_t fan_in,
                             std::size_t fan_out, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

} // namespace flq::ad
