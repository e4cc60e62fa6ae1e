#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "flq/core/rng.hpp"

namespace flq::qsim {

// Dense state vector over n qubits, stored as separate real and imaginary
// arrays in basis-index order. Qubit 0 is the least significant bit of the
// basis index; the bin <-> bitstring mapping elsewhere relies on this.
class StateVector {
public:
    explicit StateVector(int n_qubits) : n_(n_qubits) {
        if (n_qubits < 1 || n_qubits > 24)
            throw std::invalid_argument("StateVector: qubit count must be in [1, 24]");
        const std::size_t dim = std::size_t(1) << n_qubits;
        re_.assign(dim, 0.0);
        im_.assign(dim, 0.0);
        re_[0] = 1.0;
    }

    int n_qubits() const { return n_; }
    std::size_t dim() const { return re_.size(); }
    double real(std::size_t i) const { return re_[i]; }
    double imag(std::size_t i) const { return im_[i]; }

    // Ry(theta) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]] on one qubit.
    void apply_ry(int qubit, double theta) {
        check_qubit(qubit);
        const double c = std::cos(0.5 * theta);
        const double s = std::sin(0.5 * theta);
        const std::size_t bit = std::size_t(1) << qubit;
        const std::size_t dim = re_.size();
        for (std::size_t base = 0; base < dim; base += 2 * bit) {
            for (std::size_t off = 0; off < bit; ++off) {
                const std::size_t i0 = base + off;
                const std::size_t i1 = i0 + bit;
                const double r0 = re_[i0], r1 = re_[i1];
                const double m0 = im_[i0], m1 = im_[i1];
                re_[i0] = c * r0 - s * r1;
                re_[i1] = s * r0 + c * r1;
                im_[i0] = c * m0 - s * m1;
                im_[i1] = s * m0 + c * m1;
            }
        }
    }

    // Diagonal gate: negates amplitudes where both qubits are 1.
    void apply_cz(int q1, int q2) {
        check_qubit(q1);
        check_qubit(q2);
        if (q1 == q2) throw std::invalid_argument("apply_cz: qubits must differ");
        const std::size_t m1 = std::size_t(1) << q1;
        const std::size_t m2 = std::size_t(1) << q2;
        const std::size_t both = m1 | m2;
        const std::size_t dim = re_.size();
        for (std::size_t i = 0; i < dim; ++i) {
            if ((i & both) == both) {
                re_[i] = -re_[i];
                im_[i] = -im_[i];
            }
        }
    }

    // Pauli-X via Ry's bit-flip structure is not needed; basis-state preludes
    // use Ry(pi), which maps |0> -> |1> with amplitude +1.

    std::vector<double> born_probabilities() const {
        std::vector<double> p(re_.size());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = re_[i] * re_[i] + im_[i] * im_[i];
        return p;
    }

    double norm_squared() const {
        double s = 0.0;
        for (std::size_t i = 0; i < re_.size(); ++i) s += re_[i] * re_[i] + im_[i] * im_[i];
        return s;
    }

private:
    void check_qubit(int q) const {
        if (q < 0 || q >= n_) throw std::out_of_range("StateVector: qubit index out of range");
    }

    int n_;
    std::vector<double> re_, im_;
};

inline StateVector init_state(int n_qubits) { return StateVector(n_qubits); }

// Inverse-CDF sampling of basis-state indices from a probability vector.
inline std::vector<std::size_t> sample(const std::vector<double>& p, Rng& rng,
                                       std::size_t count) {
    double total = 0.0;
    for (double v : p) total += v;
    if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument("sample: probabilities not normalized (sum " +
                                    std::to_string(total) + ")");
    std::vector<double> cdf(p.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        cdf[i] = acc;
    }
    cdf.back() = 1.0;
    std::vector<std::size_t> out(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double u = rng.uniform();
        std::size_t lo = 0, hi = cdf.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (cdf[mid] > u)
                hi = mid;
            else
                lo = mid + 1;
        }
        out[k] = lo;
    }
    return out;
}

} // namespace flq::qsim
