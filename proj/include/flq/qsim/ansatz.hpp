#pragma once

#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "flq/ad/tensor.hpp"
#include "flq/core/parallel.hpp"
#include "flq/qsim/state.hpp"

namespace flq::qsim {

// One layer = Ry on every qubit followed by a ring of CZ entanglers.
struct LayeredAnsatz {
    int n_qubits = 0;
    int n_layers = 0;
    std::vector<std::pair<int, int>> entangler; // ring, each edge once

    LayeredAnsatz(int qubits, int layers) : n_qubits(qubits), n_layers(layers) {
        if (qubits >= 2) {
            const int edges = qubits == 2 ? 1 : qubits; // 2-qubit ring has a single edge
            for (int i = 0; i < edges; ++i) entangler.emplace_back(i, (i + 1) % qubits);
        }
    }

    std::size_t n_params() const { return std::size_t(n_layers) * n_qubits; }
};

// Angles are a [layers x qubits] tensor, radians.
using ParamTensor = ad::Tensor;

inline ParamTensor make_params(const LayeredAnsatz& a, double fill = 0.0) {
    return ParamTensor({std::size_t(a.n_layers), std::size_t(a.n_qubits)}, fill);
}

inline void check_params(const LayeredAnsatz& a, const ParamTensor& params) {
    if (params.rank() != 2 || params.shape[0] != std::size_t(a.n_layers) ||
        params.shape[1] != std::size_t(a.n_qubits))
        throw std::invalid_argument("run_ansatz: params must be [layers x qubits], got " +
                                    params.shape_str());
}

// Basis-state prelude: Ry(pi) flips each listed qubit of |0...0>.
inline StateVector run_ansatz(const LayeredAnsatz& a, const ParamTensor& params,
                              const std::vector<int>& flip_prelude = {}) {
    check_params(a, params);
    StateVector state(a.n_qubits);
    constexpr double kPi = 3.14159265358979323846264338327950288;
    for (int q : flip_prelude) state.apply_ry(q, kPi);
    for (int layer = 0; layer < a.n_layers; ++layer) {
        for (int q = 0; q < a.n_qubits; ++q)
            state.apply_ry(q, params[std::size_t(layer) * a.n_qubits + q]);
        for (auto [q1, q2] : a.entangler) state.apply_cz(q1, q2);
    }
    return state;
}

inline std::vector<double> ansatz_probabilities(const LayeredAnsatz& a, const ParamTensor& params,
                                                const std::vector<int>& flip_prelude = {}) {
    return run_ansatz(a, params, flip_prelude).born_probabilities();
}

// Exact parameter-shift rule for Ry parameters:
//   dp/dtheta_j = (p(theta_j + pi/2) - p(theta_j - pi/2)) / 2.
// Returned row-major as [outcome][param]. The 2*n_params shifted circuit
// evaluations are independent and fan out across workers.
inline ad::Tensor parameter_shift_jacobian(const LayeredAnsatz& a, const ParamTensor& params,
                                           const std::vector<int>& flip_prelude = {}) {
    check_params(a, params);
    const std::size_t n_params = a.n_params();
    const std::size_t dim = std::size_t(1) << a.n_qubits;
    constexpr double kHalfPi = 1.57079632679489661923132169163975144;
    std::vector<std::vector<double>> shifted(2 * n_params);
    parallel_for(2 * n_params, [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            const std::size_t j = t / 2;
            const double sign = (t % 2 == 0) ? 1.0 : -1.0;
            ParamTensor shifted_params = params;
            shifted_params[j] += sign * kHalfPi;
            shifted[t] = ansatz_probabilities(a, shifted_params, flip_prelude);
        }
    });
    ad::Tensor jac({dim, n_params});
    for (std::size_t j = 0; j < n_params; ++j) {
        const auto& plus = shifted[2 * j];
        const auto& minus = shifted[2 * j + 1];
        for (std::size_t i = 0; i < dim; ++i)
            jac.data[i * n_params + j] = 0.5 * (plus[i] - minus[i]);
    }
    return jac;
}

} // namespace flq::qsim
