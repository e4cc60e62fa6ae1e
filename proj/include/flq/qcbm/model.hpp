#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "flq/ad/adam.hpp"
#include "flq/core/errors.hpp"
#include "flq/core/rng.hpp"
#include "flq/io/checkpoint.hpp"
#include "flq/qcbm/binner.hpp"
#include "flq/qcbm/mmd.hpp"
#include "flq/qsim/ansatz.hpp"

namespace flq::qcbm {

inline constexpr int kLatentDim = 7;
inline constexpr int kQubits = 8;
inline constexpr int kLayers = 7;

inline qsim::LayeredAnsatz born_machine_ansatz() { return qsim::LayeredAnsatz(kQubits, kLayers); }

// Seven independent 8-qubit Born machines, one per latent dimension, plus the
// per-dimension quantizers they were trained against.
struct QcbmModel {
    std::array<qsim::ParamTensor, kLatentDim> params;
    std::array<GaussianBinner, kLatentDim> binners;

    void save(const std::string& path) const {
        io::Checkpoint ck;
        for (int d = 0; d < kLatentDim; ++d) {
            ck.put("qcbm/dim" + std::to_string(d) + "/angles", params[d]);
            ck.put("qcbm/dim" + std::to_string(d) + "/binner",
                   ad::Tensor({2}, {binners[d].mu, binners[d].sigma}));
        }
        ck.save(path);
    }

    static QcbmModel load(const std::string& path) {
        const auto ck = io::Checkpoint::load(path);
        QcbmModel m;
        for (int d = 0; d < kLatentDim; ++d) {
            m.params[d] = ck.get("qcbm/dim" + std::to_string(d) + "/angles");
            const auto& b = ck.get("qcbm/dim" + std::to_string(d) + "/binner");
            m.binners[d] = GaussianBinner{b[0], b[1]};
        }
        return m;
    }
};

struct TrainResult {
    qsim::ParamTensor params;
    std::vector<double> loss_history; // MMD^2 before each update
    double final_mmd2 = 0.0;
};

// Adam on the exact multi-bandwidth MMD^2 between the Born distribution and
// the 256-bin target. Angles start uniform in [-0.1, 0.1].
inline TrainResult train_qcbm(const std::vector<double>& target, const MmdKernel& kernel,
                              std::uint64_t seed, int iters = 100, double lr = 0.1) {
    const auto ansatz = born_machine_ansatz();
    Rng rng(seed);
    TrainResult result;
    result.params = qsim::make_params(ansatz);
    for (auto& a : result.params.data) a = rng.uniform(-0.1, 0.1);

    ad::AdamState opt(lr);
    for (int it = 0; it < iters; ++it) {
        const auto p = qsim::ansatz_probabilities(ansatz, result.params);
        const double loss = mmd2(p, target, kernel);
        if (!std::isfinite(loss))
            throw NumericalError("train_qcbm: non-finite loss at iteration " + std::to_string(it),
                                 it);
        result.loss_history.push_back(loss);
        const auto jac = qsim::parameter_shift_jacobian(ansatz, result.params);
        const auto grad = mmd2_gradient(p, target, kernel, jac);
        ad::Tensor grad_t(result.params.shape, grad);
        std::vector<ad::Tensor*> ps = {&result.params};
        std::vector<const ad::Tensor*> gs = {&grad_t};
        ad::adam_step(ps, gs, opt);
    }
    result.final_mmd2 =
        mmd2(qsim::ansatz_probabilities(ansatz, result.params), target, kernel);
    return result;
}

// Trains the seven per-dimension machines. `columns[d]` holds the continuous
// latent values of dimension d; trainings are independent.
inline QcbmModel train_qcbm_model(const std::array<std::vector<double>, kLatentDim>& columns,
                                  const MmdKernel& kernel, std::uint64_t seed, int iters = 100,
                                  double lr = 0.1,
                                  std::array<std::vector<double>, kLatentDim>* losses = nullptr) {
    QcbmModel model;
    for (int d = 0; d < kLatentDim; ++d) {
        model.binners[d] = fit_binner(columns[d]);
        const auto target = target_distribution(model.binners[d], columns[d]);
        auto r = train_qcbm(target, kernel, derive_seed(seed, "dim" + std::to_string(d)), iters,
                            lr);
        model.params[d] = std::move(r.params);
        if (losses) (*losses)[d] = std::move(r.loss_history);
    }
    return model;
}

// One 7-vector: per dimension, sample a bin from the exact Born distribution
// and dequantize it.
inline std::array<double, kLatentDim> sample_latent_vector(const QcbmModel& model, Rng& rng) {
    const auto ansatz = born_machine_ansatz();
    std::array<double, kLatentDim> out{};
    for (int d = 0; d < kLatentDim; ++d) {
        const auto p = qsim::ansatz_probabilities(ansatz, model.params[d]);
        const auto bin = qsim::sample(p, rng, 1)[0];
        out[d] = model.binners[d].dequantize(int(bin));
    }
    return out;
}

} // namespace flq::qcbm
