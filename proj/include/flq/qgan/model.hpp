#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flq/ad/adam.hpp"
#include "flq/ad/graph.hpp"
#include "flq/core/errors.hpp"
#include "flq/core/rng.hpp"
#include "flq/io/checkpoint.hpp"
#include "flq/latent.hpp"
#include "flq/qcbm/binner.hpp"
#include "flq/qsim/ansatz.hpp"

namespace flq::qgan {

// Seven 10-qubit generators (data qubits 0..7, ancillas 8..9, 6 layers with a
// full CZ ring) against one classical discriminator that consumes the 7 x 256
// product of per-dimension bin distributions.
inline constexpr int kDataQubits = 8;
inline constexpr int kQubits = 10;
inline constexpr int kLayers = 6;
inline constexpr int kBins = qcbm::GaussianBinner::kBins;
inline constexpr std::size_t kDiscInput = std::size_t(kLatentDim) * kBins; // 1792

inline qsim::LayeredAnsatz generator_ansatz() { return qsim::LayeredAnsatz(kQubits, kLayers); }

// Basis-state preparation of the noise bin: data qubit i is flipped when bit
// i of b is set; ancillas stay |0>.
inline std::vector<int> encode_noise(int b) {
    if (b < 0 || b >= kBins) throw std::out_of_range("encode_noise: bin out of range");
    std::vector<int> flips;
    for (int i = 0; i < kDataQubits; ++i)
        if (b & (1 << i)) flips.push_back(i);
    return flips;
}

// Ancilla marginalization: p(d) = sum_a p_full(a * 256 + d) with qubit 0 as
// the least significant bit.
inline std::vector<double> marginalize_ancillas(const std::vector<double>& p_full) {
    if (p_full.size() != std::size_t(1) << kQubits)
        throw std::invalid_argument("marginalize_ancillas: expected 1024 outcomes");
    std::vector<double> p(kBins, 0.0);
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t d = 0; d < std::size_t(kBins); ++d) p[d] += p_full[a * kBins + d];
    return p;
}

inline std::vector<double> generator_distribution(const qsim::ParamTensor& params, int noise_bin) {
    const auto ansatz = generator_ansatz();
    return marginalize_ancillas(
        qsim::ansatz_probabilities(ansatz, params, encode_noise(noise_bin)));
}

// Marginalized parameter-shift Jacobian: [256 x n_params].
inline ad::Tensor generator_jacobian(const qsim::ParamTensor& params, int noise_bin) {
    const auto ansatz = generator_ansatz();
    const ad::Tensor full = qsim::parameter_shift_jacobian(ansatz, params, encode_noise(noise_bin));
    const std::size_t n_params = full.shape[1];
    ad::Tensor jac({std::size_t(kBins), n_params});
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t d = 0; d < std::size_t(kBins); ++d)
            for (std::size_t j = 0; j < n_params; ++j)
                jac.data[d * n_params + j] += full.data[(a * kBins + d) * n_params + j];
    return jac;
}

// Per-dimension normalized histograms of the quantized batch rows: [7 x 256].
inline ad::Tensor real_batch_distribution(std::span<const std::array<double, kLatentDim>> rows,
                                          const std::array<qcbm::GaussianBinner, kLatentDim>& binners) {
    if (rows.empty()) throw std::invalid_argument("real_batch_distribution: empty batch");
    ad::Tensor m({std::size_t(kLatentDim), std::size_t(kBins)});
    for (const auto& row : rows)
        for (int d = 0; d < kLatentDim; ++d)
            m.data[std::size_t(d) * kBins + binners[d].quantize(row[d])] += 1.0;
    const double inv = 1.0 / double(rows.size());
    for (auto& v : m.data) v *= inv;
    return m;
}

// Feedforward net 1792 -> 512 -> 128 -> 1, ReLU hidden, sigmoid output.
struct Discriminator {
    ad::Tensor w1, b1, w2, b2, w3, b3;

    static Discriminator init(std::uint64_t seed) {
        Rng rng(seed);
        Discriminator d;
        d.w1 = ad::kaiming_uniform({512, kDiscInput}, kDiscInput, rng);
        d.b1 = ad::Tensor({512});
        d.w2 = ad::kaiming_uniform({128, 512}, 512, rng);
        d.b2 = ad::Tensor({128});
        d.w3 = ad::xavier_uniform({1, 128}, 128, 1, rng);
        d.b3 = ad::Tensor({1});
        return d;
    }

    std::vector<std::pair<std::string, ad::Tensor*>> param_refs() {
        return {{"disc/w1", &w1}, {"disc/b1", &b1}, {"disc/w2", &w2},
                {"disc/b2", &b2}, {"disc/w3", &w3}, {"disc/b3", &b3}};
    }

    struct GraphNodes {
        std::vector<int> ids;
    };

    GraphNodes register_params(ad::Graph& g, bool trainable) {
        GraphNodes n;
        for (auto& [name, t] : param_refs()) n.ids.push_back(g.leaf(*t, trainable));
        return n;
    }

    // input node shape [1, 1792] -> probability node [1, 1]
    int forward_graph(ad::Graph& g, const GraphNodes& n, int input) const {
        int h = g.relu(g.linear(input, n.ids[0], n.ids[1]));
        h = g.relu(g.linear(h, n.ids[2], n.ids[3]));
        return g.sigmoid(g.linear(h, n.ids[4], n.ids[5]));
    }

    // Pure forward on a 7 x 256 distribution matrix.
    double forward(const ad::Tensor& matrix) const {
        if (matrix.size() != kDiscInput)
            throw std::invalid_argument("discriminator: expected 7 x 256 input, got " +
                                        matrix.shape_str());
        if (!matrix.all_finite())
            throw std::invalid_argument("discriminator: non-finite input");
        std::vector<double> h1(512), h2(128);
        for (std::size_t o = 0; o < 512; ++o) {
            double s = b1[o];
            const double* wrow = w1.data.data() + o * kDiscInput;
            for (std::size_t i = 0; i < kDiscInput; ++i) s += wrow[i] * matrix.data[i];
            h1[o] = s > 0.0 ? s : 0.0;
        }
        for (std::size_t o = 0; o < 128; ++o) {
            double s = b2[o];
            const double* wrow = w2.data.data() + o * 512;
            for (std::size_t i = 0; i < 512; ++i) s += wrow[i] * h1[i];
            h2[o] = s > 0.0 ? s : 0.0;
        }
        double s = b3[0];
        for (std::size_t i = 0; i < 128; ++i) s += w3.data[i] * h2[i];
        const double p = 1.0 / (1.0 + std::exp(-s));
        // Sigmoid underflows to exactly 0/1 for |s| > ~745; keep the output
        // strictly inside (0, 1).
        const double eps = 1e-12;
        return p < eps ? eps : (p > 1.0 - eps ? 1.0 - eps : p);
    }
};

inline double discriminator_forward(const Discriminator& d, const ad::Tensor& matrix) {
    return d.forward(matrix);
}

struct QganModel {
    std::array<qsim::ParamTensor, kLatentDim> gen_params;
    Discriminator disc;
    std::array<qcbm::GaussianBinner, kLatentDim> binners;

    void save(const std::string& path) {
        io::Checkpoint ck;
        for (int d = 0; d < kLatentDim; ++d) {
            ck.put("qgan/dim" + std::to_string(d) + "/angles", gen_params[d]);
            ck.put("qgan/dim" + std::to_string(d) + "/binner",
                   ad::Tensor({2}, {binners[d].mu, binners[d].sigma}));
        }
        for (auto& [name, t] : disc.param_refs()) ck.put(name, *t);
        ck.save(path);
    }

    static QganModel load(const std::string& path) {
        const auto ck = io::Checkpoint::load(path);
        QganModel m;
        m.disc = Discriminator::init(0);
        for (int d = 0; d < kLatentDim; ++d) {
            m.gen_params[d] = ck.get("qgan/dim" + std::to_string(d) + "/angles");
            const auto& b = ck.get("qgan/dim" + std::to_string(d) + "/binner");
            m.binners[d] = qcbm::GaussianBinner{b[0], b[1]};
        }
        for (auto& [name, t] : m.disc.param_refs()) *t = ck.get(name);
        return m;
    }
};

struct AdversarialBatchReport {
    double d_loss = 0.0;
    double g_loss = 0.0;
    double d_real_mean = 0.0;
    double d_fake_mean = 0.0;
};

struct QganHistory {
    std::vector<AdversarialBatchReport> batches;
};

namespace detail {

// Fake input for the discriminator: exact marginal distributions for one
// fresh noise bin per dimension.
inline ad::Tensor fake_distribution_matrix(const std::array<qsim::ParamTensor, kLatentDim>& gen,
                                           const std::array<int, kLatentDim>& noise) {
    ad::Tensor m({std::size_t(kLatentDim), std::size_t(kBins)});
    for (int d = 0; d < kLatentDim; ++d) {
        const auto p = generator_distribution(gen[d], noise[d]);
        for (int b = 0; b < kBins; ++b) m.data[std::size_t(d) * kBins + b] = p[b];
    }
    return m;
}

} // namespace detail

// Alternating adversarial training. The discriminator minimizes BCE on
// (real -> 1, fake -> 0); the generator minimizes -log D(fake), its gradient
// flowing through the discriminator's input gradient and then the
// parameter-shift Jacobian of each marginalized distribution.
inline QganHistory train_qgan(QganModel& model, const LatentTable& table, std::uint64_t seed,
                              int epochs = 2, std::size_t batch = 32, double lr = 0.01) {
    if (table.size() == 0) throw std::invalid_argument("train_qgan: empty latent table");
    const std::size_t n = table.size();
    Rng rng(derive_seed(seed, "qgan"));

    ad::AdamState opt_d(lr), opt_g(lr);
    auto disc_refs = model.disc.param_refs();
    QganHistory hist;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    std::size_t batch_index = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_below(i)]);
        for (std::size_t start = 0; start < n; start += batch, ++batch_index) {
            const std::size_t b = std::min(batch, n - start);
            std::vector<std::array<double, kLatentDim>> real_rows(b);
            for (std::size_t k = 0; k < b; ++k) real_rows[k] = table.rows[order[start + k]];
            const ad::Tensor real = real_batch_distribution(real_rows, model.binners);

            AdversarialBatchReport report;

            // --- discriminator step ---
            {
                std::array<int, kLatentDim> noise{};
                for (auto& v : noise) v = int(rng.uniform_below(kBins));
                const ad::Tensor fake = detail::fake_distribution_matrix(model.gen_params, noise);

                ad::Graph g;
                auto nodes = model.disc.register_params(g, true);
                const int real_in = g.input(ad::Tensor({1, kDiscInput}, real.data));
                const int fake_in = g.input(ad::Tensor({1, kDiscInput}, fake.data));
                const int d_real = model.disc.forward_graph(g, nodes, real_in);
                const int d_fake = model.disc.forward_graph(g, nodes, fake_in);
                const int ones = g.input(ad::Tensor({1, 1}, {1.0}));
                const int zeros = g.input(ad::Tensor({1, 1}, {0.0}));
                const int loss = g.add(g.bce(d_real, ones), g.bce(d_fake, zeros));
                report.d_loss = g.value(loss)[0];
                report.d_real_mean = g.value(d_real)[0];
                report.d_fake_mean = g.value(d_fake)[0];
                if (!std::isfinite(report.d_loss))
                    throw NumericalError("train_qgan: non-finite discriminator loss at batch " +
                                             std::to_string(batch_index),
                                         std::int64_t(batch_index));
                g.backward(loss);
                std::vector<ad::Tensor*> ps;
                std::vector<const ad::Tensor*> gs;
                for (std::size_t r = 0; r < disc_refs.size(); ++r) {
                    ps.push_back(disc_refs[r].second);
                    gs.push_back(&g.grad(nodes.ids[r]));
                }
                ad::adam_step(ps, gs, opt_d);
            }

            // --- generator step (fresh noise, frozen discriminator) ---
            {
                std::array<int, kLatentDim> noise{};
                for (auto& v : noise) v = int(rng.uniform_below(kBins));
                const ad::Tensor fake = detail::fake_distribution_matrix(model.gen_params, noise);

                ad::Graph g;
                auto nodes = model.disc.register_params(g, false);
                const int fake_in = g.param(ad::Tensor({1, kDiscInput}, fake.data));
                const int d_fake = model.disc.forward_graph(g, nodes, fake_in);
                const int ones = g.input(ad::Tensor({1, 1}, {1.0}));
                const int loss = g.bce(d_fake, ones); // == -log D(fake)
                report.g_loss = g.value(loss)[0];
                if (!std::isfinite(report.g_loss))
                    throw NumericalError("train_qgan: non-finite generator loss at batch " +
                                             std::to_string(batch_index),
                                         std::int64_t(batch_index));
                g.backward(loss);
                const ad::Tensor& input_grad = g.grad(fake_in); // [1, 1792]

                std::vector<ad::Tensor> grads(kLatentDim);
                std::vector<ad::Tensor*> ps;
                std::vector<const ad::Tensor*> gs;
                for (int d = 0; d < kLatentDim; ++d) {
                    const ad::Tensor jac = generator_jacobian(model.gen_params[d], noise[d]);
                    const std::size_t n_params = jac.shape[1];
                    grads[d] = ad::Tensor(model.gen_params[d].shape);
                    for (int bin = 0; bin < kBins; ++bin) {
                        const double gi = input_grad.data[std::size_t(d) * kBins + bin];
                        if (gi == 0.0) continue;
                        const double* jrow = jac.data.data() + std::size_t(bin) * n_params;
                        for (std::size_t j = 0; j < n_params; ++j) grads[d].data[j] += gi * jrow[j];
                    }
                    ps.push_back(&model.gen_params[d]);
                    gs.push_back(&grads[d]);
                }
                ad::adam_step(ps, gs, opt_g);
            }

            hist.batches.push_back(report);
        }
    }
    return hist;
}

inline QganModel init_qgan(const LatentTable& table, std::uint64_t seed) {
    QganModel m;
    Rng rng(derive_seed(seed, "qgan-init"));
    const auto ansatz = generator_ansatz();
    const auto cols = table.columns();
    for (int d = 0; d < kLatentDim; ++d) {
        m.gen_params[d] = qsim::make_params(ansatz);
        for (auto& a : m.gen_params[d].data) a = rng.uniform(-0.1, 0.1);
        m.binners[d] = qcbm::fit_binner(cols[d]);
    }
    m.disc = Discriminator::init(derive_seed(seed, "qgan-disc"));
    return m;
}

// One 7-vector: per dimension draw a uniform noise bin, run the generator,
// sample a bin from the marginal, dequantize.
inline std::array<double, kLatentDim> sample_qgan(const QganModel& model, Rng& rng) {
    std::array<double, kLatentDim> out{};
    for (int d = 0; d < kLatentDim; ++d) {
        const int noise = int(rng.uniform_below(kBins));
        const auto p = generator_distribution(model.gen_params[d], noise);
        const auto bin = qsim::sample(p, rng, 1)[0];
        out[d] = model.binners[d].dequantize(int(bin));
    }
    return out;
}

} // namespace flq::qgan
