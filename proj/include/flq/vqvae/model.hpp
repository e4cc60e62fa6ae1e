#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "flq/ad/adam.hpp"
#include "flq/ad/graph.hpp"
#include "flq/core/errors.hpp"
#include "flq/core/rng.hpp"
#include "flq/core/stats.hpp"
#include "flq/io/checkpoint.hpp"
#include "flq/io/snapshot.hpp"
#include "flq/latent.hpp"

namespace flq::vqvae {

// Image encoder: four stride-2 conv blocks (channels 1->32->64->128->256,
// kernel 4, padding 1, batchnorm + ReLU) taking H x W down to H/16 x W/16.
// Bottleneck MLPs: feature count -> 2048 -> 7 and back. Image decoder mirrors
// the encoder with transposed convolutions.
inline constexpr std::array<std::size_t, 5> kChannels = {1, 32, 64, 128, 256};
inline constexpr int kKernel = 4;
inline constexpr int kStride = 2;
inline constexpr int kPad = 1;

struct VqVaeConfig {
    std::size_t height = 256; // snapshot nx
    std::size_t width = 64;   // snapshot ny
    std::size_t codebook_size = 128;
    std::size_t hidden_dim = 2048;
    double beta = 0.2;

    std::size_t feature_count() const { return kChannels[4] * (height / 16) * (width / 16); }

    void validate() const {
        if (height % 16 != 0 || width % 16 != 0)
            throw ConfigError("vqvae: grid extents must be divisible by 16");
        if (height < 16 || width < 16) throw ConfigError("vqvae: grid too small");
    }
};

struct VqLossTerms {
    double reconstruction = 0.0;
    double codebook = 0.0;
    double commitment = 0.0;
    double beta = 0.0;

    double total() const { return reconstruction + codebook + beta * commitment; }
};

// Nearest codeword by squared Euclidean distance; ties break to the lowest
// index (strict less-than scan).
inline std::pair<std::size_t, std::array<double, kLatentDim>>
quantize(const std::array<double, kLatentDim>& z_e, const ad::Tensor& codebook) {
    if (codebook.rank() != 2 || codebook.shape[1] != kLatentDim || codebook.shape[0] == 0)
        throw std::invalid_argument("quantize: codebook must be [M x 7], nonempty");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < codebook.shape[0]; ++k) {
        double d = 0.0;
        for (int c = 0; c < kLatentDim; ++c) {
            const double diff = z_e[c] - codebook.data[k * kLatentDim + c];
            d += diff * diff;
        }
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    std::array<double, kLatentDim> e{};
    for (int c = 0; c < kLatentDim; ++c) e[c] = codebook.data[best * kLatentDim + c];
    return {best, e};
}

// ||x - xhat||^2, ||sg[z_e] - e||^2 and ||z_e - sg[e]||^2 for one sample.
inline VqLossTerms vqvae_loss(const std::vector<double>& x, const std::vector<double>& x_hat,
                              const std::array<double, kLatentDim>& z_e,
                              const std::array<double, kLatentDim>& e, double beta) {
    if (beta < 0.0) throw std::invalid_argument("vqvae_loss: beta must be nonnegative");
    if (x.size() != x_hat.size()) throw std::invalid_argument("vqvae_loss: shape mismatch");
    VqLossTerms t;
    t.beta = beta;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - x_hat[i];
        t.reconstruction += d * d;
    }
    for (int c = 0; c < kLatentDim; ++c) {
        const double d = z_e[c] - e[c];
        t.codebook += d * d;
        t.commitment += d * d;
    }
    return t;
}

struct ConvBlock {
    ad::Tensor kernel, bias, gamma, beta_shift, running_mean, running_var;
};

class VqVaeModel {
public:
    VqVaeConfig cfg;
    std::array<ConvBlock, 4> enc;
    std::array<ConvBlock, 4> dec; // last block's batchnorm params unused
    ad::Tensor enc_fc1_w, enc_fc1_b, enc_fc2_w, enc_fc2_b;
    ad::Tensor dec_fc1_w, dec_fc1_b, dec_fc2_w, dec_fc2_b;
    ad::Tensor codebook; // [codebook_size x 7]
    double norm_mean = 0.0;
    double norm_std = 1.0;

    static VqVaeModel init(const VqVaeConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        VqVaeModel m;
        m.cfg = cfg;
        Rng rng(seed);
        for (int i = 0; i < 4; ++i) {
            const std::size_t cin = kChannels[i], cout = kChannels[i + 1];
            m.enc[i] = make_block({cout, cin, kKernel, kKernel}, cin * kKernel * kKernel, cout, rng);
        }
        const std::size_t feat = cfg.feature_count();
        m.enc_fc1_w = ad::kaiming_uniform({cfg.hidden_dim, feat}, feat, rng);
        m.enc_fc1_b = ad::Tensor({cfg.hidden_dim});
        m.enc_fc2_w = ad::xavier_uniform({kLatentDim, cfg.hidden_dim}, cfg.hidden_dim, kLatentDim, rng);
        m.enc_fc2_b = ad::Tensor({kLatentDim});
        m.dec_fc1_w = ad::kaiming_uniform({cfg.hidden_dim, kLatentDim}, kLatentDim, rng);
        m.dec_fc1_b = ad::Tensor({cfg.hidden_dim});
        m.dec_fc2_w = ad::kaiming_uniform({feat, cfg.hidden_dim}, cfg.hidden_dim, rng);
        m.dec_fc2_b = ad::Tensor({feat});
        for (int i = 0; i < 4; ++i) {
            const std::size_t cin = kChannels[4 - i], cout = kChannels[3 - i];
            m.dec[i] = make_block({cin, cout, kKernel, kKernel}, cin * kKernel * kKernel, cout, rng);
        }
        m.codebook = ad::Tensor({cfg.codebook_size, kLatentDim});
        const double cb = 1.0 / double(cfg.codebook_size);
        for (auto& v : m.codebook.data) v = rng.uniform(-cb, cb);
        return m;
    }

    // Trainable blocks in checkpoint order.
    std::vector<std::pair<std::string, ad::Tensor*>> param_refs() {
        std::vector<std::pair<std::string, ad::Tensor*>> refs;
        for (int i = 0; i < 4; ++i) {
            const std::string p = "enc/conv" + std::to_string(i) + "/";
            refs.emplace_back(p + "kernel", &enc[i].kernel);
            refs.emplace_back(p + "bias", &enc[i].bias);
            refs.emplace_back(p + "gamma", &enc[i].gamma);
            refs.emplace_back(p + "beta", &enc[i].beta_shift);
        }
        refs.emplace_back("enc/fc1/w", &enc_fc1_w);
        refs.emplace_back("enc/fc1/b", &enc_fc1_b);
        refs.emplace_back("enc/fc2/w", &enc_fc2_w);
        refs.emplace_back("enc/fc2/b", &enc_fc2_b);
        refs.emplace_back("codebook", &codebook);
        refs.emplace_back("dec/fc1/w", &dec_fc1_w);
        refs.emplace_back("dec/fc1/b", &dec_fc1_b);
        refs.emplace_back("dec/fc2/w", &dec_fc2_w);
        refs.emplace_back("dec/fc2/b", &dec_fc2_b);
        for (int i = 0; i < 4; ++i) {
            const std::string p = "dec/tconv" + std::to_string(i) + "/";
            refs.emplace_back(p + "kernel", &dec[i].kernel);
            refs.emplace_back(p + "bias", &dec[i].bias);
            if (i < 3) {
                refs.emplace_back(p + "gamma", &dec[i].gamma);
                refs.emplace_back(p + "beta", &dec[i].beta_shift);
            }
        }
        return refs;
    }

    void save(const std::string& path) {
        io::Checkpoint ck;
        for (auto& [name, t] : param_refs()) ck.put(name, *t);
        for (int i = 0; i < 4; ++i) {
            ck.put("enc/conv" + std::to_string(i) + "/running_mean", enc[i].running_mean);
            ck.put("enc/conv" + std::to_string(i) + "/running_var", enc[i].running_var);
            if (i < 3) {
                ck.put("dec/tconv" + std::to_string(i) + "/running_mean", dec[i].running_mean);
                ck.put("dec/tconv" + std::to_string(i) + "/running_var", dec[i].running_var);
            }
        }
        ck.put("norm", ad::Tensor({2}, {norm_mean, norm_std}));
        ck.put("grid", ad::Tensor({2}, {double(cfg.height), double(cfg.width)}));
        ck.put("beta", ad::Tensor({1}, {cfg.beta}));
        ck.save(path);
    }

    static VqVaeModel load(const std::string& path) {
        const auto ck = io::Checkpoint::load(path);
        VqVaeConfig cfg;
        const auto& grid = ck.get("grid");
        cfg.height = std::size_t(grid[0]);
        cfg.width = std::size_t(grid[1]);
        cfg.beta = ck.get("beta")[0];
        cfg.codebook_size = ck.get("codebook").shape[0];
        cfg.hidden_dim = ck.get("enc/fc1/w").shape[0];
        VqVaeModel m = init(cfg, 0);
        for (auto& [name, t] : m.param_refs()) *t = ck.get(name);
        for (int i = 0; i < 4; ++i) {
            m.enc[i].running_mean = ck.get("enc/conv" + std::to_string(i) + "/running_mean");
            m.enc[i].running_var = ck.get("enc/conv" + std::to_string(i) + "/running_var");
            if (i < 3) {
                m.dec[i].running_mean = ck.get("dec/tconv" + std::to_string(i) + "/running_mean");
                m.dec[i].running_var = ck.get("dec/tconv" + std::to_string(i) + "/running_var");
            }
        }
        const auto& norm = ck.get("norm");
        m.norm_mean = norm[0];
        m.norm_std = norm[1];
        return m;
    }

    // --- graph builders ---

    struct GraphParams {
        std::vector<int> ids; // parallel to param_refs order
        int at(std::size_t i) const { return ids[i]; }
    };

    GraphParams register_params(ad::Graph& g, bool trainable) {
        GraphParams gp;
        for (auto& [name, t] : param_refs()) gp.ids.push_back(g.leaf(*t, trainable));
        return gp;
    }

    // x: [B,1,H,W] standardized input -> z_e [B,7]
    int encoder(ad::Graph& g, const GraphParams& gp, int x, bool training) {
        int h = x;
        for (int i = 0; i < 4; ++i) {
            const std::size_t base = std::size_t(i) * 4;
            h = g.conv2d(h, gp.at(base), gp.at(base + 1), kStride, kPad);
            h = g.batchnorm(h, gp.at(base + 2), gp.at(base + 3), &enc[i].running_mean,
                            &enc[i].running_var, training);
            h = g.relu(h);
        }
        const std::size_t B = g.value(x).shape[0];
        h = g.reshape(h, {B, cfg.feature_count()});
        h = g.relu(g.linear(h, gp.at(16), gp.at(17)));
        return g.linear(h, gp.at(18), gp.at(19));
    }

    int codebook_node(const GraphParams& gp) const { return gp.ids[20]; }

    // z_q: [B,7] -> reconstruction [B,1,H,W]
    int decoder(ad::Graph& g, const GraphParams& gp, int z_q, bool training) {
        const std::size_t B = g.value(z_q).shape[0];
        int h = g.relu(g.linear(z_q, gp.at(21), gp.at(22)));
        h = g.relu(g.linear(h, gp.at(23), gp.at(24)));
        h = g.reshape(h, {B, kChannels[4], cfg.height / 16, cfg.width / 16});
        for (int i = 0; i < 4; ++i) {
            const std::size_t base = 25 + (i < 3 ? std::size_t(i) * 4 : 12);
            h = g.conv2d_transpose(h, gp.at(base), gp.at(base + 1), kStride, kPad);
            if (i < 3) {
                h = g.batchnorm(h, gp.at(base + 2), gp.at(base + 3), &dec[i].running_mean,
                                &dec[i].running_var, training);
                h = g.relu(h);
            }
        }
        return h;
    }

    // Eval-mode encode of one snapshot (values in file order, x fastest).
    std::array<double, kLatentDim> encode(const std::vector<float>& snapshot) {
        const auto z = encode_batch({&snapshot});
        return z.front();
    }

    std::vector<std::array<double, kLatentDim>>
    encode_batch(const std::vector<const std::vector<float>*>& snaps) {
        ad::Graph g;
        GraphParams gp = register_params(g, false);
        const int x = g.input(standardize_batch(snaps));
        const int ze = encoder(g, gp, x, false);
        const auto& zv = g.value(ze);
        std::vector<std::array<double, kLatentDim>> out(snaps.size());
        for (std::size_t i = 0; i < snaps.size(); ++i)
            for (int d = 0; d < kLatentDim; ++d) out[i][d] = zv.data[i * kLatentDim + d];
        return out;
    }

    // Eval-mode decode of one 7-vector back to grid values (de-standardized).
    std::vector<double> decode(const std::array<double, kLatentDim>& e) {
        ad::Graph g;
        GraphParams gp = register_params(g, false);
        ad::Tensor z({1, kLatentDim});
        for (int d = 0; d < kLatentDim; ++d) z.data[d] = e[d];
        const int xhat = decoder(g, gp, g.input(std::move(z)), false);
        std::vector<double> out = g.value(xhat).data;
        for (auto& v : out) v = v * norm_std + norm_mean;
        return out;
    }

    ad::Tensor standardize_batch(const std::vector<const std::vector<float>*>& snaps) const {
        const std::size_t per = cfg.height * cfg.width;
        ad::Tensor x({snaps.size(), 1, cfg.height, cfg.width});
        for (std::size_t i = 0; i < snaps.size(); ++i) {
            if (snaps[i]->size() != per)
                throw std::invalid_argument("vqvae: snapshot extent mismatch, expected " +
                                            std::to_string(per) + " values");
            // File order is x fastest; the image tensor uses H = nx, W = ny.
            for (std::size_t h = 0; h < cfg.height; ++h)
                for (std::size_t w = 0; w < cfg.width; ++w)
                    x.data[i * per + h * cfg.width + w] =
                        (double((*snaps[i])[w * cfg.height + h]) - norm_mean) / norm_std;
        }
        return x;
    }

private:
    static ConvBlock make_block(std::vector<std::size_t> kshape, std::size_t fan_in,
                                std::size_t channels, Rng& rng) {
        ConvBlock b;
        b.kernel = ad::kaiming_uniform(std::move(kshape), fan_in, rng);
        b.bias = ad::Tensor({channels});
        b.gamma = ad::Tensor({channels}, 1.0);
        b.beta_shift = ad::Tensor({channels});
        b.running_mean = ad::Tensor({channels});
        b.running_var = ad::Tensor({channels}, 1.0);
        return b;
    }
};

struct TrainHistory {
    std::vector<double> total, reconstruction, codebook, commitment; // per epoch means
};

// Adam training with seeded shuffling and straight-through quantization:
// the decoder input is z_e + sg(e - z_e), so the decoder gradient reaches
// z_e unchanged while the codeword itself learns only from the codebook term.
inline TrainHistory train(VqVaeModel& model, const io::SnapshotDataset& data, std::uint64_t seed,
                          int epochs = 50, std::size_t batch = 32, double lr = 0.0005) {
    if (data.count() == 0) throw std::invalid_argument("vqvae train: empty dataset");
    const std::size_t n = data.count();
    const std::size_t per = model.cfg.height * model.cfg.width;
    if (std::size_t(data.nx) * data.ny != per)
        throw ConfigError("vqvae train: dataset grid does not match model");

    // Global standardization, stored for inversion.
    double mean = 0.0;
    for (float v : data.values) mean += v;
    mean /= double(data.values.size());
    double ss = 0.0;
    for (float v : data.values) ss += (v - mean) * (v - mean);
    const double std_ = std::sqrt(ss / double(data.values.size()));
    model.norm_mean = mean;
    model.norm_std = std_ > 0.0 ? std_ : 1.0;

    std::vector<std::vector<float>> frames(n);
    for (std::size_t i = 0; i < n; ++i)
        frames[i].assign(data.frame(std::uint32_t(i)), data.frame(std::uint32_t(i)) + per);

    Rng shuffle_rng(derive_seed(seed, "shuffle"));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    auto refs = model.param_refs();
    ad::AdamState opt(lr);
    TrainHistory hist;
    const double beta = model.cfg.beta;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_below(i)]);
        double ep_total = 0.0, ep_rec = 0.0, ep_code = 0.0, ep_commit = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t b = std::min(batch, n - start);
            std::vector<const std::vector<float>*> batch_ptrs(b);
            for (std::size_t k = 0; k < b; ++k) batch_ptrs[k] = &frames[order[start + k]];

            ad::Graph g;
            auto gp = model.register_params(g, true);
            const int x = g.input(model.standardize_batch(batch_ptrs));
            const int ze = model.encoder(g, gp, x, true);

            // Nearest codewords under the current codebook.
            std::vector<std::size_t> indices(b);
            const auto& zev = g.value(ze);
            for (std::size_t k = 0; k < b; ++k) {
                std::array<double, kLatentDim> z{};
                for (int d = 0; d < kLatentDim; ++d) z[d] = zev.data[k * kLatentDim + d];
                indices[k] = quantize(z, model.codebook).first;
            }
            const int e = g.gather_rows(model.codebook_node(gp), indices);
            const int zq = g.add(ze, g.stop_gradient(g.sub(e, ze)));
            const int xhat = model.decoder(g, gp, zq, true);

            // Mean-reduced terms. Sum-of-squares reconstruction makes the
            // straight-through gradient into z_e thousands of times stronger
            // than the commitment tether and the encoder output runs away
            // from the codebook.
            const int rec = g.mse(xhat, x);
            const int code = g.mse(e, g.stop_gradient(ze));
            const int commit = g.mse(ze, g.stop_gradient(e));
            const int loss = g.add(g.add(rec, code), g.scale(commit, beta));

            const double loss_v = g.value(loss)[0];
            if (!std::isfinite(loss_v))
                throw NumericalError("vqvae train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batches),
                                     epoch);
            g.backward(loss);

            std::vector<ad::Tensor*> ps;
            std::vector<const ad::Tensor*> gs;
            for (std::size_t r = 0; r < refs.size(); ++r) {
                ps.push_back(refs[r].second);
                gs.push_back(&g.grad(gp.ids[r]));
            }
            ad::adam_step(ps, gs, opt);

            ep_total += loss_v;
            ep_rec += g.value(rec)[0];
            ep_code += g.value(code)[0];
            ep_commit += g.value(commit)[0];
            ++batches;
        }
        hist.total.push_back(ep_total / double(batches));
        hist.reconstruction.push_back(ep_rec / double(batches));
        hist.codebook.push_back(ep_code / double(batches));
        hist.commitment.push_back(ep_commit / double(batches));
    }
    return hist;
}

// Eval-mode encoding of the full dataset with per-dimension statistics.
inline LatentTable encode_dataset(VqVaeModel& model, const io::SnapshotDataset& data,
                                  std::size_t batch = 32) {
    const std::size_t n = data.count();
    const std::size_t per = model.cfg.height * model.cfg.width;
    LatentTable table;
    std::vector<std::vector<float>> frames;
    for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t b = std::min(batch, n - start);
        frames.assign(b, {});
        std::vector<const std::vector<float>*> ptrs(b);
        for (std::size_t k = 0; k < b; ++k) {
            frames[k].assign(data.frame(std::uint32_t(start + k)),
                             data.frame(std::uint32_t(start + k)) + per);
            ptrs[k] = &frames[k];
        }
        for (auto& z : model.encode_batch(ptrs)) {
            table.codebook_index.push_back(int(quantize(z, model.codebook).first));
            table.rows.push_back(z);
        }
    }
    const auto cols = table.columns();
    for (int d = 0; d < kLatentDim; ++d) {
        auto [mu, sd] = mean_stddev(cols[d]);
        table.mean[d] = mu;
        table.stddev[d] = sd;
    }
    return table;
}

} // namespace flq::vqvae
