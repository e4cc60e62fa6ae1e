#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "flq/ad/adam.hpp"
#include "flq/ad/graph.hpp"
#include "flq/core/errors.hpp"
#include "flq/core/rng.hpp"
#include "flq/io/checkpoint.hpp"
#include "flq/latent.hpp"

namespace flq::lstm {

inline constexpr std::size_t kHidden = 256;

// Single-layer LSTM with scalar input and a scalar head. The seven latent
// dimensions are generated as a sequence in natural index order.
struct LstmParams {
    // Gate order: input, forget, output, candidate.
    ad::Tensor wx_i, wx_f, wx_o, wx_g; // [256, 1]
    ad::Tensor wh_i, wh_f, wh_o, wh_g; // [256, 256]
    ad::Tensor b_i, b_f, b_o, b_g;     // [256]
    ad::Tensor head_w, head_b;         // [1, 256], [1]

    static LstmParams init(std::uint64_t seed) {
        Rng rng(seed);
        LstmParams p;
        auto wx = [&] { return ad::xavier_uniform({kHidden, 1}, 1, kHidden, rng); };
        auto wh = [&] { return ad::xavier_uniform({kHidden, kHidden}, kHidden, kHidden, rng); };
        p.wx_i = wx();
        p.wx_f = wx();
        p.wx_o = wx();
        p.wx_g = wx();
        p.wh_i = wh();
        p.wh_f = wh();
        p.wh_o = wh();
        p.wh_g = wh();
        p.b_i = ad::Tensor({kHidden});
        p.b_f = ad::Tensor({kHidden}, 1.0); // forget gate starts open
        p.b_o = ad::Tensor({kHidden});
        p.b_g = ad::Tensor({kHidden});
        p.head_w = ad::xavier_uniform({1, kHidden}, kHidden, 1, rng);
        p.head_b = ad::Tensor({1});
        return p;
    }

    std::vector<std::pair<std::string, ad::Tensor*>> param_refs() {
        return {{"lstm/wx_i", &wx_i}, {"lstm/wx_f", &wx_f}, {"lstm/wx_o", &wx_o},
                {"lstm/wx_g", &wx_g}, {"lstm/wh_i", &wh_i}, {"lstm/wh_f", &wh_f},
                {"lstm/wh_o", &wh_o}, {"lstm/wh_g", &wh_g}, {"lstm/b_i", &b_i},
                {"lstm/b_f", &b_f},   {"lstm/b_o", &b_o},   {"lstm/b_g", &b_g},
                {"lstm/head_w", &head_w}, {"lstm/head_b", &head_b}};
    }

    void save(const std::string& path) {
        io::Checkpoint ck;
        for (auto& [name, t] : param_refs()) ck.put(name, *t);
        ck.save(path);
    }

    static LstmParams load(const std::string& path) {
        const auto ck = io::Checkpoint::load(path);
        LstmParams p = init(0);
        for (auto& [name, t] : p.param_refs()) *t = ck.get(name);
        return p;
    }
};

struct LstmState {
    std::array<double, kHidden> h{};
    std::array<double, kHidden> c{};
};

// Direct (non-graph) cell evaluation: sigmoid gates, tanh candidate and
// output, linear head on the new hidden state.
inline std::pair<double, LstmState> lstm_cell(const LstmParams& p, double x,
                                              const LstmState& state) {
    if (!std::isfinite(x)) throw std::invalid_argument("lstm_cell: non-finite input");
    auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    LstmState next;
    for (std::size_t u = 0; u < kHidden; ++u) {
        double pre_i = p.b_i[u] + p.wx_i[u] * x;
        double pre_f = p.b_f[u] + p.wx_f[u] * x;
        double pre_o = p.b_o[u] + p.wx_o[u] * x;
        double pre_g = p.b_g[u] + p.wx_g[u] * x;
        const double* whi = p.wh_i.data.data() + u * kHidden;
        const double* whf = p.wh_f.data.data() + u * kHidden;
        const double* who = p.wh_o.data.data() + u * kHidden;
        const double* whg = p.wh_g.data.data() + u * kHidden;
        for (std::size_t v = 0; v < kHidden; ++v) {
            pre_i += whi[v] * state.h[v];
            pre_f += whf[v] * state.h[v];
            pre_o += who[v] * state.h[v];
            pre_g += whg[v] * state.h[v];
        }
        const double i = sigmoid(pre_i);
        const double f = sigmoid(pre_f);
        const double o = sigmoid(pre_o);
        const double g = std::tanh(pre_g);
        next.c[u] = f * state.c[u] + i * g;
        next.h[u] = o * std::tanh(next.c[u]);
    }
    double y = p.head_b[0];
    for (std::size_t u = 0; u < kHidden; ++u) y += p.head_w[u] * next.h[u];
    return {y, next};
}

namespace detail {

struct CellNodes {
    int h, c;
};

struct GraphParams {
    std::vector<int> ids; // parallel to param_refs order
};

// One unrolled step on a [B,1] input; returns the prediction node [B,1].
inline int cell_graph(ad::Graph& g, const GraphParams& gp, int x, CellNodes& state) {
    const int i = g.sigmoid(g.add(g.linear(x, gp.ids[0], gp.ids[8]), g.linear(state.h, gp.ids[4])));
    const int f = g.sigmoid(g.add(g.linear(x, gp.ids[1], gp.ids[9]), g.linear(state.h, gp.ids[5])));
    const int o = g.sigmoid(g.add(g.linear(x, gp.ids[2], gp.ids[10]), g.linear(state.h, gp.ids[6])));
    const int cand = g.tanh_op(g.add(g.linear(x, gp.ids[3], gp.ids[11]), g.linear(state.h, gp.ids[7])));
    state.c = g.add(g.mul(f, state.c), g.mul(i, cand));
    state.h = g.mul(o, g.tanh_op(state.c));
    return g.linear(state.h, gp.ids[12], gp.ids[13]);
}

} // namespace detail

struct TrainHistory {
    std::vector<double> loss; // per epoch mean teacher-forced MSE
};

// Teacher forcing: x0 is fresh standard-normal noise per sample per epoch,
// step t predicts dimension t, and inputs for t >= 1 are the true dimension
// t-1 values. Loss is the mean over the 7 steps of the squared error.
inline TrainHistory train_lstm(LstmParams& params, const LatentTable& table, std::uint64_t seed,
                               int epochs = 100, std::size_t batch = 32, double lr = 0.001) {
    if (table.size() == 0) throw std::invalid_argument("train_lstm: empty latent table");
    const std::size_t n = table.size();
    Rng rng(derive_seed(seed, "lstm"));
    auto refs = params.param_refs();
    ad::AdamState opt(lr);
    TrainHistory hist;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_below(i)]);
        double ep_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t b = std::min(batch, n - start);

            ad::Graph g;
            detail::GraphParams gp;
            for (auto& [name, t] : refs) gp.ids.push_back(g.param(*t));

            ad::Tensor x0({b, 1});
            for (std::size_t k = 0; k < b; ++k) x0.data[k] = rng.normal();

            detail::CellNodes state{g.input(ad::Tensor({b, kHidden})),
                                    g.input(ad::Tensor({b, kHidden}))};
            int x = g.input(std::move(x0));
            int loss = -1;
            for (int t = 0; t < kLatentDim; ++t) {
                const int y = detail::cell_graph(g, gp, x, state);
                ad::Tensor target({b, 1});
                for (std::size_t k = 0; k < b; ++k)
                    target.data[k] = table.rows[order[start + k]][t];
                const int step_loss = g.mse(y, g.input(target));
                loss = loss < 0 ? step_loss : g.add(loss, step_loss);
                if (t + 1 < kLatentDim) {
                    ad::Tensor next_x({b, 1});
                    for (std::size_t k = 0; k < b; ++k)
                        next_x.data[k] = table.rows[order[start + k]][t];
                    x = g.input(std::move(next_x));
                }
            }
            loss = g.scale(loss, 1.0 / double(kLatentDim));
            const double loss_v = g.value(loss)[0];
            if (!std::isfinite(loss_v))
                throw NumericalError("train_lstm: non-finite loss at epoch " +
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
            ep_loss += loss_v;
            ++batches;
        }
        hist.loss.push_back(ep_loss / double(batches));
    }
    return hist;
}

// Autoregressive sampling: x0 ~ N(0,1), each prediction feeds the next step.
inline std::array<double, kLatentDim> sample_lstm(const LstmParams& params, Rng& rng) {
    std::array<double, kLatentDim> out{};
    LstmState state;
    double x = rng.normal();
    for (int t = 0; t < kLatentDim; ++t) {
        auto [y, next] = lstm_cell(params, x, state);
        out[t] = y;
        state = next;
        x = y;
    }
    return out;
}

} // namespace flq::lstm
