#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flq/ad/tensor.hpp"
#include "flq/core/parallel.hpp"

namespace flq::ad {

// Reverse-mode tape over dense tensors. Forward values are computed eagerly
// as ops are recorded; backward() walks the tape once in reverse creation
// order (creation order is topological by construction).
//
// Supported ops: linear, conv2d, transposed conv2d, batch normalization
// (train/eval), relu, sigmoid, tanh, reshape, mse, bce, stop-gradient,
// elementwise add/sub/mul, scale, sum of squares, row gather.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    int leaf(Tensor t, bool requires_grad) {
        Node n;
        n.op = requires_grad ? "param" : "input";
        n.value = std::move(t);
        n.requires_grad = requires_grad;
        return push(std::move(n));
    }
    int input(Tensor t) { return leaf(std::move(t), false); }
    int param(Tensor t) { return leaf(std::move(t), true); }

    const Tensor& value(int id) const { return nodes_[check(id)].value; }

    const Tensor& grad(int id) const {
        if (!backward_done_) throw std::logic_error("Graph: grad() before backward()");
        const Node& n = nodes_[check(id)];
        if (!n.requires_grad) throw std::logic_error("Graph: node does not require grad");
        return grads_[id];
    }

    // --- elementwise ---

    int relu(int x) {
        const Tensor& xv = value(x);
        Tensor out = xv;
        for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
        return unary(x, "relu", std::move(out), [this](int xid, int oid) {
            accumulate(xid, [&](Tensor& gx) {
                const Tensor& xv = nodes_[xid].value;
                const Tensor& g = grads_[oid];
                for (std::size_t i = 0; i < gx.size(); ++i)
                    if (xv[i] > 0.0) gx[i] += g[i];
            });
        });
    }

    int sigmoid(int x) {
        Tensor out = value(x);
        for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
        return unary(x, "sigmoid", std::move(out), [this](int xid, int oid) {
            accumulate(xid, [&](Tensor& gx) {
                const Tensor& y = nodes_[oid].value;
                const Tensor& g = grads_[oid];
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
            });
        });
    }

    int tanh_op(int x) {
        Tensor out = value(x);
        for (auto& v : out.data) v = std::tanh(v);
        return unary(x, "tanh", std::move(out), [this](int xid, int oid) {
            accumulate(xid, [&](Tensor& gx) {
                const Tensor& y = nodes_[oid].value;
                const Tensor& g = grads_[oid];
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
            });
        });
    }

    int add(int a, int b) { return binary(a, b, "add", 1.0); }
    int sub(int a, int b) { return binary(a, b, "sub", -1.0); }

    int mul(int a, int b) {
        require_same(a, b, "mul");
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        Tensor out = av;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv[i];
        Node n = make("mul", {a, b}, std::move(out));
        n.backward = [this](Node& self) {
            const int a = self.inputs[0], b = self.inputs[1];
            const Tensor& g = grads_[self.id];
            if (wants(a))
                accumulate(a, [&](Tensor& gx) {
                    const Tensor& bv = nodes_[b].value;
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * bv[i];
                });
            if (wants(b))
                accumulate(b, [&](Tensor& gx) {
                    const Tensor& av = nodes_[a].value;
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * av[i];
                });
        };
        return push(std::move(n));
    }

    int scale(int x, double c) {
        Tensor out = value(x);
        for (auto& v : out.data) v *= c;
        Node n = make("scale", {x}, std::move(out));
        n.backward = [this, c](Node& self) {
            const int x = self.inputs[0];
            if (!wants(x)) return;
            const Tensor& g = grads_[self.id];
            accumulate(x, [&](Tensor& gx) {
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += c * g[i];
            });
        };
        return push(std::move(n));
    }

    int stop_gradient(int x) {
        Node n = make("stop_gradient", {}, value(x));
        n.requires_grad = false;
        return push(std::move(n));
    }

    int reshape(int x, std::vector<std::size_t> shape) {
        const Tensor& xv = value(x);
        if (Tensor::count(shape) != xv.size())
            throw std::invalid_argument("reshape: element count mismatch, " + xv.shape_str());
        Tensor out(std::move(shape), xv.data);
        Node n = make("reshape", {x}, std::move(out));
        n.backward = [this](Node& self) {
            const int x = self.inputs[0];
            if (!wants(x)) return;
            const Tensor& g = grads_[self.id];
            accumulate(x, [&](Tensor& gx) {
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
            });
        };
        return push(std::move(n));
    }

    // rows of `table` selected by index; gradient scatters into the selected
    // rows only.
    int gather_rows(int table, std::vector<std::size_t> rows) {
        const Tensor& tv = value(table);
        if (tv.rank() != 2) throw std::invalid_argument("gather_rows: table must be rank 2");
        const std::size_t cols = tv.shape[1];
        Tensor out({rows.size(), cols});
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r] >= tv.shape[0]) throw std::out_of_range("gather_rows: row index");
            for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] = tv.data[rows[r] * cols + c];
        }
        Node n = make("gather_rows", {table}, std::move(out));
        n.backward = [this, rows = std::move(rows), cols](Node& self) {
            const int t = self.inputs[0];
            if (!wants(t)) return;
            const Tensor& g = grads_[self.id];
            accumulate(t, [&](Tensor& gt) {
                for (std::size_t r = 0; r < rows.size(); ++r)
                    for (std::size_t c = 0; c < cols; ++c) gt.data[rows[r] * cols + c] += g[r * cols + c];
            });
        };
        return push(std::move(n));
    }

    // --- dense layers ---

    // x[N,I] * w[O,I]^T (+ b[O]) -> [N,O]
    int linear(int x, int w, int b = -1) {
        const Tensor& xv = value(x);
        const Tensor& wv = value(w);
        if (xv.rank() != 2 || wv.rank() != 2 || xv.shape[1] != wv.shape[1])
            throw std::invalid_argument("linear: shape mismatch " + xv.shape_str() + " vs " +
                                        wv.shape_str());
        Tensor out = matmul_bt(xv, wv);
        if (b >= 0) {
            const Tensor& bv = value(b);
            if (bv.size() != wv.shape[0])
                throw std::invalid_argument("linear: bias shape " + bv.shape_str());
            const std::size_t n = out.shape[0], o = out.shape[1];
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < o; ++c) out.data[r * o + c] += bv[c];
        }
        std::vector<int> ins = {x, w};
        if (b >= 0) ins.push_back(b);
        Node n = make("linear", std::move(ins), std::move(out));
        n.backward = [this](Node& self) {
            const int x = self.inputs[0], w = self.inputs[1];
            const int b = self.inputs.size() > 2 ? self.inputs[2] : -1;
            const Tensor& g = grads_[self.id];
            if (wants(x))
                accumulate(x, [&](Tensor& gx) { add_into(gx, matmul(g, nodes_[w].value)); });
            if (wants(w))
                accumulate(w, [&](Tensor& gw) { add_into(gw, matmul_at(g, nodes_[x].value)); });
            if (b >= 0 && wants(b))
                accumulate(b, [&](Tensor& gb) {
                    const std::size_t n = g.shape[0], o = g.shape[1];
                    for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t c = 0; c < o; ++c) gb[c] += g[r * o + c];
                });
        };
        return push(std::move(n));
    }

    // x[N,C,H,W], k[O,C,kh,kw] -> [N,O,Ho,Wo]
    int conv2d(int x, int k, int b, int stride, int pad) {
        const Tensor& xv = value(x);
        const Tensor& kv = value(k);
        check_conv_shapes("conv2d", xv, kv, 1);
        const auto [N, C, H, W] = dims4(xv);
        const std::size_t O = kv.shape[0], kh = kv.shape[2], kw = kv.shape[3];
        const std::size_t Ho = out_dim(H, kh, stride, pad, "conv2d");
        const std::size_t Wo = out_dim(W, kw, stride, pad, "conv2d");
        Tensor cols = im2col(xv, kh, kw, stride, pad, Ho, Wo);
        Tensor k2({O, C * kh * kw}, kv.data);
        Tensor out2 = matmul_bt(cols, k2); // [N*Ho*Wo, O]
        Tensor out({N, O, Ho, Wo});
        scatter_rows_to_nchw(out2, out);
        if (b >= 0) add_channel_bias(out, value(b));
        std::vector<int> ins = {x, k};
        if (b >= 0) ins.push_back(b);
        Node n = make("conv2d", std::move(ins), std::move(out));
        n.backward = [this, cols = std::move(cols), stride, pad](Node& self) {
            conv2d_backward(self, cols, stride, pad);
        };
        return push(std::move(n));
    }

    // x[N,C,H,W], k[C,O,kh,kw] -> [N,O,(H-1)s+kh-2p, (W-1)s+kw-2p]
    int conv2d_transpose(int x, int k, int b, int stride, int pad) {
        const Tensor& xv = value(x);
        const Tensor& kv = value(k);
        check_conv_shapes("conv2d_transpose", xv, kv, 0);
        const auto [N, C, H, W] = dims4(xv);
        const std::size_t O = kv.shape[1], kh = kv.shape[2], kw = kv.shape[3];
        const std::size_t Ho = (H - 1) * stride + kh - 2 * std::size_t(pad);
        const std::size_t Wo = (W - 1) * stride + kw - 2 * std::size_t(pad);
        Tensor x2 = nchw_to_rows(xv); // [N*H*W, C]
        Tensor k2({C, O * kh * kw}, kv.data);
        Tensor cols = matmul(x2, k2); // [N*H*W, O*kh*kw]
        Tensor out({N, O, Ho, Wo});
        col2im_add(cols, out, kh, kw, stride, pad, H, W);
        if (b >= 0) add_channel_bias(out, value(b));
        std::vector<int> ins = {x, k};
        if (b >= 0) ins.push_back(b);
        Node n = make("conv2d_transpose", std::move(ins), std::move(out));
        n.backward = [this, x2 = std::move(x2), stride, pad](Node& self) {
            conv2d_transpose_backward(self, x2, stride, pad);
        };
        return push(std::move(n));
    }

    // Per-channel batch normalization over [N,C,H,W]; running statistics live
    // outside the graph and are updated in training mode.
    int batchnorm(int x, int gamma, int beta, Tensor* running_mean, Tensor* running_var,
                  bool training, double momentum = 0.1, double eps = 1e-5) {
        const Tensor& xv = value(x);
        if (xv.rank() != 4) throw std::invalid_argument("batchnorm: expected NCHW input");
        const auto [N, C, H, W] = dims4(xv);
        const Tensor& gv = value(gamma);
        const Tensor& bv = value(beta);
        if (gv.size() != C || bv.size() != C)
            throw std::invalid_argument("batchnorm: gamma/beta must have C entries");
        const std::size_t m = N * H * W;
        std::vector<double> mean(C, 0.0), inv_std(C, 0.0);
        if (training) {
            if (m < 2) throw std::invalid_argument("batchnorm: need m >= 2 in training mode");
            for (std::size_t c = 0; c < C; ++c) {
                double s = 0.0;
                for_channel(xv, c, [&](double v, std::size_t) { s += v; });
                mean[c] = s / double(m);
                double ss = 0.0;
                for_channel(xv, c, [&](double v, std::size_t) {
                    const double d = v - mean[c];
                    ss += d * d;
                });
                const double var = ss / double(m);
                inv_std[c] = 1.0 / std::sqrt(var + eps);
                (*running_mean)[c] = (1.0 - momentum) * (*running_mean)[c] + momentum * mean[c];
                (*running_var)[c] = (1.0 - momentum) * (*running_var)[c] +
                                    momentum * var * double(m) / double(m - 1);
            }
        } else {
            for (std::size_t c = 0; c < C; ++c) {
                mean[c] = (*running_mean)[c];
                inv_std[c] = 1.0 / std::sqrt((*running_var)[c] + eps);
            }
        }
        Tensor xhat(xv.shape);
        Tensor out(xv.shape);
        for (std::size_t c = 0; c < C; ++c) {
            const double mu = mean[c], is = inv_std[c], ga = gv[c], be = bv[c];
            for_channel(xv, c, [&](double v, std::size_t idx) {
                const double xh = (v - mu) * is;
                xhat.data[idx] = xh;
                out.data[idx] = ga * xh + be;
            });
        }
        Node n = make("batchnorm", {x, gamma, beta}, std::move(out));
        n.backward = [this, xhat = std::move(xhat), inv_std = std::move(inv_std), training,
                      m](Node& self) {
            const int x = self.inputs[0], gamma = self.inputs[1], beta = self.inputs[2];
            const Tensor& g = grads_[self.id];
            const auto [N, C, H, W] = dims4(nodes_[x].value);
            (void)N;
            (void)H;
            (void)W;
            std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
            for (std::size_t c = 0; c < C; ++c) {
                for_channel(g, c, [&](double gv_, std::size_t idx) {
                    sum_g[c] += gv_;
                    sum_gx[c] += gv_ * xhat.data[idx];
                });
            }
            if (wants(gamma))
                accumulate(gamma, [&](Tensor& gg) {
                    for (std::size_t c = 0; c < C; ++c) gg[c] += sum_gx[c];
                });
            if (wants(beta))
                accumulate(beta, [&](Tensor& gb) {
                    for (std::size_t c = 0; c < C; ++c) gb[c] += sum_g[c];
                });
            if (wants(x)) {
                const Tensor& gv = nodes_[gamma].value;
                accumulate(x, [&](Tensor& gx) {
                    for (std::size_t c = 0; c < C; ++c) {
                        const double scale = gv[c] * inv_std[c];
                        if (training) {
                            const double mg = sum_g[c] / double(m);
                            const double mgx = sum_gx[c] / double(m);
                            for_channel(g, c, [&](double gv_, std::size_t idx) {
                                gx.data[idx] += scale * (gv_ - mg - xhat.data[idx] * mgx);
                            });
                        } else {
                            for_channel(g, c, [&](double gv_, std::size_t idx) {
                                gx.data[idx] += scale * gv_;
                            });
                        }
                    }
                });
            }
        };
        return push(std::move(n));
    }

    // --- reductions ---

    int sum_squares(int x) {
        const Tensor& xv = value(x);
        double s = 0.0;
        for (double v : xv.data) s += v * v;
        Node n = make("sum_squares", {x}, Tensor::scalar(s));
        n.backward = [this](Node& self) {
            const int x = self.inputs[0];
            if (!wants(x)) return;
            const double g = grads_[self.id][0];
            accumulate(x, [&](Tensor& gx) {
                const Tensor& xv = nodes_[x].value;
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * g * xv[i];
            });
        };
        return push(std::move(n));
    }

    // mean((a-b)^2) over all elements
    int mse(int a, int b) {
        require_same(a, b, "mse");
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        const double inv_n = 1.0 / double(av.size());
        double s = 0.0;
        for (std::size_t i = 0; i < av.size(); ++i) {
            const double d = av[i] - bv[i];
            s += d * d;
        }
        Node n = make("mse", {a, b}, Tensor::scalar(s * inv_n));
        n.backward = [this, inv_n](Node& self) {
            const int a = self.inputs[0], b = self.inputs[1];
            const double g = grads_[self.id][0];
            const Tensor& av = nodes_[a].value;
            const Tensor& bv = nodes_[b].value;
            if (wants(a))
                accumulate(a, [&](Tensor& gx) {
                    for (std::size_t i = 0; i < gx.size(); ++i)
                        gx[i] += 2.0 * g * inv_n * (av[i] - bv[i]);
                });
            if (wants(b))
                accumulate(b, [&](Tensor& gx) {
                    for (std::size_t i = 0; i < gx.size(); ++i)
                        gx[i] -= 2.0 * g * inv_n * (av[i] - bv[i]);
                });
        };
        return push(std::move(n));
    }

    // -mean(t*log p + (1-t)*log(1-p)); p are probabilities in (0,1)
    int bce(int p, int t) {
        require_same(p, t, "bce");
        const Tensor& pv = value(p);
        const Tensor& tv = value(t);
        const double inv_n = 1.0 / double(pv.size());
        double s = 0.0;
        for (std::size_t i = 0; i < pv.size(); ++i) {
            const double pc = clamp_prob(pv[i]);
            s -= tv[i] * std::log(pc) + (1.0 - tv[i]) * std::log(1.0 - pc);
        }
        Node n = make("bce", {p, t}, Tensor::scalar(s * inv_n));
        n.backward = [this, inv_n](Node& self) {
            const int p = self.inputs[0], t = self.inputs[1];
            if (!wants(p)) return;
            const double g = grads_[self.id][0];
            const Tensor& pv = nodes_[p].value;
            const Tensor& tv = nodes_[t].value;
            accumulate(p, [&](Tensor& gx) {
                for (std::size_t i = 0; i < gx.size(); ++i) {
                    const double pc = clamp_prob(pv[i]);
                    gx[i] += g * inv_n * (pc - tv[i]) / (pc * (1.0 - pc));
                }
            });
        };
        return push(std::move(n));
    }

    void backward(int loss) {
        if (nodes_.empty()) throw std::logic_error("Graph: backward on empty graph");
        const Node& ln = nodes_[check(loss)];
        if (ln.value.size() != 1) throw std::invalid_argument("Graph: loss must be scalar");
        if (!ln.requires_grad)
            throw std::logic_error("Graph: loss does not depend on any parameter");
        grads_.assign(nodes_.size(), Tensor{});
        grads_[loss] = Tensor::scalar(1.0);
        backward_done_ = true; // accumulate() runs during the sweep below
        for (int id = loss; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.requires_grad || grads_[id].data.empty() || !n.backward) continue;
            n.backward(n);
        }
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::string op;
        std::vector<int> inputs;
        Tensor value;
        bool requires_grad = false;
        int id = -1;
        std::function<void(Node&)> backward;
    };

    int push(Node n) {
        n.id = int(nodes_.size());
        for (int in : n.inputs)
            if (nodes_[in].requires_grad) n.requires_grad = true;
        nodes_.push_back(std::move(n));
        return nodes_.back().id;
    }

    Node make(std::string op, std::vector<int> inputs, Tensor out) {
        for (int i : inputs) check(i);
        Node n;
        n.op = std::move(op);
        n.inputs = std::move(inputs);
        n.value = std::move(out);
        return n;
    }

    int unary(int x, const char* op, Tensor out, std::function<void(int, int)> bw) {
        Node n = make(op, {x}, std::move(out));
        n.backward = [this, bw = std::move(bw)](Node& self) {
            if (wants(self.inputs[0])) bw(self.inputs[0], self.id);
        };
        return push(std::move(n));
    }

    int binary(int a, int b, const char* op, double sign_b) {
        require_same(a, b, op);
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        Tensor out = av;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += sign_b * bv[i];
        Node n = make(op, {a, b}, std::move(out));
        n.backward = [this, sign_b](Node& self) {
            const Tensor& g = grads_[self.id];
            if (wants(self.inputs[0]))
                accumulate(self.inputs[0], [&](Tensor& gx) {
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                });
            if (wants(self.inputs[1]))
                accumulate(self.inputs[1], [&](Tensor& gx) {
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += sign_b * g[i];
                });
        };
        return push(std::move(n));
    }

    bool wants(int id) const { return nodes_[id].requires_grad; }

    template <typename Fn>
    void accumulate(int id, Fn&& fn) {
        if (grads_[id].data.empty()) grads_[id] = Tensor::zeros(nodes_[id].value.shape);
        fn(grads_[id]);
    }

    int check(int id) const {
        if (id < 0 || std::size_t(id) >= nodes_.size())
            throw std::out_of_range("Graph: bad node id");
        return id;
    }

    void require_same(int a, int b, const char* op) const {
        if (!value(a).same_shape(value(b)))
            throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                        value(a).shape_str() + " vs " + value(b).shape_str());
    }

    static double clamp_prob(double p) {
        const double eps = 1e-12;
        return p < eps ? eps : (p > 1.0 - eps ? 1.0 - eps : p);
    }

    static std::tuple<std::size_t, std::size_t, std::size_t, std::size_t> dims4(const Tensor& t) {
        return {t.shape[0], t.shape[1], t.shape[2], t.shape[3]};
    }

    static void check_conv_shapes(const char* op, const Tensor& x, const Tensor& k,
                                  std::size_t in_axis) {
        if (x.rank() != 4 || k.rank() != 4 || x.shape[1] != k.shape[in_axis])
            throw std::invalid_argument(std::string(op) + ": shape mismatch " + x.shape_str() +
                                        " vs kernel " + k.shape_str());
    }

    static std::size_t out_dim(std::size_t in, std::size_t kk, int stride, int pad,
                               const char* op) {
        const std::size_t padded = in + 2 * std::size_t(pad);
        if (padded < kk || (padded - kk) % std::size_t(stride) != 0)
            throw std::invalid_argument(std::string(op) +
                                        ": spatial extent not divisible by stride");
        return (padded - kk) / std::size_t(stride) + 1;
    }

    static void add_into(Tensor& dst, const Tensor& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
    }

    template <typename Fn>
    static void for_channel(const Tensor& t, std::size_t c, Fn&& fn) {
        const std::size_t N = t.shape[0], C = t.shape[1], HW = t.shape[2] * t.shape[3];
        for (std::size_t n = 0; n < N; ++n) {
            const std::size_t base = (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) fn(t.data[base + i], base + i);
        }
    }

    static void add_channel_bias(Tensor& out, const Tensor& bias) {
        const auto [N, O, H, W] = dims4(out);
        if (bias.size() != O) throw std::invalid_argument("conv bias: expected one entry per channel");
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o) {
                double* plane = out.data.data() + (n * O + o) * H * W;
                for (std::size_t hw = 0; hw < H * W; ++hw) plane[hw] += bias[o];
            }
    }

    // cols[(n*Ho+oh)*Wo+ow, (c*kh+i)*kw+j] = x[n, c, oh*s-p+i, ow*s-p+j]
    static Tensor im2col(const Tensor& x, std::size_t kh, std::size_t kw, int stride, int pad,
                         std::size_t Ho, std::size_t Wo) {
        const auto [N, C, H, W] = dims4(x);
        Tensor cols({N * Ho * Wo, C * kh * kw});
        parallel_for(N, [&, N = N, C = C, H = H, W = W](std::size_t nb, std::size_t ne) {
            for (std::size_t n = nb; n < ne; ++n) {
                for (std::size_t oh = 0; oh < Ho; ++oh) {
                    for (std::size_t ow = 0; ow < Wo; ++ow) {
                        double* row = cols.data.data() + ((n * Ho + oh) * Wo + ow) * C * kh * kw;
                        for (std::size_t c = 0; c < C; ++c) {
                            const double* plane = x.data.data() + (n * C + c) * H * W;
                            for (std::size_t i = 0; i < kh; ++i) {
                                const long h = long(oh) * stride - pad + long(i);
                                for (std::size_t j = 0; j < kw; ++j) {
                                    const long w = long(ow) * stride - pad + long(j);
                                    row[(c * kh + i) * kw + j] =
                                        (h >= 0 && h < long(H) && w >= 0 && w < long(W))
                                            ? plane[std::size_t(h) * W + std::size_t(w)]
                                            : 0.0;
                                }
                            }
                        }
                    }
                }
            }
        });
        return cols;
    }

    // Adjoint of im2col: scatter-add columns back into an NCHW tensor.
    static void col2im_add(const Tensor& cols, Tensor& out, std::size_t kh, std::size_t kw,
                           int stride, int pad, std::size_t Hi, std::size_t Wi) {
        const auto [N, C, H, W] = dims4(out);
        parallel_for(N, [&, N = N, C = C, H = H, W = W](std::size_t nb, std::size_t ne) {
            for (std::size_t n = nb; n < ne; ++n) {
                for (std::size_t ih = 0; ih < Hi; ++ih) {
                    for (std::size_t iw = 0; iw < Wi; ++iw) {
                        const double* row =
                            cols.data.data() + ((n * Hi + ih) * Wi + iw) * C * kh * kw;
                        for (std::size_t c = 0; c < C; ++c) {
                            double* plane = out.data.data() + (n * C + c) * H * W;
                            for (std::size_t i = 0; i < kh; ++i) {
                                const long h = long(ih) * stride - pad + long(i);
                                if (h < 0 || h >= long(H)) continue;
                                for (std::size_t j = 0; j < kw; ++j) {
                                    const long w = long(iw) * stride - pad + long(j);
                                    if (w < 0 || w >= long(W)) continue;
                                    plane[std::size_t(h) * W + std::size_t(w)] +=
                                        row[(c * kh + i) * kw + j];
                                }
                            }
                        }
                    }
                }
            }
        });
    }

    // [N,C,H,W] -> [N*H*W, C]
    static Tensor nchw_to_rows(const Tensor& x) {
        const auto [N, C, H, W] = dims4(x);
        Tensor rows({N * H * W, C});
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
                const double* plane = x.data.data() + (n * C + c) * H * W;
                for (std::size_t hw = 0; hw < H * W; ++hw)
                    rows.data[(n * H * W + hw) * C + c] = plane[hw];
            }
        return rows;
    }

    // [N*Ho*Wo, O] -> [N,O,Ho,Wo]
    static void scatter_rows_to_nchw(const Tensor& rows, Tensor& out) {
        const auto [N, O, Ho, Wo] = dims4(out);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o) {
                double* plane = out.data.data() + (n * O + o) * Ho * Wo;
                for (std::size_t hw = 0; hw < Ho * Wo; ++hw)
                    plane[hw] = rows.data[(n * Ho * Wo + hw) * O + o];
            }
    }

    // [N,O,Ho,Wo] -> [N*Ho*Wo, O]
    static Tensor nchw_to_rows_lastc(const Tensor& g) {
        const auto [N, O, Ho, Wo] = dims4(g);
        Tensor rows({N * Ho * Wo, O});
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o) {
                const double* plane = g.data.data() + (n * O + o) * Ho * Wo;
                for (std::size_t hw = 0; hw < Ho * Wo; ++hw)
                    rows.data[(n * Ho * Wo + hw) * O + o] = plane[hw];
            }
        return rows;
    }

    void conv2d_backward(Node& self, const Tensor& cols, int stride, int pad) {
        const int x = self.inputs[0], k = self.inputs[1];
        const int b = self.inputs.size() > 2 ? self.inputs[2] : -1;
        const Tensor& g = grads_[self.id];
        const Tensor& kv = nodes_[k].value;
        const std::size_t O = kv.shape[0];
        Tensor g2 = nchw_to_rows_lastc(g); // [N*Ho*Wo, O]
        Tensor k2({O, kv.size() / O}, kv.data);
        if (b >= 0 && wants(b))
            accumulate(b, [&](Tensor& gb) {
                for (std::size_t r = 0; r < g2.shape[0]; ++r)
                    for (std::size_t o = 0; o < O; ++o) gb[o] += g2.data[r * O + o];
            });
        if (wants(k))
            accumulate(k, [&](Tensor& gk) { add_into(gk, matmul_at(g2, cols)); });
        if (wants(x)) {
            Tensor dcols = matmul(g2, k2); // [N*Ho*Wo, C*kh*kw]
            accumulate(x, [&](Tensor& gx) {
                col2im_add(dcols, gx, kv.shape[2], kv.shape[3], stride, pad, g.shape[2],
                           g.shape[3]);
            });
        }
    }

    void conv2d_transpose_backward(Node& self, const Tensor& x2, int stride, int pad) {
        const int x = self.inputs[0], k = self.inputs[1];
        const int b = self.inputs.size() > 2 ? self.inputs[2] : -1;
        const Tensor& g = grads_[self.id];
        const Tensor& kv = nodes_[k].value;
        const Tensor& xv = nodes_[x].value;
        const std::size_t C = kv.shape[0], kh = kv.shape[2], kw = kv.shape[3];
        const std::size_t H = xv.shape[2], W = xv.shape[3];
        // Gathering g with the forward's kernel geometry maps back to H x W.
        Tensor gcols = im2col(g, kh, kw, stride, pad, H, W); // [N*H*W, O*kh*kw]
        if (b >= 0 && wants(b)) {
            const std::size_t O = g.shape[1];
            accumulate(b, [&](Tensor& gb) {
                for (std::size_t o = 0; o < O; ++o)
                    for_channel(g, o, [&](double v, std::size_t) { gb[o] += v; });
            });
        }
        if (wants(k))
            accumulate(k, [&](Tensor& gk) { add_into(gk, matmul_at(x2, gcols)); });
        if (wants(x)) {
            Tensor k2({C, kv.size() / C}, kv.data);
            Tensor dx2 = matmul_bt(gcols, k2); // [N*H*W, C]
            accumulate(x, [&](Tensor& gx) {
                const std::size_t N = gx.shape[0];
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t c = 0; c < C; ++c) {
                        double* plane = gx.data.data() + (n * C + c) * H * W;
                        for (std::size_t hw = 0; hw < H * W; ++hw)
                            plane[hw] += dx2.data[(n * H * W + hw) * C + c];
                    }
            });
        }
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool backward_done_ = false;
};

} // namespace flq::ad
