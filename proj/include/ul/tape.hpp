#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ul/array.hpp"
#include "ul/rng.hpp"

namespace ul {

// Reverse-mode tape. Nodes are appended in forward order, which is already a
// topological order, so backward() is a single reverse sweep. A tape is a
// single-threaded value: build, backward, read gradients, clear.
template <class S>
class TapeT {
public:
    using Id = int32_t;

    struct Node {
        ArrayT<S> val;
        ArrayT<S> grad;
        std::function<void(TapeT&)> back;  // empty for leaves
        bool needs_grad = false;
        const char* op = "leaf";
    };

    Id leaf(ArrayT<S> val, bool needs_grad = false) {
        return push(std::move(val), needs_grad, "leaf", {});
    }

    Id push(ArrayT<S> val, bool needs_grad, const char* op, std::function<void(TapeT&)> back) {
        nodes_.push_back(Node{std::move(val), {}, std::move(back), needs_grad, op});
        return static_cast<Id>(nodes_.size() - 1);
    }

    Node& node(Id id) { return nodes_.at(static_cast<size_t>(id)); }
    const Node& node(Id id) const { return nodes_.at(static_cast<size_t>(id)); }
    const ArrayT<S>& val(Id id) const { return node(id).val; }
    ArrayT<S>& grad(Id id) { return node(id).grad; }

    size_t size() const { return nodes_.size(); }

    void clear() {
        nodes_.clear();
        backward_done_ = false;
    }

    // Accumulates d(root)/d(node) into every node flagged needs_grad.
    // root must be scalar; calling twice without clear() is an error.
    void backward(Id root) {
        if (backward_done_) {
            throw std::runtime_error("backward: tape already differentiated; clear() first");
        }
        Node& r = node(root);
        if (r.val.numel() != 1) {
            throw std::runtime_error("backward: root is not a scalar");
        }
        if (!std::isfinite(static_cast<double>(r.val.v[0]))) {
            throw std::runtime_error("backward: non-finite loss value");
        }
        backward_done_ = true;
        for (auto& n : nodes_) {
            if (n.needs_grad) {
                n.grad.shape = n.val.shape;
                n.grad.v.assign(n.val.numel(), S(0));
            }
        }
        if (!r.needs_grad) return;  // loss does not depend on any gradient leaf
        r.grad.v[0] = S(1);
        for (size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (n.needs_grad && n.back) n.back(*this);
        }
        for (size_t i = 0; i < nodes_.size(); ++i) {
            const Node& n = nodes_[i];
            if (n.needs_grad && !n.grad.all_finite()) {
                throw std::runtime_error("backward: non-finite gradient at node " + std::to_string(i) +
                                         " (op " + std::string(n.op) + ")");
            }
        }
    }

private:
    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

using Tape = TapeT<float>;

// Loss-side index records: (batch row, target step, token) plus an
// unlikelihood scale where applicable.
struct Pick {
    int b;
    int pos;    // position in the padded sequence whose logits predict `token`
    int token;
};

struct UlPick {
    int b;
    int pos;
    int token;
    double beta;
};

constexpr double kUlProbClamp = 1e-6;  // floor for 1 - p inside log

namespace ops {

template <class S>
using Id = typename TapeT<S>::Id;

template <class S>
bool either_grad(const TapeT<S>& t, Id<S> a, Id<S> b) {
    return t.node(a).needs_grad || t.node(b).needs_grad;
}

// ---------------------------------------------------------------- elementwise

template <class S>
Id<S> add(TapeT<S>& t, Id<S> a, Id<S> b) {
    const auto& av = t.val(a);
    const auto& bv = t.val(b);
    if (!av.same_shape(bv)) throw std::runtime_error("add: shape mismatch");
    ArrayT<S> out = av;
    for (size_t i = 0; i < out.numel(); ++i) out.v[i] += bv.v[i];
    auto id = t.push(std::move(out), either_grad(t, a, b), "add", {});
    if (t.node(id).needs_grad) {
        t.node(id).back = [a, b, id](TapeT<S>& tt) {
            const auto& g = tt.grad(id);
            if (tt.node(a).needs_grad) {
                auto& ga = tt.grad(a);
                for (size_t i = 0; i < g.numel(); ++i) ga.v[i] += g.v[i];
            }
            if (tt.node(b).needs_grad) {
                auto& gb = tt.grad(b);
                for (size_t i = 0; i < g.numel(); ++i) gb.v[i] += g.v[i];
            }
        };
    }
    return id;
}

template <class S>
Id<S> mul(TapeT<S>& t, Id<S> a, Id<S> b) {
    const auto& av = t.val(a);
    const auto& bv = t.val(b);
    if (!av.same_shape(bv)) throw std::runtime_error("mul: shape mismatch");
    ArrayT<S> out = av;
    for (size_t i = 0; i < out.numel(); ++i) out.v[i] *= bv.v[i];
    auto id = t.push(std::move(out), either_grad(t, a, b), "mul", {});
    if (t.node(id).needs_grad) {
        t.node(id).back = [a, b, id](TapeT<S>& tt) {
            const auto& g = tt.grad(id);
            const auto& av2 = tt.val(a);
            const auto& bv2 = tt.val(b);
            if (tt.node(a).needs_grad) {
                auto& ga = tt.grad(a);
                for (size_t i = 0; i < g.numel(); ++i) ga.v[i] += g.v[i] * bv2.v[i];
            }
            if (tt.node(b).needs_grad) {
                auto& gb = tt.grad(b);
                for (size_t i = 0; i < g.numel(); ++i) gb.v[i] += g.v[i] * av2.v[i];
            }
        };
    }
    return id;
}

template <class S>
Id<S> scale(TapeT<S>& t, Id<S> a, S c) {
    ArrayT<S> out = t.val(a);
    for (auto& x : out.v) x *= c;
    auto id = t.push(std::move(out), t.node(a).needs_grad, "scale", {});
    if (t.node(id).needs_grad) {
        t.node(id).back = [a, c, id](TapeT<S>& tt) {
            const auto& g = tt.grad(id);
            auto& ga = tt.grad(a);
            for (size_t i = 0; i < g.numel(); ++i) ga.v[i] += g.v[i] * c;
        };
    }
    return id;
}

template <class S>
Id<S> relu(TapeT<S>& t, Id<S> a) {
    ArrayT<S> out = t.val(a);
    for (auto& x : out.v) x = std::max(x, S(0));
    auto id = t.push(std::move(out), t.node(a).needs_grad, "relu", {});
    if (t.node(id).needs_grad) {
        t.node(id).back = [a, id](TapeT<S>& tt) {
            const auto& g = tt.grad(id);
            const auto& av = tt.val(a);
            auto& ga = tt.grad(a);
            for (size_t i = 0; i < g.numel(); ++i) {
                if (av.v[i] > S(0)) ga.v[i] += g.v[i];
            }
        };
    }
    return id;
}

template <class S>
Id<S> sum(TapeT<S>& t, Id<S> a) {
    double acc = 0.0;
    for (S x : t.val(a).v) acc += static_cast<double>(x);
    auto id = t.push(ArrayT<S>::scalar(static_cast<S>(acc)), t.node(a).needs_grad, "sum", {});
    if (t.node(id).needs_grad) {
        t.node(id).back = [a, id](TapeT<S>& tt) {
            const S g = tt.grad(id).v[0];
            auto& ga = tt.grad(a);
            for (auto& x : ga.v) x += g;
        };
    }
    return id;
}

// out[..., n] = x[..., n] + b[n]
template <class S>
Id<S> add_bias(TapeT<S>& t, Id<S> x, Id<S> b) {
    const auto& xv = t.val(x);
    const auto& bv = t.val(b);
    if (xv.rank() < 1 || bv.rank() != 1 || xv.shape.back() != bv.shape[0]) {
        throw std::runtime_error("add_bias: incompatible shapes");
    }
    const size_t n = static_cast<size_t>(bv.shape[0]);
    ArrayT<S> out = xv;
    for (size_t r = 0; r < out.rows(); ++r) {
        S* row = out.v.data() + r * n;
        for (size_t j = 0; j < n; ++j) row[j] += bv.v[j];
    }
    auto id = t.push(std::move(out), either_grad(t, x, b), "add_bias", {});
    if (t.node(id).needs_grad) {
        t.node(id).back = [x, b, n, id](TapeT<S>& tt) {
            const auto& g = tt.grad(id);
            const size_t rows = g.numel() / n;
            if (tt.node(x).needs_grad) {
                auto& gx = tt.grad(x);
                for (size_t i = 0; i < g.numel(); ++i) gx.v[i] += g.v[i];
            }
            if (tt.node(b).needs_grad) {
                auto& gb = tt.grad(b);
                for (size_t r = 0; r < rows; ++r) {
                    const S* row = g.v.data() + r * n;
                    for (size_t j = 0; j < n; ++j) gb.v[j] += row[j];
                }
            }
        };
    }
    return id;
}

// ------------------------------------------------------------------- matmul

// x [..., K] @ w [K, N] -> [..., N]; leading dims of x are batch rows.
template <class S>
Id<S> linear(TapeT<S>& t, Id<S> x, Id<S> w) {
    const auto& xv = t.val(x);
    const auto& wv = t.val(w);
    if (xv.rank() < 1 || wv.rank() != 2) throw std::runtime_error("linear: bad ranks");
    const int k = xv.shape.back();
    if (wv.shape[0] != k) throw std::runtime_error("linear: inner dim mismatch");
    const int n = wv.shape[1];
    const size_t rows = xv.rows();

    std::vector<int> out_shape = xv.shape;
    out_shape.back() = n;
    ArrayT<S> out(out_shape);
    for (size_t r = 0; r < rows; ++r) {
        const S* xrow = xv.v.data() + r * static_cast<size_t>(k);
        S* orow = out.v.data() + r * static_cast<size_t>(n);
        for (int kk = 0; kk < k; ++kk) {
            const S xk = xrow[kk];
            if (xk == S(0)) continue;
            const S* wrow = wv.v.data() + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) orow[j] += xk * wrow[j];
        }
    }
    auto id = t.push(std::move(out), either_grad(t, x, w), "linear", {});
    if (t.node(id).needs_grad) {
        t.node(id).back = [x, w, k, n, rows, id](TapeT<S>& tt) {
            const auto& g = tt.grad(id);
            const auto& xv2 = tt.val(x);
            const auto& wv2 = tt.val(w);
            if (tt.node(x).needs_grad) {
                auto& gx = tt.grad(x);
                for (size_t r = 0; r < rows; ++r) {
                    const S* grow = g.v.data() + r * static_cast<size_t>(n);
                    S* gxrow = gx.v.data() + r * static_cast<size_t>(k);
                    for (int kk = 0; kk < k; ++kk) {
                        const S* wrow = wv2.v.data() + static_cast<size_t>(kk) * n;
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j) acc += static_cast<double>(grow[j]) * wrow[j];
                        gxrow[kk] += static_cast<S>(acc);
                    }
                }
            }
            if (tt.node(w).needs_grad) {
                auto& gw = tt.grad(w);
                for (size_t r = 0; r < rows; ++r) {
                    const S* xrow = xv2.v.data() + r * static_cast<size_t>(k);
                    const S* grow = g.v.data() + r * static_cast<size_t>(n);
                    for (int kk = 0; kk < k; ++kk) {
                        const S xk = xrow[kk];
                        if (xk == S(0)) continue;
                        S* gwrow = gw.v.data() + static_cast<size_t>(kk) * n;
                        for (int j = 0; j < n; ++j) gwrow[j] += xk * grow[j];
                    }
                }
            }
        };
    }
    return id;
}

// --------------------------------------------------------------- embeddings

// table [V, d] gathered by ids (length B*T) -> [B, T, d]
template <class S>
Id<S> embedding(TapeT<S>& t, Id<S> table, const std::vector<int32_t>& ids, int batch, int seq_len) {
    const auto& tv = t.val(table);
    if (tv.rank() != 2) throw std::runtime_error("embedding: table must be 2-d");
    if (ids.size() != static_cast<size_t>(batch) * seq_len) throw std::runtime_error("embedding: id count mismatch");
    const int vocab = tv.shape[0];
    const int d = tv.shape[1];
    ArrayT<S> out({batch, seq_len, d});
    for (size_t r = 0; r < ids.size(); ++r) {
        const int32_t tok = ids[r];
        if (tok < 0 || tok >= vocab) throw std::runtime_error("embedding: token id out of range");
        std::copy_n(tv.v.data() + static_cast<size_t>(tok) * d, d, out.v.data() + r * static_cast<size_t>(d));
    }
    auto id = t.push(std::move(out), t.node(table).needs_grad, "embedding", {});
    if (t.node(id).needs_grad) {
        auto ids_copy = std::make_shared<std::vector<int32_t>>(ids);
        t.node(id).back = [table, ids_copy, d, id](TapeT<S>& tt) {
            const auto& g = tt.grad(id);
            auto& gt = tt.grad(table);
            for (size_t r = 0; r < ids_copy->size(); ++r) {
                const S* grow = g.v.data() + r * static_cast<size_t>(d);
                S* trow = gt.v.data() + static_cast<size_t>((*ids_copy)[r]) * d;
                for (int j = 0; j < d; ++j) trow[j] += grow[j];
            }
        };
    }
    return id;
}

// x [B, T, d] + pos[t, :] for t < T; pos is [L, d] with T <= L
template <class S>
Id<S> add_position(TapeT<S>& t, Id<S> x, Id<S> pos) {
    const auto& xv = t.val(x);
    const auto& pv = t.val(pos);
    if (xv.rank() != 3 || pv.rank() != 2 || xv.shape[2] != pv.shape[1]) {
        throw std::runtime_error("add_position: incompatible shapes");
    }
    const int batch = xv.shape[0], seq = xv.shape[1], d = xv.shape[2];
    if (seq > pv.shape[0]) throw std::runtime_error("add_position: sequence longer than positional table");
    ArrayT<S> out = xv;
    for (int b = 0; b < batch; ++b) {
        for (int i = 0; i < seq; ++i) {
            S* row = out.v.data() + (static_cast<size_t>(b) * seq + i) * d;
            const S* prow = pv.v.data() + static_cast<size_t>(i) * d;
            for (int j = 0; j < d; ++j) row[j] += prow[j];
        }
    }
    auto id = t.push(std::move(out), either_grad(t, x, pos), "add_position", {});
    if (t.node(id).needs_grad) {
        t.node(id).back = [x, pos, batch, seq, d, id](TapeT<S>& tt) {
            const auto& g = tt.grad(id);
            if (tt.node(x).needs_grad) {
                auto& gx = tt.grad(x);
                for (size_t i = 0; i < g.numel(); ++i) gx.v[i] += g.v[i];
            }
            if (tt.node(pos).needs_grad) {
                auto& gp = tt.grad(pos);
                for (int b = 0; b < batch; ++b) {
                    for (int i = 0; i < seq; ++i) {
                        const S* grow = g.v.data() + (static_cast<size_t>(b) * seq + i) * d;
                        S* prow = gp.v.data() + static_cast<size_t>(i) * d;
                        for (int j = 0; j < d; ++j) prow[j] += grow[j];
                    }
                }
            }
        };
    }
    return id;
}

// ---------------------------------------------------------------- layer norm

template <class S>
Id<S> layer_norm(TapeT<S>& t, Id<S> x, Id<S> gain, Id<S> bias, double eps = 1e-5) {
    const auto& xv = t.val(x);
    const auto& gv = t.val(gain);
    const auto& bv = t.val(bias);
    if (xv.rank() < 1 || gv.rank() != 1 || bv.rank() != 1) throw std::runtime_error("layer_norm: bad ranks");
    const int d = xv.shape.back();
    if (gv.shape[0] != d || bv.shape[0] != d) throw std::runtime_error("layer_norm: gain/bias size mismatch");
    const size_t rows = xv.rows();

    auto stats = std::make_shared<std::vector<double>>(rows * 2);  // mean, rstd per row
    ArrayT<S> out(xv.shape);
    for (size_t r = 0; r < rows; ++r) {
        const S* xrow = xv.v.data() + r * static_cast<size_t>(d);
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xrow[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xrow[j] - mean;
            var += c * c;
        }
        var /= d;
        const double rstd = 1.0 / std::sqrt(var + eps);
        (*stats)[2 * r] = mean;
        (*stats)[2 * r + 1] = rstd;
        S* orow = out.v.data() + r * static_cast<size_t>(d);
        for (int j = 0; j < d; ++j) {
            orow[j] = static_cast<S>((xrow[j] - mean) * rstd * static_cast<double>(gv.v[j]) +
                                     static_cast<double>(bv.v[j]));
        }
    }
    bool ng = either_grad(t, x, gain) || t.node(bias).needs_grad;
    auto id = t.push(std::move(out), ng, "layer_norm", {});
    if (t.node(id).needs_grad) {
        t.node(id).back = [x, gain, bias, stats, d, rows, id](TapeT<S>& tt) {
            const auto& g = tt.grad(id);
            const auto& xv2 = tt.val(x);
            const auto& gv2 = tt.val(gain);
            for (size_t r = 0; r < rows; ++r) {
                const double mean = (*stats)[2 * r];
                const double rstd = (*stats)[2 * r + 1];
                const S* xrow = xv2.v.data() + r * static_cast<size_t>(d);
                const S* grow = g.v.data() + r * static_cast<size_t>(d);
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double xhat = (xrow[j] - mean) * rstd;
                    const double dxhat = static_cast<double>(grow[j]) * gv2.v[j];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                }
                if (tt.node(gain).needs_grad) {
                    auto& gg = tt.grad(gain);
                    for (int j = 0; j < d; ++j) {
                        gg.v[j] += static_cast<S>(static_cast<double>(grow[j]) * (xrow[j] - mean) * rstd);
                    }
                }
                if (tt.node(bias).needs_grad) {
                    auto& gb = tt.grad(bias);
                    for (int j = 0; j < d; ++j) gb.v[j] += grow[j];
                }
                if (tt.node(x).needs_grad) {
                    auto& gx = tt.grad(x);
                    S* gxrow = gx.v.data() + r * static_cast<size_t>(d);
                    for (int j = 0; j < d; ++j) {
                        const double xhat = (xrow[j] - mean) * rstd;
                        const double dxhat = static_cast<double>(grow[j]) * gv2.v[j];
                        gxrow[j] += static_cast<S>(rstd * (dxhat - sum_dxhat / d - xhat * sum_dxhat_xhat / d));
                    }
                }
            }
        };
    }
    return id;
}

// ----------------------------------------------------------------- attention

// Multi-head causal self-attention over already-projected q, k, v [B, T, D].
// Softmax probabilities are saved for the backward pass.
template <class S>
Id<S> causal_attention(TapeT<S>& t, Id<S> q, Id<S> k, Id<S> v, int heads) {
    const auto& qv = t.val(q);
    const auto& kv = t.val(k);
    const auto& vv = t.val(v);
    if (qv.rank() != 3 || !qv.same_shape(kv) || !qv.same_shape(vv)) {
        throw std::runtime_error("causal_attention: q/k/v must share [B,T,D]");
    }
    const int batch = qv.shape[0], seq = qv.shape[1], dim = qv.shape[2];
    if (heads < 1 || dim % heads != 0) throw std::runtime_error("causal_attention: heads must divide dim");
    const int hd = dim / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

    // probs[b][h][i][j], j <= i; stored dense T*T with zeros above diagonal
    auto probs = std::make_shared<std::vector<double>>(
        static_cast<size_t>(batch) * heads * seq * seq, 0.0);
    auto pat = [batch, heads, seq](int b, int h, int i, int j) {
        return ((static_cast<size_t>(b) * heads + h) * seq + i) * seq + j;
    };

    ArrayT<S> out({batch, seq, dim});
    std::vector<double> scores(static_cast<size_t>(seq));
    for (int b = 0; b < batch; ++b) {
        for (int h = 0; h < heads; ++h) {
            const int off = h * hd;
            for (int i = 0; i < seq; ++i) {
                const S* qrow = qv.v.data() + (static_cast<size_t>(b) * seq + i) * dim + off;
                double mx = -1e30;
                for (int j = 0; j <= i; ++j) {
                    const S* krow = kv.v.data() + (static_cast<size_t>(b) * seq + j) * dim + off;
                    double dot = 0.0;
                    for (int c = 0; c < hd; ++c) dot += static_cast<double>(qrow[c]) * krow[c];
                    scores[j] = dot * inv_sqrt;
                    mx = std::max(mx, scores[j]);
                }
                double denom = 0.0;
                for (int j = 0; j <= i; ++j) {
                    scores[j] = std::exp(scores[j] - mx);
                    denom += scores[j];
                }
                S* orow = out.v.data() + (static_cast<size_t>(b) * seq + i) * dim + off;
                for (int j = 0; j <= i; ++j) {
                    const double p = scores[j] / denom;
                    (*probs)[pat(b, h, i, j)] = p;
                    const S* vrow = vv.v.data() + (static_cast<size_t>(b) * seq + j) * dim + off;
                    for (int c = 0; c < hd; ++c) orow[c] += static_cast<S>(p * vrow[c]);
                }
            }
        }
    }
    bool ng = either_grad(t, q, k) || t.node(v).needs_grad;
    auto id = t.push(std::move(out), ng, "causal_attention", {});
    if (t.node(id).needs_grad) {
        t.node(id).back = [q, k, v, probs, pat, batch, heads, seq, dim, hd, inv_sqrt, id](TapeT<S>& tt) {
            const auto& g = tt.grad(id);
            const auto& qv2 = tt.val(q);
            const auto& kv2 = tt.val(k);
            const auto& vv2 = tt.val(v);
            const bool nq = tt.node(q).needs_grad;
            const bool nk = tt.node(k).needs_grad;
            const bool nv = tt.node(v).needs_grad;
            auto& gq = tt.grad(q);
            auto& gk = tt.grad(k);
            auto& gv = tt.grad(v);
            std::vector<double> dscore(static_cast<size_t>(seq));
            for (int b = 0; b < batch; ++b) {
                for (int h = 0; h < heads; ++h) {
                    const int off = h * hd;
                    for (int i = 0; i < seq; ++i) {
                        const S* grow = g.v.data() + (static_cast<size_t>(b) * seq + i) * dim + off;
                        // dp and the softmax Jacobian
                        double dot_pd = 0.0;
                        for (int j = 0; j <= i; ++j) {
                            const S* vrow = vv2.v.data() + (static_cast<size_t>(b) * seq + j) * dim + off;
                            double dp = 0.0;
                            for (int c = 0; c < hd; ++c) dp += static_cast<double>(grow[c]) * vrow[c];
                            dscore[j] = dp;
                            dot_pd += (*probs)[pat(b, h, i, j)] * dp;
                        }
                        const S* qrow = qv2.v.data() + (static_cast<size_t>(b) * seq + i) * dim + off;
                        for (int j = 0; j <= i; ++j) {
                            const double p = (*probs)[pat(b, h, i, j)];
                            const double ds = p * (dscore[j] - dot_pd) * inv_sqrt;
                            const S* krow = kv2.v.data() + (static_cast<size_t>(b) * seq + j) * dim + off;
                            if (nq) {
                                S* gqrow = gq.v.data() + (static_cast<size_t>(b) * seq + i) * dim + off;
                                for (int c = 0; c < hd; ++c) gqrow[c] += static_cast<S>(ds * krow[c]);
                            }
                            if (nk) {
                                S* gkrow = gk.v.data() + (static_cast<size_t>(b) * seq + j) * dim + off;
                                for (int c = 0; c < hd; ++c) gkrow[c] += static_cast<S>(ds * qrow[c]);
                            }
                            if (nv) {
                                S* gvrow = gv.v.data() + (static_cast<size_t>(b) * seq + j) * dim + off;
                                for (int c = 0; c < hd; ++c) gvrow[c] += static_cast<S>(p * grow[c]);
                            }
                        }
                    }
                }
            }
        };
    }
    return id;
}

// --------------------------------------------------------------- log softmax

// Numerically stabilized log softmax over the last dimension.
template <class S>
Id<S> log_softmax(TapeT<S>& t, Id<S> x) {
    const auto& xv = t.val(x);
    if (xv.rank() < 1 || xv.shape.back() < 1) throw std::runtime_error("log_softmax: need a last dimension");
    if (!xv.all_finite()) throw std::runtime_error("non-finite logits");
    const int n = xv.shape.back();
    const size_t rows = xv.rows();
    ArrayT<S> out(xv.shape);
    for (size_t r = 0; r < rows; ++r) {
        const S* xrow = xv.v.data() + r * static_cast<size_t>(n);
        S* orow = out.v.data() + r * static_cast<size_t>(n);
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(xrow[j]));
        double denom = 0.0;
        for (int j = 0; j < n; ++j) denom += std::exp(static_cast<double>(xrow[j]) - mx);
        const double lse = mx + std::log(denom);
        for (int j = 0; j < n; ++j) orow[j] = static_cast<S>(static_cast<double>(xrow[j]) - lse);
    }
    auto id = t.push(std::move(out), t.node(x).needs_grad, "log_softmax", {});
    if (t.node(id).needs_grad) {
        t.node(id).back = [x, n, rows, id](TapeT<S>& tt) {
            const auto& g = tt.grad(id);
            const auto& yv = tt.val(id);
            auto& gx = tt.grad(x);
            for (size_t r = 0; r < rows; ++r) {
                const S* grow = g.v.data() + r * static_cast<size_t>(n);
                const S* yrow = yv.v.data() + r * static_cast<size_t>(n);
                S* gxrow = gx.v.data() + r * static_cast<size_t>(n);
                double s = 0.0;
                for (int j = 0; j < n; ++j) s += grow[j];
                for (int j = 0; j < n; ++j) {
                    gxrow[j] += static_cast<S>(grow[j] - std::exp(static_cast<double>(yrow[j])) * s);
                }
            }
        };
    }
    return id;
}

// ------------------------------------------------------------------- losses

// Sum of -logp[b, pos, token] over picks (the likelihood side).
template <class S>
Id<S> pick_nll(TapeT<S>& t, Id<S> logp, const std::vector<Pick>& picks) {
    const auto& lv = t.val(logp);
    if (lv.rank() != 3) throw std::runtime_error("pick_nll: expected [B,T,V] log-probs");
    const int seq = lv.shape[1], vocab = lv.shape[2];
    auto flat = [seq, vocab](const Pick& p) {
        return (static_cast<size_t>(p.b) * seq + p.pos) * vocab + p.token;
    };
    double acc = 0.0;
    for (const auto& p : picks) {
        if (p.pos < 0 || p.pos >= seq || p.token < 0 || p.token >= vocab) {
            throw std::runtime_error("pick_nll: index out of range");
        }
        acc -= static_cast<double>(lv.v[flat(p)]);
    }
    auto id = t.push(ArrayT<S>::scalar(static_cast<S>(acc)), t.node(logp).needs_grad, "pick_nll", {});
    if (t.node(id).needs_grad) {
        auto picks_copy = std::make_shared<std::vector<Pick>>(picks);
        t.node(id).back = [logp, picks_copy, flat, id](TapeT<S>& tt) {
            const S g = tt.grad(id).v[0];
            auto& gl = tt.grad(logp);
            for (const auto& p : *picks_copy) gl.v[flat(p)] -= g;
        };
    }
    return id;
}

// Sum of -beta * log(1 - p) over candidate picks, with 1 - p floored at
// kUlProbClamp so the loss stays finite when a candidate saturates.
template <class S>
Id<S> pick_ul(TapeT<S>& t, Id<S> logp, const std::vector<UlPick>& picks) {
    const auto& lv = t.val(logp);
    if (lv.rank() != 3) throw std::runtime_error("pick_ul: expected [B,T,V] log-probs");
    const int seq = lv.shape[1], vocab = lv.shape[2];
    auto flat = [seq, vocab](const UlPick& p) {
        return (static_cast<size_t>(p.b) * seq + p.pos) * vocab + p.token;
    };
    double acc = 0.0;
    for (const auto& p : picks) {
        if (p.pos < 0 || p.pos >= seq || p.token < 0 || p.token >= vocab) {
            throw std::runtime_error("pick_ul: index out of range");
        }
        if (p.beta < 0.0) throw std::runtime_error("pick_ul: negative beta");
        if (!std::isfinite(p.beta)) throw std::runtime_error("pick_ul: non-finite beta");
        const double lp = static_cast<double>(lv.v[flat(p)]);
        const double one_minus = std::max(-std::expm1(lp), kUlProbClamp);
        acc += -p.beta * std::log(one_minus);
    }
    auto id = t.push(ArrayT<S>::scalar(static_cast<S>(acc)), t.node(logp).needs_grad, "pick_ul", {});
    if (t.node(id).needs_grad) {
        auto picks_copy = std::make_shared<std::vector<UlPick>>(picks);
        t.node(id).back = [logp, picks_copy, flat, id](TapeT<S>& tt) {
            const S g = tt.grad(id).v[0];
            const auto& lv2 = tt.val(logp);
            auto& gl = tt.grad(logp);
            for (const auto& p : *picks_copy) {
                const size_t f = flat(p);
                const double lp = static_cast<double>(lv2.v[f]);
                const double one_minus = -std::expm1(lp);
                if (one_minus <= kUlProbClamp) continue;  // clamped region: flat
                const double prob = std::exp(lp);
                gl.v[f] += static_cast<S>(static_cast<double>(g) * p.beta * prob / one_minus);
            }
        };
    }
    return id;
}

// ------------------------------------------------------------------ dropout

// Inverted dropout; identity when rate is zero. Mask is drawn from `rng` at
// build time, so a fixed seed reproduces the forward pass exactly.
template <class S>
Id<S> dropout(TapeT<S>& t, Id<S> x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::runtime_error("dropout: rate must be in [0,1)");
    if (rate == 0.0) return x;
    const auto& xv = t.val(x);
    const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
    auto mask = std::make_shared<std::vector<uint8_t>>(xv.numel());
    ArrayT<S> out = xv;
    for (size_t i = 0; i < out.numel(); ++i) {
        const bool keep = rng.uniform() >= rate;
        (*mask)[i] = keep;
        out.v[i] = keep ? out.v[i] * keep_scale : S(0);
    }
    auto id = t.push(std::move(out), t.node(x).needs_grad, "dropout", {});
    if (t.node(id).needs_grad) {
        t.node(id).back = [x, mask, keep_scale, id](TapeT<S>& tt) {
            const auto& g = tt.grad(id);
            auto& gx = tt.grad(x);
            for (size_t i = 0; i < g.numel(); ++i) {
                if ((*mask)[i]) gx.v[i] += g.v[i] * keep_scale;
            }
        };
    }
    return id;
}

}  // namespace ops
}  // namespace ul
