#include "ul/infer.hpp"

#include <cmath>
#include <stdexcept>

namespace ul {

namespace {

// y[n] += x[k] * w[k, n], float accumulation in the same order as the tape op
void add_matvec(const float* x, const Array& w, float* y) {
    const int k_n = w.shape[0], n_n = w.shape[1];
    for (int k = 0; k < k_n; ++k) {
        const float xk = x[k];
        if (xk == 0.0f) continue;
        const float* wrow = w.v.data() + static_cast<size_t>(k) * n_n;
        for (int j = 0; j < n_n; ++j) y[j] += xk * wrow[j];
    }
}

void layer_norm_row(const float* x, const Array& gain, const Array& bias, int d, float* out) {
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += x[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
        const double c = x[j] - mean;
        var += c * c;
    }
    var /= d;
    const double rstd = 1.0 / std::sqrt(var + 1e-5);
    for (int j = 0; j < d; ++j) {
        out[j] = static_cast<float>((x[j] - mean) * rstd * static_cast<double>(gain.v[j]) +
                                    static_cast<double>(bias.v[j]));
    }
}

}  // namespace

InferenceState::InferenceState(const ModelParams& params, const ModelConfig& cfg)
    : params_(&params), cfg_(cfg) {
    cfg_.validate();
    k_cache_.resize(static_cast<size_t>(cfg_.layers));
    v_cache_.resize(static_cast<size_t>(cfg_.layers));
}

void InferenceState::feed(TokenId token, bool want_logprobs) {
    const int d = cfg_.embed_dim;
    const int heads = cfg_.heads;
    const int hd = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    if (pos_ >= cfg_.max_seq_len) throw std::runtime_error("inference: sequence exceeds max_seq_len");
    if (token < 0 || token >= cfg_.vocab_size) throw std::runtime_error("inference: token id out of range");

    const ModelParams& p = *params_;
    std::vector<float> x(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) {
        x[j] = p.tok_emb.v[static_cast<size_t>(token) * d + j] +
               p.pos_emb.v[static_cast<size_t>(pos_) * d + j];
    }

    std::vector<float> h(static_cast<size_t>(d)), q(static_cast<size_t>(d));
    std::vector<float> attn(static_cast<size_t>(d)), tmp;
    for (int li = 0; li < cfg_.layers; ++li) {
        const auto& l = p.layers[static_cast<size_t>(li)];
        auto& kc = k_cache_[static_cast<size_t>(li)];
        auto& vc = v_cache_[static_cast<size_t>(li)];

        layer_norm_row(x.data(), l.ln1_g, l.ln1_b, d, h.data());
        q.assign(l.bq.v.begin(), l.bq.v.end());
        add_matvec(h.data(), l.wq, q.data());
        const size_t row = static_cast<size_t>(pos_) * d;
        kc.resize(row + d);
        vc.resize(row + d);
        std::copy(l.bk.v.begin(), l.bk.v.end(), kc.begin() + row);
        std::copy(l.bv.v.begin(), l.bv.v.end(), vc.begin() + row);
        add_matvec(h.data(), l.wk, kc.data() + row);
        add_matvec(h.data(), l.wv, vc.data() + row);

        std::fill(attn.begin(), attn.end(), 0.0f);
        std::vector<double> scores(static_cast<size_t>(pos_) + 1);
        for (int hh = 0; hh < heads; ++hh) {
            const int off = hh * hd;
            double mx = -1e30;
            for (int j = 0; j <= pos_; ++j) {
                const float* krow = kc.data() + static_cast<size_t>(j) * d + off;
                double dot = 0.0;
                for (int c = 0; c < hd; ++c) dot += static_cast<double>(q[off + c]) * krow[c];
                scores[static_cast<size_t>(j)] = dot * inv_sqrt;
                mx = std::max(mx, scores[static_cast<size_t>(j)]);
            }
            double denom = 0.0;
            for (int j = 0; j <= pos_; ++j) {
                scores[static_cast<size_t>(j)] = std::exp(scores[static_cast<size_t>(j)] - mx);
                denom += scores[static_cast<size_t>(j)];
            }
            for (int j = 0; j <= pos_; ++j) {
                const double prob = scores[static_cast<size_t>(j)] / denom;
                const float* vrow = vc.data() + static_cast<size_t>(j) * d + off;
                for (int c = 0; c < hd; ++c) {
                    attn[off + c] += static_cast<float>(prob * vrow[c]);
                }
            }
        }

        tmp.assign(l.bo.v.begin(), l.bo.v.end());
        add_matvec(attn.data(), l.wo, tmp.data());
        for (int j = 0; j < d; ++j) x[j] += tmp[j];

        layer_norm_row(x.data(), l.ln2_g, l.ln2_b, d, h.data());
        std::vector<float> f1(l.b1.v.begin(), l.b1.v.end());
        add_matvec(h.data(), l.w1, f1.data());
        for (auto& z : f1) z = std::max(z, 0.0f);
        tmp.assign(l.b2.v.begin(), l.b2.v.end());
        add_matvec(f1.data(), l.w2, tmp.data());
        for (int j = 0; j < d; ++j) x[j] += tmp[j];
    }

    ++pos_;
    if (!want_logprobs) return;

    layer_norm_row(x.data(), p.lnf_g, p.lnf_b, d, h.data());
    logprobs_.assign(p.head_b.v.begin(), p.head_b.v.end());
    add_matvec(h.data(), p.head_w, logprobs_.data());
    double mx = -1e30;
    for (float z : logprobs_) {
        if (!std::isfinite(z)) throw std::runtime_error("non-finite logits");
        mx = std::max(mx, static_cast<double>(z));
    }
    double denom = 0.0;
    for (float z : logprobs_) denom += std::exp(static_cast<double>(z) - mx);
    const double lse = mx + std::log(denom);
    for (auto& z : logprobs_) z = static_cast<float>(static_cast<double>(z) - lse);
}

void InferenceState::feed_all(const TokenSeq& prefix, bool want_final_logprobs) {
    for (size_t i = 0; i < prefix.size(); ++i) {
        feed(prefix[i], want_final_logprobs && i + 1 == prefix.size());
    }
}

}  // namespace ul
