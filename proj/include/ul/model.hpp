#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ul/array.hpp"
#include "ul/rng.hpp"
#include "ul/tape.hpp"
#include "ul/vocab.hpp"

namespace ul {

struct ModelConfig {
    int vocab_size = 0;
    int embed_dim = 64;
    int layers = 2;
    int heads = 2;
    int feedforward_dim = 256;  // 4 * embed_dim by default
    int max_seq_len = 128;
    float dropout = 0.0f;

    void validate() const {
        if (vocab_size < kNumReserved + 1) throw std::runtime_error("model config: vocab_size too small");
        if (embed_dim < 1 || layers < 1 || heads < 1 || feedforward_dim < 1) {
            throw std::runtime_error("model config: dimensions must be positive");
        }
        if (embed_dim % heads != 0) throw std::runtime_error("model config: embed_dim must be divisible by heads");
        if (max_seq_len < 2) throw std::runtime_error("model config: max_seq_len must be >= 2");
        if (dropout < 0.0f || dropout >= 1.0f) throw std::runtime_error("model config: dropout must be in [0,1)");
    }

    static ModelConfig desk_default(int vocab_size) {
        ModelConfig c;
        c.vocab_size = vocab_size;
        c.feedforward_dim = 4 * c.embed_dim;
        return c;
    }

    bool operator==(const ModelConfig&) const = default;
};

// Decoder-only parameter set. for_each visits arrays in a fixed order that
// the optimizer, checkpoint format and gradient checks all share.
template <class S>
struct ModelParamsT {
    struct Layer {
        ArrayT<S> ln1_g, ln1_b;
        ArrayT<S> wq, bq, wk, bk, wv, bv, wo, bo;
        ArrayT<S> ln2_g, ln2_b;
        ArrayT<S> w1, b1, w2, b2;
    };

    ArrayT<S> tok_emb;  // [V, d]
    ArrayT<S> pos_emb;  // [max_seq_len, d]
    std::vector<Layer> layers;
    ArrayT<S> lnf_g, lnf_b;
    ArrayT<S> head_w;  // [d, V], untied from tok_emb
    ArrayT<S> head_b;  // [V]

    template <class F>
    void for_each(F&& f) {
        f("tok_emb", tok_emb);
        f("pos_emb", pos_emb);
        for (size_t i = 0; i < layers.size(); ++i) {
            auto& l = layers[i];
            const std::string p = "layers." + std::to_string(i) + ".";
            f(p + "ln1_g", l.ln1_g);
            f(p + "ln1_b", l.ln1_b);
            f(p + "wq", l.wq);
            f(p + "bq", l.bq);
            f(p + "wk", l.wk);
            f(p + "bk", l.bk);
            f(p + "wv", l.wv);
            f(p + "bv", l.bv);
            f(p + "wo", l.wo);
            f(p + "bo", l.bo);
            f(p + "ln2_g", l.ln2_g);
            f(p + "ln2_b", l.ln2_b);
            f(p + "w1", l.w1);
            f(p + "b1", l.b1);
            f(p + "w2", l.w2);
            f(p + "b2", l.b2);
        }
        f("lnf_g", lnf_g);
        f("lnf_b", lnf_b);
        f("head_w", head_w);
        f("head_b", head_b);
    }

    template <class F>
    void for_each(F&& f) const {
        const_cast<ModelParamsT*>(this)->for_each([&](const std::string& name, ArrayT<S>& a) {
            f(name, static_cast<const ArrayT<S>&>(a));
        });
    }

    std::vector<ArrayT<S>*> flat() {
        std::vector<ArrayT<S>*> out;
        for_each([&](const std::string&, ArrayT<S>& a) { out.push_back(&a); });
        return out;
    }

    bool all_finite() const {
        bool ok = true;
        for_each([&](const std::string&, const ArrayT<S>& a) { ok = ok && a.all_finite(); });
        return ok;
    }

    static ModelParamsT init(const ModelConfig& cfg, Rng& rng) {
        cfg.validate();
        const int d = cfg.embed_dim, v = cfg.vocab_size, f = cfg.feedforward_dim;
        const S std_dev = S(0.02);
        auto normal = [&](std::vector<int> shape) {
            ArrayT<S> a(std::move(shape));
            for (auto& x : a.v) x = static_cast<S>(rng.gauss(0.0, static_cast<double>(std_dev)));
            return a;
        };
        auto zeros = [](std::vector<int> shape) { return ArrayT<S>::zeros(std::move(shape)); };
        auto ones = [](std::vector<int> shape) { return ArrayT<S>::full(std::move(shape), S(1)); };

        ModelParamsT p;
        p.tok_emb = normal({v, d});
        p.pos_emb = normal({cfg.max_seq_len, d});
        p.layers.resize(static_cast<size_t>(cfg.layers));
        for (auto& l : p.layers) {
            l.ln1_g = ones({d});
            l.ln1_b = zeros({d});
            l.wq = normal({d, d});
            l.bq = zeros({d});
            l.wk = normal({d, d});
            l.bk = zeros({d});
            l.wv = normal({d, d});
            l.bv = zeros({d});
            l.wo = normal({d, d});
            l.bo = zeros({d});
            l.ln2_g = ones({d});
            l.ln2_b = zeros({d});
            l.w1 = normal({d, f});
            l.b1 = zeros({f});
            l.w2 = normal({f, d});
            l.b2 = zeros({d});
        }
        p.lnf_g = ones({d});
        p.lnf_b = zeros({d});
        p.head_w = normal({d, v});
        p.head_b = zeros({v});
        return p;
    }

    template <class T>
    ModelParamsT<T> cast() const {
        ModelParamsT<T> out;
        std::vector<const ArrayT<S>*> src;
        for_each([&](const std::string&, const ArrayT<S>& a) { src.push_back(&a); });
        out.layers.resize(layers.size());
        size_t i = 0;
        out.for_each([&](const std::string&, ArrayT<T>& a) { a = src[i++]->template cast<T>(); });
        return out;
    }
};

using ModelParams = ModelParamsT<float>;

// BOS ++ context ++ SEP ++ target ++ EOS with a mask over target tokens + EOS.
struct EncodedExample {
    TokenSeq ids;
    std::vector<bool> target_mask;

    int length() const { return static_cast<int>(ids.size()); }
    int target_steps() const {
        int n = 0;
        for (bool b : target_mask) n += b;
        return n;
    }
};

// Context sentences then history utterances are concatenated in order; the
// leftmost context tokens are dropped first when the budget overflows.
// Errors if the target is empty or cannot fit even with no context.
EncodedExample encode_example(const std::vector<TokenSeq>& context_sents,
                              const std::vector<TokenSeq>& history, const TokenSeq& target,
                              int max_seq_len);

// Context prefix only (BOS ++ context ++ SEP), for decoding.
TokenSeq encode_context(const std::vector<TokenSeq>& context_sents, const std::vector<TokenSeq>& history,
                        int max_seq_len, int reserve_for_target);

// Node ids of the parameters as pushed onto a tape for one forward/backward.
template <class S>
struct ParamNodesT {
    std::vector<typename TapeT<S>::Id> ids;
};

template <class S>
ParamNodesT<S> push_params(TapeT<S>& tape, const ModelParamsT<S>& params, bool needs_grad = true) {
    ParamNodesT<S> nodes;
    params.for_each([&](const std::string&, const ArrayT<S>& a) { nodes.ids.push_back(tape.leaf(a, needs_grad)); });
    return nodes;
}

namespace detail {
// Index layout within ParamNodesT::ids, mirroring for_each order.
constexpr int kPerLayer = 16;
inline int layer_base(int layer) { return 2 + layer * kPerLayer; }
}  // namespace detail

// Forward pass over a padded batch. Returns the [B, T, V] log-probability
// node; row (b, i) is the distribution of the token at position i + 1.
template <class S>
typename TapeT<S>::Id forward_logprobs(TapeT<S>& tape, const ParamNodesT<S>& pn, const ModelConfig& cfg,
                                       const std::vector<TokenSeq>& batch, Rng* dropout_rng = nullptr) {
    using ops::add;
    using ops::add_bias;
    using ops::add_position;
    using ops::causal_attention;
    using ops::embedding;
    using ops::layer_norm;
    using ops::linear;
    using ops::log_softmax;
    using ops::relu;

    if (batch.empty()) throw std::runtime_error("forward: empty batch");
    size_t max_len = 0;
    for (const auto& seq : batch) max_len = std::max(max_len, seq.size());
    if (max_len == 0) throw std::runtime_error("forward: empty sequences");
    if (max_len > static_cast<size_t>(cfg.max_seq_len)) {
        throw std::runtime_error("forward: sequence length exceeds max_seq_len");
    }

    const int b_n = static_cast<int>(batch.size());
    const int t_n = static_cast<int>(max_len);
    std::vector<int32_t> flat(static_cast<size_t>(b_n) * t_n, kPad);
    for (int b = 0; b < b_n; ++b) {
        std::copy(batch[b].begin(), batch[b].end(), flat.begin() + static_cast<size_t>(b) * t_n);
    }

    const bool use_dropout = cfg.dropout > 0.0f && dropout_rng != nullptr;
    auto maybe_dropout = [&](typename TapeT<S>::Id x) {
        return use_dropout ? ops::dropout(tape, x, static_cast<double>(cfg.dropout), *dropout_rng) : x;
    };

    auto x = embedding(tape, pn.ids[0], flat, b_n, t_n);
    x = add_position(tape, x, pn.ids[1]);
    x = maybe_dropout(x);

    for (int li = 0; li < cfg.layers; ++li) {
        const int base = detail::layer_base(li);
        auto h = layer_norm(tape, x, pn.ids[base + 0], pn.ids[base + 1]);
        auto q = add_bias(tape, linear(tape, h, pn.ids[base + 2]), pn.ids[base + 3]);
        auto k = add_bias(tape, linear(tape, h, pn.ids[base + 4]), pn.ids[base + 5]);
        auto v = add_bias(tape, linear(tape, h, pn.ids[base + 6]), pn.ids[base + 7]);
        auto attn = causal_attention(tape, q, k, v, cfg.heads);
        auto proj = add_bias(tape, linear(tape, attn, pn.ids[base + 8]), pn.ids[base + 9]);
        x = add(tape, x, maybe_dropout(proj));

        auto h2 = layer_norm(tape, x, pn.ids[base + 10], pn.ids[base + 11]);
        auto f1 = relu(tape, add_bias(tape, linear(tape, h2, pn.ids[base + 12]), pn.ids[base + 13]));
        auto f2 = add_bias(tape, linear(tape, f1, pn.ids[base + 14]), pn.ids[base + 15]);
        x = add(tape, x, maybe_dropout(f2));
    }

    const int fin = detail::layer_base(cfg.layers);
    x = layer_norm(tape, x, pn.ids[fin + 0], pn.ids[fin + 1]);
    auto logits = add_bias(tape, linear(tape, x, pn.ids[fin + 2]), pn.ids[fin + 3]);
    return log_softmax(tape, logits);
}

// Per-step log p(y_t | x, y_<t) for every masked target step, EOS included.
std::vector<float> target_logprobs(const ModelParams& params, const ModelConfig& cfg,
                                   const EncodedExample& ex);

// The (position, token) pairs whose log-probabilities make up the target
// steps: position i predicts ids[i + 1].
std::vector<Pick> target_picks(const EncodedExample& ex, int batch_row);

// ------------------------------------------------------------- checkpoints

// Binary format: magic "ULCK", u32 version, length-prefixed config and
// vocabulary blobs, then named f32 parameter blobs with shape headers.
void save_checkpoint(const ModelParams& params, const ModelConfig& cfg, const Vocabulary& vocab,
                     const std::string& path);

struct Checkpoint {
    ModelParams params;
    ModelConfig config;
    Vocabulary vocab;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace ul
