#include "ul/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ul/ngram.hpp"

namespace ul {

DecodeStrategy decode_strategy_from_string(const std::string& s) {
    if (s == "greedy") return DecodeStrategy::greedy;
    if (s == "beam") return DecodeStrategy::beam;
    if (s == "beam-block" || s == "beam_block") return DecodeStrategy::beam_block;
    if (s == "nucleus") return DecodeStrategy::nucleus;
    throw std::runtime_error("unknown decode strategy: " + s);
}

std::string to_string(DecodeStrategy s) {
    switch (s) {
        case DecodeStrategy::greedy: return "greedy";
        case DecodeStrategy::beam: return "beam";
        case DecodeStrategy::beam_block: return "beam-block";
        case DecodeStrategy::nucleus: return "nucleus";
    }
    return "?";
}

void DecodeConfig::validate() const {
    if (beam_size < 1) throw std::runtime_error("decode: beam_size must be >= 1");
    if (nucleus_p <= 0.0 || nucleus_p > 1.0) throw std::runtime_error("decode: nucleus p must be in (0,1]");
    if (max_len < 1) throw std::runtime_error("decode: max_len must be >= 1");
    if (block_n < 1) throw std::runtime_error("decode: block_n must be >= 1");
}

namespace {

int argmax_lowest_id(const std::vector<float>& row) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(row.size()); ++i) {
        if (row[i] > row[best]) best = i;
    }
    return best;
}

struct Hypothesis {
    TokenSeq tokens;
    double score = 0.0;
    InferenceState state;
    bool fallback_used = false;

    Hypothesis(const ModelParams& p, const ModelConfig& c) : state(p, c) {}
};

// candidate ordering: higher score first, then lexicographically smaller
// token sequence so ties resolve the same way greedy does
bool candidate_less(double sa, const TokenSeq& pa, TokenId wa, double sb, const TokenSeq& pb, TokenId wb) {
    if (sa != sb) return sa > sb;
    const size_t n = std::min(pa.size(), pb.size());
    for (size_t i = 0; i < n; ++i) {
        if (pa[i] != pb[i]) return pa[i] < pb[i];
    }
    if (pa.size() != pb.size()) return pa.size() < pb.size();
    return wa < wb;
}

DecodeResult beam_core(const ModelParams& params, const ModelConfig& cfg, const TokenSeq& prefix,
                       int beam_size, int max_len, const NgramIndex* block_index, int block_n) {
    struct Finished {
        TokenSeq tokens;
        double score;
        bool fallback_used;
    };

    std::vector<Hypothesis> alive;
    {
        Hypothesis root(params, cfg);
        root.state.feed_all(prefix, /*want_final_logprobs=*/true);
        alive.push_back(std::move(root));
    }

    std::vector<Finished> finished;
    for (int step = 0; step < max_len && !alive.empty(); ++step) {
        struct Cand {
            int hyp;
            TokenId token;
            double score;
            bool fallback;
        };
        std::vector<Cand> cands;
        for (int hi = 0; hi < static_cast<int>(alive.size()); ++hi) {
            const auto& hyp = alive[static_cast<size_t>(hi)];
            const auto& lp = hyp.state.logprobs();
            bool any_allowed = false;
            for (int w = 0; w < static_cast<int>(lp.size()); ++w) {
                bool blocked = false;
                if (block_index != nullptr && static_cast<int>(hyp.tokens.size()) >= block_n - 1) {
                    TokenSeq gram(hyp.tokens.end() - (block_n - 1), hyp.tokens.end());
                    gram.push_back(w);
                    blocked = block_index->contains(gram);
                }
                if (blocked) continue;
                any_allowed = true;
                cands.push_back(Cand{hi, w, hyp.score + lp[static_cast<size_t>(w)], false});
            }
            if (!any_allowed) {
                // every continuation is blocked; take the unblocked argmax and flag it
                std::vector<float> row(lp.begin(), lp.end());
                const int w = argmax_lowest_id(row);
                cands.push_back(Cand{hi, w, hyp.score + lp[static_cast<size_t>(w)], true});
            }
        }
        std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
            return candidate_less(a.score, alive[static_cast<size_t>(a.hyp)].tokens, a.token, b.score,
                                  alive[static_cast<size_t>(b.hyp)].tokens, b.token);
        });

        // the top beam_size candidates are kept; an EOS candidate finishes and
        // still consumes its slot (this is what makes beam(1) match greedy)
        std::vector<Hypothesis> next;
        int taken = 0;
        for (const auto& c : cands) {
            if (taken >= beam_size) break;
            ++taken;
            const auto& parent = alive[static_cast<size_t>(c.hyp)];
            if (c.token == kEos) {
                finished.push_back(Finished{parent.tokens, c.score, parent.fallback_used || c.fallback});
                continue;
            }
            Hypothesis h = parent;  // cache copy
            h.tokens.push_back(c.token);
            h.score = c.score;
            h.fallback_used = parent.fallback_used || c.fallback;
            h.state.feed(c.token, /*want_logprobs=*/true);
            next.push_back(std::move(h));
        }
        alive = std::move(next);
    }
    for (auto& h : alive) {
        finished.push_back(Finished{std::move(h.tokens), h.score, h.fallback_used});
    }
    if (finished.empty()) return {};

    const Finished* best = &finished[0];
    for (const auto& f : finished) {
        if (f.score > best->score ||
            (f.score == best->score && std::lexicographical_compare(f.tokens.begin(), f.tokens.end(),
                                                                    best->tokens.begin(), best->tokens.end()))) {
            best = &f;
        }
    }
    return DecodeResult{best->tokens, best->score, best->fallback_used};
}

}  // namespace

DecodeResult greedy_decode(const ModelParams& params, const ModelConfig& cfg, const TokenSeq& prefix,
                           int max_len) {
    InferenceState state(params, cfg);
    state.feed_all(prefix, true);
    DecodeResult res;
    for (int step = 0; step < max_len; ++step) {
        const auto& lp = state.logprobs();
        const int tok = argmax_lowest_id(lp);
        res.score += lp[static_cast<size_t>(tok)];
        if (tok == kEos) return res;
        res.tokens.push_back(tok);
        state.feed(tok, true);
    }
    return res;
}

DecodeResult beam_decode(const ModelParams& params, const ModelConfig& cfg, const TokenSeq& prefix,
                         int beam_size, int max_len) {
    if (beam_size < 1) throw std::runtime_error("beam: beam_size must be >= 1");
    return beam_core(params, cfg, prefix, beam_size, max_len, nullptr, 0);
}

DecodeResult beam_block_decode(const ModelParams& params, const ModelConfig& cfg, const TokenSeq& prefix,
                               int beam_size, int block_n, const TokenSeq& block_context, int max_len) {
    if (beam_size < 1) throw std::runtime_error("beam_block: beam_size must be >= 1");
    if (block_n < 1) throw std::runtime_error("beam_block: block_n must be >= 1");
    NgramIndex index(block_context, block_n);
    return beam_core(params, cfg, prefix, beam_size, max_len, &index, block_n);
}

int nucleus_step(const std::vector<double>& probs, double p, Rng& rng) {
    if (p <= 0.0 || p > 1.0) throw std::runtime_error("nucleus: p must be in (0,1]");
    std::vector<int> order(probs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (probs[static_cast<size_t>(a)] != probs[static_cast<size_t>(b)]) {
            return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)];
        }
        return a < b;
    });
    size_t cut = order.size();
    double mass = 0.0;
    for (size_t i = 0; i < order.size(); ++i) {
        mass += probs[static_cast<size_t>(order[i])];
        if (mass >= p) {
            cut = i + 1;
            break;
        }
    }
    const double r = rng.uniform() * mass;
    double c = 0.0;
    for (size_t i = 0; i < cut; ++i) {
        c += probs[static_cast<size_t>(order[i])];
        if (r < c) return order[i];
    }
    return order[cut - 1];
}

DecodeResult nucleus_decode(const ModelParams& params, const ModelConfig& cfg, const TokenSeq& prefix,
                            double p, int max_len, Rng& rng) {
    InferenceState state(params, cfg);
    state.feed_all(prefix, true);
    DecodeResult res;
    std::vector<double> probs(static_cast<size_t>(cfg.vocab_size));
    for (int step = 0; step < max_len; ++step) {
        const auto& lp = state.logprobs();
        for (size_t i = 0; i < probs.size(); ++i) probs[i] = std::exp(static_cast<double>(lp[i]));
        const int tok = nucleus_step(probs, p, rng);
        res.score += lp[static_cast<size_t>(tok)];
        if (tok == kEos) return res;
        res.tokens.push_back(tok);
        state.feed(tok, true);
    }
    return res;
}

DecodeResult decode(const ModelParams& params, const ModelConfig& cfg, const TokenSeq& prefix,
                    const TokenSeq& block_context, const DecodeConfig& dc, uint64_t example_index) {
    dc.validate();
    switch (dc.strategy) {
        case DecodeStrategy::greedy:
            return greedy_decode(params, cfg, prefix, dc.max_len);
        case DecodeStrategy::beam:
            return beam_decode(params, cfg, prefix, dc.beam_size, dc.max_len);
        case DecodeStrategy::beam_block:
            return beam_block_decode(params, cfg, prefix, dc.beam_size, dc.block_n, block_context, dc.max_len);
        case DecodeStrategy::nucleus: {
            Rng rng = Rng::fork(dc.seed, example_index);
            return nucleus_decode(params, cfg, prefix, dc.nucleus_p, dc.max_len, rng);
        }
    }
    throw std::runtime_error("decode: unknown strategy");
}

}  // namespace ul
