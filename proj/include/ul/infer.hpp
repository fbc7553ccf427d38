#pragma once

#include <vector>

#include "ul/model.hpp"

namespace ul {

// Incremental single-sequence forward pass with per-layer KV caches.
// Mirrors the tape forward arithmetic; used by decoding and scoring where no
// gradients are needed. Copyable so beam search can branch hypotheses.
class InferenceState {
public:
    InferenceState(const ModelParams& params, const ModelConfig& cfg);

    // Feeds one token at the next position. When want_logprobs is true the
    // output head runs and the log-probability row for the next token is
    // stored (see logprobs()).
    void feed(TokenId token, bool want_logprobs);
    void feed_all(const TokenSeq& prefix, bool want_final_logprobs);

    const std::vector<float>& logprobs() const { return logprobs_; }
    int pos() const { return pos_; }
    int vocab_size() const { return cfg_.vocab_size; }

private:
    const ModelParams* params_;
    ModelConfig cfg_;
    int pos_ = 0;
    // per layer, rows of d floats appended per step
    std::vector<std::vector<float>> k_cache_, v_cache_;
    std::vector<float> logprobs_;
};

}  // namespace ul
