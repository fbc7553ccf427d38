#pragma once

#include <string>
#include <vector>

#include "ul/infer.hpp"
#include "ul/model.hpp"
#include "ul/rng.hpp"

namespace ul {

enum class DecodeStrategy { greedy, beam, beam_block, nucleus };

DecodeStrategy decode_strategy_from_string(const std::string& s);
std::string to_string(DecodeStrategy s);

struct DecodeConfig {
    DecodeStrategy strategy = DecodeStrategy::greedy;
    int beam_size = 5;
    int block_n = 3;
    double nucleus_p = 0.9;
    int max_len = 32;
    uint64_t seed = 0;

    void validate() const;
};

struct DecodeResult {
    TokenSeq tokens;     // EOS stripped
    double score = 0.0;  // summed log-probabilities, EOS included when emitted
    bool fallback_used = false;  // beam_block dead-end fallback fired
};

// All strategies take the already-encoded prefix (BOS ++ context ++ SEP).
// `block_context` is the raw context token sequence used for n-gram blocking.

DecodeResult greedy_decode(const ModelParams& params, const ModelConfig& cfg, const TokenSeq& prefix,
                           int max_len);

DecodeResult beam_decode(const ModelParams& params, const ModelConfig& cfg, const TokenSeq& prefix,
                         int beam_size, int max_len);

DecodeResult beam_block_decode(const ModelParams& params, const ModelConfig& cfg, const TokenSeq& prefix,
                               int beam_size, int block_n, const TokenSeq& block_context, int max_len);

DecodeResult nucleus_decode(const ModelParams& params, const ModelConfig& cfg, const TokenSeq& prefix,
                            double p, int max_len, Rng& rng);

// One nucleus draw from a full distribution: smallest probability-mass prefix
// reaching p (ties broken by ascending token id), renormalized and sampled.
int nucleus_step(const std::vector<double>& probs, double p, Rng& rng);

// Dispatch per config; rng stream is derived from (seed, example_index).
DecodeResult decode(const ModelParams& params, const ModelConfig& cfg, const TokenSeq& prefix,
                    const TokenSeq& block_context, const DecodeConfig& dc, uint64_t example_index = 0);

}  // namespace ul
