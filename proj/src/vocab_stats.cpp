#include "ul/vocab_stats.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ul {

RunningUnigram::RunningUnigram(int vocab_size, int window_batches)
    : vocab_size_(vocab_size), capacity_(window_batches) {
    if (vocab_size < kNumReserved) throw std::runtime_error("running unigram: vocab too small");
    if (window_batches < 1) throw std::runtime_error("running unigram: window must be >= 1");
    aggregate_.assign(static_cast<size_t>(vocab_size), 0);
}

void RunningUnigram::update(const TokenSeq& generated_batch_tokens) {
    std::vector<int64_t> counts(static_cast<size_t>(vocab_size_), 0);
    for (TokenId t : generated_batch_tokens) {
        if (t < 0 || t >= vocab_size_) throw std::runtime_error("running unigram: token id out of range");
        if (is_reserved(t)) continue;
        ++counts[static_cast<size_t>(t)];
    }
    if (static_cast<int>(window_.size()) == capacity_) {
        const auto& oldest = window_.front();
        for (size_t i = 0; i < oldest.size(); ++i) {
            aggregate_[i] -= oldest[i];
            total_ -= oldest[i];
        }
        window_.pop_front();
    }
    for (size_t i = 0; i < counts.size(); ++i) {
        aggregate_[i] += counts[i];
        total_ += counts[i];
    }
    window_.push_back(std::move(counts));
}

double RunningUnigram::p_model(TokenId token) const {
    if (token < 0 || token >= vocab_size_) throw std::runtime_error("running unigram: token id out of range");
    if (total_ == 0) return 1.0 / static_cast<double>(vocab_size_);  // cold start: uniform
    return static_cast<double>(aggregate_[static_cast<size_t>(token)]) / static_cast<double>(total_);
}

HumanUnigram HumanUnigram::from_targets(const std::vector<TokenSeq>& targets, int vocab_size) {
    if (targets.empty()) throw std::runtime_error("human unigram: empty corpus");
    HumanUnigram h;
    h.counts_.assign(static_cast<size_t>(vocab_size), 0);
    for (const auto& seq : targets) {
        for (TokenId t : seq) {
            if (t < 0 || t >= vocab_size) throw std::runtime_error("human unigram: token id out of range");
            if (is_reserved(t)) continue;
            ++h.counts_[static_cast<size_t>(t)];
            ++h.total_;
        }
    }
    if (h.total_ == 0) throw std::runtime_error("human unigram: corpus has no countable tokens");
    return h;
}

double HumanUnigram::p_star(TokenId token) const {
    if (token < 0 || token >= vocab_size()) throw std::runtime_error("human unigram: token id out of range");
    return static_cast<double>(counts_[static_cast<size_t>(token)]) / static_cast<double>(total_);
}

FrequencyClasses frequency_classes(const HumanUnigram& human) {
    const int v = human.vocab_size();
    std::vector<TokenId> order;
    order.reserve(static_cast<size_t>(v));
    for (TokenId t = kNumReserved; t < v; ++t) order.push_back(t);
    std::sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
        const int64_t ca = human.count(a), cb = human.count(b);
        if (ca != cb) return ca > cb;
        return a < b;  // ties by ascending id
    });

    FrequencyClasses fc;
    fc.of.assign(static_cast<size_t>(v), FreqClass::rarest);
    // integer thresholds: cumulative/total >= 4/10, 7/10, 9/10
    const int64_t total = human.total();
    const int64_t num[3] = {4, 7, 9};
    int cls = 0;
    int64_t cum = 0;
    for (TokenId t : order) {
        fc.of[static_cast<size_t>(t)] = static_cast<FreqClass>(cls);
        cum += human.count(t);
        while (cls < 3 && cum * 10 >= num[cls] * total) ++cls;
    }
    return fc;
}

std::array<double, 4> class_fractions(const std::vector<TokenSeq>& generations,
                                      const FrequencyClasses& classes) {
    std::array<int64_t, 4> counts = {0, 0, 0, 0};
    int64_t total = 0;
    for (const auto& seq : generations) {
        for (TokenId t : seq) {
            if (is_reserved(t)) continue;
            if (t < 0 || t >= static_cast<TokenId>(classes.of.size())) {
                throw std::runtime_error("class_fractions: token id out of range");
            }
            ++counts[static_cast<size_t>(classes.at(t))];
            ++total;
        }
    }
    if (total == 0) throw std::runtime_error("class_fractions: no tokens after filtering");
    std::array<double, 4> out;
    for (size_t i = 0; i < 4; ++i) out[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    return out;
}

}  // namespace ul
