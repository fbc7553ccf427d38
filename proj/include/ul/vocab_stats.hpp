#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <vector>

#include "ul/vocab.hpp"

namespace ul {

// Windowed empirical unigram distribution over the model's generated tokens
// for the preceding k batches. Reserved ids never enter the counts. Falls
// back to uniform 1/V before the first update.
class RunningUnigram {
public:
    RunningUnigram(int vocab_size, int window_batches);

    // One call per generated batch; the oldest batch rolls out of the window.
    void update(const TokenSeq& generated_batch_tokens);

    double p_model(TokenId token) const;

    int64_t total_tokens() const { return total_; }
    int window_capacity() const { return capacity_; }
    int window_size() const { return static_cast<int>(window_.size()); }
    const std::vector<int64_t>& aggregate() const { return aggregate_; }
    const std::deque<std::vector<int64_t>>& window() const { return window_; }
    int vocab_size() const { return vocab_size_; }

private:
    int vocab_size_;
    int capacity_;
    std::deque<std::vector<int64_t>> window_;
    std::vector<int64_t> aggregate_;
    int64_t total_ = 0;
};

// Fixed unigram distribution of gold target tokens across a corpus.
class HumanUnigram {
public:
    static HumanUnigram from_targets(const std::vector<TokenSeq>& targets, int vocab_size);

    double p_star(TokenId token) const;
    int64_t count(TokenId token) const { return counts_[static_cast<size_t>(token)]; }
    int64_t total() const { return total_; }
    int vocab_size() const { return static_cast<int>(counts_.size()); }

private:
    std::vector<int64_t> counts_;
    int64_t total_ = 0;
};

enum class FreqClass : uint8_t { frequent = 0, medium = 1, rare = 2, rarest = 3 };

// Partition of the vocabulary by descending human mass into cumulative
// buckets 40/30/20/10; the token crossing a boundary joins the upper class.
struct FrequencyClasses {
    std::vector<FreqClass> of;  // indexed by token id; reserved ids map to rarest

    FreqClass at(TokenId token) const { return of[static_cast<size_t>(token)]; }
};

FrequencyClasses frequency_classes(const HumanUnigram& human);

// Fraction of generated tokens landing in each class, reserved ids filtered.
// Errors when no tokens remain.
std::array<double, 4> class_fractions(const std::vector<TokenSeq>& generations,
                                      const FrequencyClasses& classes);

}  // namespace ul
