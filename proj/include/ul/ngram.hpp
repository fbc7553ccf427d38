#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "ul/vocab.hpp"

namespace ul {

// All (start, n-gram) windows of seq, in position order.
// max(0, len - n + 1) entries; n <= 0 is an error.
std::vector<std::pair<int, TokenSeq>> ngrams(const TokenSeq& seq, int n);

// Position index over the n-grams of one sequence.
class NgramIndex {
public:
    NgramIndex(const TokenSeq& seq, int n);

    int n() const { return n_; }

    // Start positions of the given n-gram, strictly increasing; empty if absent.
    const std::vector<int>& lookup(const TokenSeq& gram) const;
    bool contains(const TokenSeq& gram) const;

private:
    struct SeqHash {
        size_t operator()(const TokenSeq& s) const {
            // FNV-1a over the id bytes
            uint64_t h = 1469598103934665603ull;
            for (TokenId t : s) {
                for (int b = 0; b < 4; ++b) {
                    h ^= static_cast<uint64_t>((static_cast<uint32_t>(t) >> (8 * b)) & 0xff);
                    h *= 1099511628211ull;
                }
            }
            return static_cast<size_t>(h);
        }
    };

    int n_;
    std::unordered_map<TokenSeq, std::vector<int>, SeqHash> map_;
    static const std::vector<int> kEmpty;
};

}  // namespace ul
