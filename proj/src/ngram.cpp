#include "ul/ngram.hpp"

#include <stdexcept>

namespace ul {

std::vector<std::pair<int, TokenSeq>> ngrams(const TokenSeq& seq, int n) {
    if (n <= 0) throw std::runtime_error("ngrams: n must be >= 1");
    std::vector<std::pair<int, TokenSeq>> out;
    if (seq.size() < static_cast<size_t>(n)) return out;
    const int count = static_cast<int>(seq.size()) - n + 1;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        out.emplace_back(i, TokenSeq(seq.begin() + i, seq.begin() + i + n));
    }
    return out;
}

const std::vector<int> NgramIndex::kEmpty = {};

NgramIndex::NgramIndex(const TokenSeq& seq, int n) : n_(n) {
    for (auto& [pos, gram] : ngrams(seq, n)) {
        map_[gram].push_back(pos);  // scan order keeps positions increasing
    }
}

const std::vector<int>& NgramIndex::lookup(const TokenSeq& gram) const {
    auto it = map_.find(gram);
    return it == map_.end() ? kEmpty : it->second;
}

bool NgramIndex::contains(const TokenSeq& gram) const { return map_.count(gram) > 0; }

}  // namespace ul
