#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace ul {

using TokenId = int32_t;
using TokenSeq = std::vector<TokenId>;

// Reserved ids shared across the toolkit; real tokens start at kNumReserved.
constexpr TokenId kPad = 0;
constexpr TokenId kBos = 1;
constexpr TokenId kEos = 2;
constexpr TokenId kSep = 3;
constexpr TokenId kUnk = 4;
constexpr TokenId kNumReserved = 5;

inline bool is_reserved(TokenId id) { return id >= 0 && id < kNumReserved; }

// Token string <-> contiguous id bijection over the non-reserved range.
class Vocabulary {
public:
    Vocabulary();

    // Adds a token if absent; returns its id either way.
    TokenId add(const std::string& token);

    // UNK for unknown tokens.
    TokenId id_of(const std::string& token) const;
    const std::string& token_of(TokenId id) const;
    bool contains(const std::string& token) const;

    int size() const { return static_cast<int>(tokens_.size()); }  // includes reserved ids

    // Lowercase, split on whitespace, split punctuation off as separate
    // tokens; unknown tokens map to UNK. Empty text gives an empty sequence.
    TokenSeq tokenize(const std::string& text) const;
    std::string detokenize(const TokenSeq& ids) const;

    // Splitting only; useful before the vocabulary is built.
    static std::vector<std::string> split_words(const std::string& text);

    // Deterministic construction: tokens sorted lexicographically.
    static Vocabulary build(const std::vector<std::string>& texts);

    // One token per line; line number = id - kNumReserved.
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);
    std::string to_text() const;
    static Vocabulary from_text(const std::string& text);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace ul
