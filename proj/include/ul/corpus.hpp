#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ul/vocab.hpp"

namespace ul {

enum class NliLabel { entail, triple_entail, neutral, contradict };

std::string to_string(NliLabel l);
NliLabel nli_label_from_string(const std::string& s);

// One context/response example. label and negative are present only in NLI
// corpora; negative pairs a contradicting response with the same context.
struct DialogueExample {
    std::vector<std::string> context;  // context sentences s_1..s_k
    std::vector<std::string> history;  // utterances u_1..u_t
    std::string target;
    std::optional<NliLabel> label;
    std::optional<std::string> negative;

    bool operator==(const DialogueExample&) const = default;
};

using Corpus = std::vector<DialogueExample>;

// Line-delimited records, one JSON object per line. Unknown fields and
// malformed lines are rejected with the offending line number.
Corpus read_corpus(const std::string& path);
void write_corpus(const std::string& path, const Corpus& corpus);

std::string corpus_line(const DialogueExample& ex);
DialogueExample parse_corpus_line(const std::string& line, size_t line_no);

// Token-level view used by training and metrics.
struct TokenizedExample {
    std::vector<TokenSeq> context_sents;
    std::vector<TokenSeq> history;
    TokenSeq target;
    std::optional<NliLabel> label;
    std::optional<TokenSeq> negative;

    TokenSeq context_tokens() const {
        TokenSeq out;
        for (const auto& s : context_sents) out.insert(out.end(), s.begin(), s.end());
        for (const auto& u : history) out.insert(out.end(), u.begin(), u.end());
        return out;
    }
};

TokenizedExample tokenize_example(const Vocabulary& vocab, const DialogueExample& ex);

// All surface text of a corpus (for vocabulary construction).
std::vector<std::string> corpus_texts(const Corpus& corpus);

}  // namespace ul
