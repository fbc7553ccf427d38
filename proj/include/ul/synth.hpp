#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ul/corpus.hpp"
#include "ul/rng.hpp"

namespace ul {

// (subject, relation, value) over small closed enumerations. Sentiment
// relations carry their item in the relation id and use a polarity value;
// attribute relations index into a per-relation value list. Contradictions
// share (subject, relation) and conflict on the value.
struct FactTriple {
    int subject;   // 0 = first person, 1 = their sister
    int relation;  // see synth::relation_count()
    int value;

    bool operator==(const FactTriple&) const = default;
};

struct GenConfig {
    uint64_t seed = 7;
    double zipf_exponent = 1.1;  // value-rank weighting inside each list
    int train = 1000;
    int valid = 200;
    int test = 200;
    // target fraction of responses quoting a context n-gram
    double copy_rate = 0.15;
    // target fraction of responses carrying an intra-target repeat
    double repeat_rate = 0.15;

    void validate() const;
};

struct DialogueCorpora {
    Corpus train, valid, test;
};

// Deterministic persona-and-response corpus: echo questions whose answers
// quote the asked-about value, persona restatements, and conversational
// filler with intensifier chains. Splits are disjoint at the example level.
DialogueCorpora gen_dialogue_corpus(const GenConfig& config);

struct NliCorpora {
    Corpus train_pos;    // D+: entailing / triple-entailing / neutral rows
    Corpus train_neg;    // D-: contradicting rows
    Corpus valid_pairs;  // y+ with paired contradicting negative, shared x
    Corpus test_pairs;
};

// Two-utterance and full-dialogue inference examples over fact triples.
// Label counts per split follow fixed quotas of the split size.
NliCorpora gen_nli_corpus(const GenConfig& config);

// Lexicon introspection used by tests.
namespace synth {
int relation_count();
int value_count(int relation);
bool is_sentiment(int relation);
// Renders a fact as a surface sentence; family 0 = premise/entail surface,
// family 1 = triple-entail surface. variant picks among templates.
std::string render_fact(const FactTriple& t, int family, int variant);
FactTriple contradict(const FactTriple& t, Rng& rng);
}  // namespace synth

}  // namespace ul
