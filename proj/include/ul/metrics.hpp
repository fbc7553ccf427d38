#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ul/corpus.hpp"
#include "ul/model.hpp"

namespace ul {

// Portion of duplicate n-grams in y: 1 - unique/total. Sequences shorter
// than n have no duplicates (0).
double label_repetition(const TokenSeq& y, int n);

// Fraction of y's n-gram occurrences whose tuple appears anywhere in x.
double context_repetition(const TokenSeq& y, const TokenSeq& x, int n);

// Multiset unigram F1 over non-reserved tokens; 0 when either side is empty.
double unigram_f1(const TokenSeq& y, const TokenSeq& gold);

// exp(total NLL / total target steps) over the corpus, teacher-forced,
// natural log; EOS counts as a step. Errors on an empty corpus.
double corpus_perplexity(const ModelParams& params, const ModelConfig& cfg,
                         const std::vector<EncodedExample>& examples);

// Length-normalized perplexity of one candidate response given its context.
double sequence_perplexity(const ModelParams& params, const ModelConfig& cfg, const EncodedExample& ex);

// Selection pair: both candidates share the context; success when the
// positive gets strictly lower length-normalized perplexity (ties fail).
struct SelectionPair {
    EncodedExample positive;
    EncodedExample negative;
    NliLabel positive_type = NliLabel::entail;
};

struct SelectionAccuracy {
    // per positive type: {count, successes}
    std::map<NliLabel, std::pair<int, int>> per_type;
    double ppl_pos_mean = 0.0;  // mean perplexity over positive candidates
    double ppl_neg_mean = 0.0;

    double accuracy(NliLabel type) const;
};

SelectionAccuracy selection_accuracy(const ModelParams& params, const ModelConfig& cfg,
                                     const std::vector<SelectionPair>& pairs);

// Named scalar metrics emitted as one CSV row. Keys absent from a report
// leave the column empty.
struct MetricReport {
    std::map<std::string, double> values;
    int ngram = 3;

    static const std::vector<std::string>& columns();
    static std::string csv_header();
    std::string csv_row(const std::string& model, const std::string& data,
                        const std::string& decode) const;
};

}  // namespace ul
