#include "ul/metrics.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "ul/ngram.hpp"

namespace ul {

double label_repetition(const TokenSeq& y, int n) {
    if (n <= 0) throw std::runtime_error("label_repetition: n must be >= 1");
    const auto grams = ngrams(y, n);
    if (grams.empty()) return 0.0;
    std::set<TokenSeq> unique;
    for (const auto& [pos, g] : grams) unique.insert(g);
    return 1.0 - static_cast<double>(unique.size()) / static_cast<double>(grams.size());
}

double context_repetition(const TokenSeq& y, const TokenSeq& x, int n) {
    if (n <= 0) throw std::runtime_error("context_repetition: n must be >= 1");
    const auto grams = ngrams(y, n);
    if (grams.empty()) return 0.0;
    NgramIndex index(x, n);
    int hits = 0;
    for (const auto& [pos, g] : grams) hits += index.contains(g);
    return static_cast<double>(hits) / static_cast<double>(grams.size());
}

namespace {
std::unordered_map<TokenId, int> content_counts(const TokenSeq& seq) {
    std::unordered_map<TokenId, int> counts;
    for (TokenId t : seq) {
        if (!is_reserved(t)) ++counts[t];
    }
    return counts;
}
}  // namespace

double unigram_f1(const TokenSeq& y, const TokenSeq& gold) {
    const auto cy = content_counts(y);
    const auto cg = content_counts(gold);
    int ny = 0, ng = 0;
    for (auto& [t, c] : cy) ny += c;
    for (auto& [t, c] : cg) ng += c;
    if (ny == 0 || ng == 0) return 0.0;
    int overlap = 0;
    for (auto& [t, c] : cy) {
        auto it = cg.find(t);
        if (it != cg.end()) overlap += std::min(c, it->second);
    }
    const double precision = static_cast<double>(overlap) / ny;
    const double recall = static_cast<double>(overlap) / ng;
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

namespace {

// Per-example (total NLL, step count), teacher-forced, batched in chunks so
// weight matrices are streamed once per chunk rather than once per example.
std::vector<std::pair<double, int>> batched_nll(const ModelParams& params, const ModelConfig& cfg,
                                                const std::vector<EncodedExample>& examples,
                                                size_t chunk = 32) {
    std::vector<std::pair<double, int>> out(examples.size());
    for (size_t base = 0; base < examples.size(); base += chunk) {
        const size_t n = std::min(chunk, examples.size() - base);
        Tape tape;
        auto pn = push_params(tape, params, /*needs_grad=*/false);
        std::vector<TokenSeq> seqs;
        seqs.reserve(n);
        for (size_t i = 0; i < n; ++i) seqs.push_back(examples[base + i].ids);
        auto logp = forward_logprobs(tape, pn, cfg, seqs);
        const auto& lv = tape.val(logp);
        const int seq_len = lv.shape[1], vocab = lv.shape[2];
        for (size_t i = 0; i < n; ++i) {
            double nll = 0.0;
            int steps = 0;
            for (const auto& p : target_picks(examples[base + i], static_cast<int>(i))) {
                nll -= static_cast<double>(
                    lv.v[(static_cast<size_t>(p.b) * seq_len + p.pos) * vocab + p.token]);
                ++steps;
            }
            out[base + i] = {nll, steps};
        }
    }
    return out;
}

}  // namespace

double corpus_perplexity(const ModelParams& params, const ModelConfig& cfg,
                         const std::vector<EncodedExample>& examples) {
    if (examples.empty()) throw std::runtime_error("perplexity: empty corpus");
    double nll = 0.0;
    int64_t steps = 0;
    for (const auto& [n, c] : batched_nll(params, cfg, examples)) {
        nll += n;
        steps += c;
    }
    if (steps == 0) throw std::runtime_error("perplexity: no target steps");
    return std::exp(nll / static_cast<double>(steps));
}

double sequence_perplexity(const ModelParams& params, const ModelConfig& cfg, const EncodedExample& ex) {
    const auto [nll, steps] = batched_nll(params, cfg, {ex})[0];
    return std::exp(nll / static_cast<double>(steps));
}

double SelectionAccuracy::accuracy(NliLabel type) const {
    auto it = per_type.find(type);
    if (it == per_type.end() || it->second.first == 0) return 0.0;
    return static_cast<double>(it->second.second) / static_cast<double>(it->second.first);
}

SelectionAccuracy selection_accuracy(const ModelParams& params, const ModelConfig& cfg,
                                     const std::vector<SelectionPair>& pairs) {
    SelectionAccuracy acc;
    std::vector<EncodedExample> pos, neg;
    pos.reserve(pairs.size());
    neg.reserve(pairs.size());
    for (const auto& pair : pairs) {
        pos.push_back(pair.positive);
        neg.push_back(pair.negative);
    }
    const auto pos_nll = batched_nll(params, cfg, pos);
    const auto neg_nll = batched_nll(params, cfg, neg);

    double pos_sum = 0.0, neg_sum = 0.0;
    for (size_t i = 0; i < pairs.size(); ++i) {
        const double ppl_pos = std::exp(pos_nll[i].first / pos_nll[i].second);
        const double ppl_neg = std::exp(neg_nll[i].first / neg_nll[i].second);
        auto& [count, wins] = acc.per_type[pairs[i].positive_type];
        ++count;
        if (ppl_pos < ppl_neg) ++wins;  // ties count as failure
        pos_sum += ppl_pos;
        neg_sum += ppl_neg;
    }
    if (!pairs.empty()) {
        acc.ppl_pos_mean = pos_sum / static_cast<double>(pairs.size());
        acc.ppl_neg_mean = neg_sum / static_cast<double>(pairs.size());
    }
    return acc;
}

const std::vector<std::string>& MetricReport::columns() {
    static const std::vector<std::string> cols = {
        "ppl",     "f1",   "ctx_rep", "lbl_rep",       "freq",          "med",
        "rare",    "rarest", "sel_acc_entail", "sel_acc_triple", "sel_acc_neutral",
        "ppl_pos", "ppl_neg"};
    return cols;
}

std::string MetricReport::csv_header() {
    std::string h = "model,data,decode,n";
    for (const auto& c : columns()) h += "," + c;
    return h;
}

std::string MetricReport::csv_row(const std::string& model, const std::string& data,
                                  const std::string& decode) const {
    std::ostringstream out;
    out << model << ',' << data << ',' << decode << ',' << ngram;
    char buf[64];
    for (const auto& c : columns()) {
        out << ',';
        auto it = values.find(c);
        if (it != values.end()) {
            std::snprintf(buf, sizeof(buf), "%.6g", it->second);
            out << buf;
        }
    }
    return out.str();
}

}  // namespace ul
