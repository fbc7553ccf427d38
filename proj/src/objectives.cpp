#include "ul/objectives.hpp"

#include <cmath>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "ul/ngram.hpp"

namespace ul {

void CandidateSet::validate() const {
    for (const auto& cands : at) {
        std::set<TokenId> seen;
        for (const auto& c : cands) {
            if (c.beta < 0.0 || !std::isfinite(c.beta)) {
                throw std::runtime_error("candidate set: beta must be finite and non-negative");
            }
            if (!seen.insert(c.token).second) {
                throw std::runtime_error("candidate set: duplicate candidate at one position");
            }
        }
    }
}

CandidateSet context_copy_candidates(const TokenSeq& context, const TokenSeq& target, int n) {
    if (n < 1) throw std::runtime_error("context_copy_candidates: n must be >= 1");
    CandidateSet cs;
    cs.at.resize(target.size());
    if (target.size() < static_cast<size_t>(n) || context.size() < static_cast<size_t>(n)) return cs;

    NgramIndex index(context, n);
    std::vector<bool> flagged(target.size(), false);
    const int windows = static_cast<int>(target.size()) - n + 1;
    TokenSeq gram(static_cast<size_t>(n));
    for (int i = 0; i < windows; ++i) {
        std::copy(target.begin() + i, target.begin() + i + n, gram.begin());
        if (index.contains(gram)) {
            for (int j = i; j < i + n; ++j) flagged[static_cast<size_t>(j)] = true;
        }
    }
    for (size_t t = 0; t < target.size(); ++t) {
        if (flagged[t]) cs.at[t].push_back(Candidate{target[t], 1.0});
    }
    return cs;
}

CandidateSet label_repeat_candidates(const TokenSeq& target, int n) {
    if (n < 1) throw std::runtime_error("label_repeat_candidates: n must be >= 1");
    CandidateSet cs;
    cs.at.resize(target.size());
    if (target.size() < static_cast<size_t>(n)) return cs;

    // first occurrence of each n-gram; occurrence at i repeats iff the first
    // one ends strictly before i starts (fully earlier, non-overlapping)
    struct SeqHash {
        size_t operator()(const TokenSeq& s) const {
            uint64_t h = 1469598103934665603ull;
            for (TokenId t : s) {
                h ^= static_cast<uint64_t>(static_cast<uint32_t>(t));
                h *= 1099511628211ull;
            }
            return static_cast<size_t>(h);
        }
    };
    std::unordered_map<TokenSeq, int, SeqHash> first_pos;
    std::vector<bool> flagged(target.size(), false);
    const int windows = static_cast<int>(target.size()) - n + 1;
    TokenSeq gram(static_cast<size_t>(n));
    for (int i = 0; i < windows; ++i) {
        std::copy(target.begin() + i, target.begin() + i + n, gram.begin());
        auto it = first_pos.find(gram);
        if (it == first_pos.end()) {
            first_pos.emplace(gram, i);
        } else if (it->second + n <= i) {
            for (int j = i; j < i + n; ++j) flagged[static_cast<size_t>(j)] = true;
        }
    }
    for (size_t t = 0; t < target.size(); ++t) {
        if (flagged[t]) cs.at[t].push_back(Candidate{target[t], 1.0});
    }
    return cs;
}

double beta_vocab_mismatch(double p_model, double p_star) {
    if (p_model <= p_star) return 0.0;  // only over-represented tokens are penalized
    const double floored = std::max(p_star, 1e-8);
    return p_model * std::log(p_model / floored);
}

BetaScaler vocab_mismatch_scaler(const RunningUnigram& model_stats, const HumanUnigram& human) {
    return [&model_stats, &human](TokenId t) {
        return beta_vocab_mismatch(model_stats.p_model(t), human.p_star(t));
    };
}

CandidateSet identity_candidates(const TokenSeq& target, const BetaScaler& beta) {
    CandidateSet cs;
    cs.at.resize(target.size());
    for (size_t t = 0; t < target.size(); ++t) {
        cs.at[t].push_back(Candidate{target[t], beta(target[t])});
    }
    cs.validate();
    return cs;
}

double mle_loss(const std::vector<double>& target_logprobs) {
    if (target_logprobs.empty()) throw std::runtime_error("mle_loss: empty target");
    double acc = 0.0;
    for (double lp : target_logprobs) acc -= lp;
    return acc;
}

double mle_loss(const std::vector<float>& target_logprobs) {
    return mle_loss(std::vector<double>(target_logprobs.begin(), target_logprobs.end()));
}

double ul_loss(const std::vector<std::vector<double>>& logp_rows, const CandidateSet& candidates) {
    candidates.validate();
    if (logp_rows.size() < candidates.size()) {
        throw std::runtime_error("ul_loss: fewer log-prob rows than candidate positions");
    }
    double acc = 0.0;
    for (size_t t = 0; t < candidates.size(); ++t) {
        for (const auto& c : candidates.at[t]) {
            const double lp = logp_rows[t].at(static_cast<size_t>(c.token));
            const double one_minus = std::max(-std::expm1(lp), kUlProbClamp);
            acc += -c.beta * std::log(one_minus);
        }
    }
    return acc;
}

std::vector<UlPick> ul_picks_for(const CandidateSet& cands, int batch_row, int first_target_pos) {
    cands.validate();
    std::vector<UlPick> picks;
    for (size_t t = 0; t < cands.size(); ++t) {
        // token at ids position first_target_pos + t is predicted one earlier
        const int pos = first_target_pos + static_cast<int>(t) - 1;
        for (const auto& c : cands.at[t]) {
            picks.push_back(UlPick{batch_row, pos, c.token, c.beta});
        }
    }
    return picks;
}

Objective objective_from_string(const std::string& s) {
    if (s == "mle") return Objective::mle;
    if (s == "ul-context") return Objective::ul_context;
    if (s == "ul-label") return Objective::ul_label;
    if (s == "ul-both") return Objective::ul_both;
    if (s == "ul-vocab") return Objective::ul_vocab;
    if (s == "nli") return Objective::nli;
    throw std::runtime_error("unknown objective: " + s);
}

std::string to_string(Objective o) {
    switch (o) {
        case Objective::mle: return "mle";
        case Objective::ul_context: return "ul-context";
        case Objective::ul_label: return "ul-label";
        case Objective::ul_both: return "ul-both";
        case Objective::ul_vocab: return "ul-vocab";
        case Objective::nli: return "nli";
    }
    return "?";
}

bool objective_uses_generation(Objective o) {
    return o == Objective::ul_context || o == Objective::ul_label || o == Objective::ul_both ||
           o == Objective::ul_vocab;
}

}  // namespace ul
