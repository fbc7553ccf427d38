#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ul/corpus.hpp"
#include "ul/model.hpp"
#include "ul/tape.hpp"
#include "ul/vocab_stats.hpp"

namespace ul {

// --------------------------------------------------------------- candidates

struct Candidate {
    TokenId token;
    double beta;
};

// Per-target-position penalty sets C_t with per-candidate scale beta >= 0.
struct CandidateSet {
    std::vector<std::vector<Candidate>> at;  // one entry per target token

    size_t size() const { return at.size(); }
    bool all_empty() const {
        for (const auto& c : at) {
            if (!c.empty()) return false;
        }
        return true;
    }
    void validate() const;
};

// Position t gets candidate {y_t} with beta 1 iff some n-gram window of the
// target covering t also occurs anywhere in the context.
CandidateSet context_copy_candidates(const TokenSeq& context, const TokenSeq& target, int n);

// Position t gets {y_t} iff t lies inside an n-gram occurrence that has an
// identical, fully earlier (non-overlapping) occurrence in the target.
CandidateSet label_repeat_candidates(const TokenSeq& target, int n);

using BetaScaler = std::function<double(TokenId)>;

inline BetaScaler constant_scaler(double beta = 1.0) {
    return [beta](TokenId) { return beta; };
}

// beta = p_model * ln(p_model / p_star) when the model over-represents the
// token, else 0; p_star floored at 1e-8 before the division.
double beta_vocab_mismatch(double p_model, double p_star);

BetaScaler vocab_mismatch_scaler(const RunningUnigram& model_stats, const HumanUnigram& human);

// Every position carries its own token, scaled by the given scaler.
CandidateSet identity_candidates(const TokenSeq& target, const BetaScaler& beta);

// ------------------------------------------------------------------- losses

// -sum of per-step target log-probabilities; errors on an empty target.
double mle_loss(const std::vector<double>& target_logprobs);
double mle_loss(const std::vector<float>& target_logprobs);

// Double sum over steps and candidates of -beta * log(1 - p), with 1 - p
// clamped at 1e-6. logp_rows[t] is the full log-distribution at the step
// predicting target token t. Rows beyond the candidate list are ignored.
double ul_loss(const std::vector<std::vector<double>>& logp_rows, const CandidateSet& candidates);

enum class Objective { mle, ul_context, ul_label, ul_both, ul_vocab, nli };

Objective objective_from_string(const std::string& s);
std::string to_string(Objective o);
bool objective_uses_generation(Objective o);

// Mixing weights for Eq-style L = L_MLE + alpha * L_UL, one alpha per
// candidate source so context and label penalties can differ.
struct MixWeights {
    double alpha_context = 0.0;
    double alpha_label = 0.0;
    double alpha_vocab = 0.0;
    double alpha_nli = 0.0;

    static MixWeights uniform(double alpha) { return MixWeights{alpha, alpha, alpha, alpha}; }
};

// UlPicks for one encoded example whose target is the sequence the candidate
// set was built over. first_target_pos = index of the first target token in
// ids; candidates align with target tokens (the EOS step is never penalized).
std::vector<UlPick> ul_picks_for(const CandidateSet& cands, int batch_row, int first_target_pos);

// Tape-level losses --------------------------------------------------------

template <class S>
struct LossNodes {
    typename TapeT<S>::Id total;
    double mle_value = 0.0;
    double ul_value = 0.0;
    int target_steps = 0;
};

// Per-example generalized loss: MLE on the gold target plus the mode's UL
// term computed on a model-generated sequence. For ul_vocab the scaler reads
// `stats` before the update and then feeds `generated` into it.
template <class S>
LossNodes<S> ule_loss_node(TapeT<S>& tape, const ParamNodesT<S>& pn, const ModelConfig& cfg,
                           const TokenizedExample& gold, const std::optional<TokenSeq>& generated,
                           Objective mode, const MixWeights& weights, RunningUnigram* stats,
                           const HumanUnigram* human, int n);

// Batch NLI loss: MLE over positive examples plus alpha_nli * identity-UL
// over every y- token of the negative examples. An empty negative batch
// reduces to pure MLE.
template <class S>
LossNodes<S> nli_loss_node(TapeT<S>& tape, const ParamNodesT<S>& pn, const ModelConfig& cfg,
                           const std::vector<TokenizedExample>& pos_batch,
                           const std::vector<TokenizedExample>& neg_batch, double alpha_nli);

// ------------------------------------------------------- implementation

namespace detail {

template <class S>
std::pair<typename TapeT<S>::Id, std::vector<EncodedExample>> forward_batch(
    TapeT<S>& tape, const ParamNodesT<S>& pn, const ModelConfig& cfg,
    const std::vector<std::pair<const TokenizedExample*, const TokenSeq*>>& rows) {
    std::vector<EncodedExample> encoded;
    std::vector<TokenSeq> seqs;
    encoded.reserve(rows.size());
    for (const auto& [ex, target] : rows) {
        encoded.push_back(encode_example(ex->context_sents, ex->history, *target, cfg.max_seq_len));
        seqs.push_back(encoded.back().ids);
    }
    auto logp = forward_logprobs(tape, pn, cfg, seqs);
    return {logp, std::move(encoded)};
}

inline int first_target_pos(const EncodedExample& ex) {
    for (size_t i = 0; i < ex.target_mask.size(); ++i) {
        if (ex.target_mask[i]) return static_cast<int>(i);
    }
    throw std::runtime_error("encoded example has no target positions");
}

}  // namespace detail

template <class S>
LossNodes<S> ule_loss_node(TapeT<S>& tape, const ParamNodesT<S>& pn, const ModelConfig& cfg,
                           const TokenizedExample& gold, const std::optional<TokenSeq>& generated,
                           Objective mode, const MixWeights& weights, RunningUnigram* stats,
                           const HumanUnigram* human, int n) {
    if (mode == Objective::nli) throw std::runtime_error("ule_loss: use nli_loss_node for the nli objective");
    const bool wants_gen = objective_uses_generation(mode);
    if (wants_gen && !generated) throw std::runtime_error("ule_loss: mode requires a generated sequence");
    if (mode == Objective::ul_vocab && (stats == nullptr || human == nullptr)) {
        throw std::runtime_error("ule_loss: vocab mode requires running and human statistics");
    }

    // MLE on the gold target
    auto [gold_logp, gold_enc] =
        detail::forward_batch<S>(tape, pn, cfg, {{&gold, &gold.target}});
    auto picks = target_picks(gold_enc[0], 0);
    auto mle_node = ops::pick_nll(tape, gold_logp, picks);

    LossNodes<S> out;
    out.target_steps = static_cast<int>(picks.size());
    out.mle_value = static_cast<double>(tape.val(mle_node).v[0]);
    out.total = mle_node;

    if (!wants_gen) return out;
    if (generated->empty()) {
        if (mode == Objective::ul_vocab) stats->update(*generated);
        return out;
    }

    // UL on the generated sequence, teacher-forced through a second pass
    auto [gen_logp, gen_enc] =
        detail::forward_batch<S>(tape, pn, cfg, {{&gold, &*generated}});
    const int first = detail::first_target_pos(gen_enc[0]);

    std::vector<UlPick> ul;
    auto add_term = [&](const CandidateSet& cands, double alpha) {
        for (auto& p : ul_picks_for(cands, 0, first)) {
            p.beta *= alpha;
            if (p.beta != 0.0) ul.push_back(p);
        }
    };

    const TokenSeq ctx = gold.context_tokens();
    if (mode == Objective::ul_context || mode == Objective::ul_both) {
        add_term(context_copy_candidates(ctx, *generated, n), weights.alpha_context);
    }
    if (mode == Objective::ul_label || mode == Objective::ul_both) {
        add_term(label_repeat_candidates(*generated, n), weights.alpha_label);
    }
    if (mode == Objective::ul_vocab) {
        add_term(identity_candidates(*generated, vocab_mismatch_scaler(*stats, *human)),
                 weights.alpha_vocab);
        stats->update(*generated);  // beta above came from the pre-update snapshot
    }

    if (!ul.empty()) {
        auto ul_node = ops::pick_ul(tape, gen_logp, ul);
        out.ul_value = static_cast<double>(tape.val(ul_node).v[0]);
        out.total = ops::add(tape, mle_node, ul_node);
    }
    return out;
}

template <class S>
LossNodes<S> nli_loss_node(TapeT<S>& tape, const ParamNodesT<S>& pn, const ModelConfig& cfg,
                           const std::vector<TokenizedExample>& pos_batch,
                           const std::vector<TokenizedExample>& neg_batch, double alpha_nli) {
    if (pos_batch.empty()) throw std::runtime_error("nli_loss: empty positive batch");

    std::vector<std::pair<const TokenizedExample*, const TokenSeq*>> pos_rows;
    for (const auto& ex : pos_batch) pos_rows.push_back({&ex, &ex.target});
    auto [pos_logp, pos_enc] = detail::forward_batch<S>(tape, pn, cfg, pos_rows);
    std::vector<Pick> picks;
    for (size_t b = 0; b < pos_enc.size(); ++b) {
        for (auto& p : target_picks(pos_enc[b], static_cast<int>(b))) picks.push_back(p);
    }
    auto mle_node = ops::pick_nll(tape, pos_logp, picks);

    LossNodes<S> out;
    out.target_steps = static_cast<int>(picks.size());
    out.mle_value = static_cast<double>(tape.val(mle_node).v[0]);
    out.total = mle_node;

    if (neg_batch.empty() || alpha_nli == 0.0) return out;

    std::vector<std::pair<const TokenizedExample*, const TokenSeq*>> neg_rows;
    for (const auto& ex : neg_batch) neg_rows.push_back({&ex, &ex.target});
    auto [neg_logp, neg_enc] = detail::forward_batch<S>(tape, pn, cfg, neg_rows);
    std::vector<UlPick> ul;
    for (size_t b = 0; b < neg_enc.size(); ++b) {
        const auto cands = identity_candidates(neg_batch[b].target, constant_scaler(1.0));
        for (auto& p : ul_picks_for(cands, static_cast<int>(b), detail::first_target_pos(neg_enc[b]))) {
            p.beta *= alpha_nli;
            ul.push_back(p);
        }
    }
    if (!ul.empty()) {
        auto ul_node = ops::pick_ul(tape, neg_logp, ul);
        out.ul_value = static_cast<double>(tape.val(ul_node).v[0]);
        out.total = ops::add(tape, mle_node, ul_node);
    }
    return out;
}

}  // namespace ul
