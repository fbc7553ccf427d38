#include "ul/model.hpp"

namespace ul {

EncodedExample encode_example(const std::vector<TokenSeq>& context_sents,
                              const std::vector<TokenSeq>& history, const TokenSeq& target,
                              int max_seq_len) {
    if (target.empty()) throw std::runtime_error("encode_example: empty target");

    TokenSeq context;
    for (const auto& s : context_sents) context.insert(context.end(), s.begin(), s.end());
    for (const auto& u : history) context.insert(context.end(), u.begin(), u.end());

    // BOS + context + SEP + target + EOS
    const int frame = 3;
    const int budget = max_seq_len - frame - static_cast<int>(target.size());
    if (budget < 0) throw std::runtime_error("encode_example: target exceeds max_seq_len");
    if (static_cast<int>(context.size()) > budget) {
        context.erase(context.begin(), context.end() - budget);
    }

    EncodedExample ex;
    ex.ids.reserve(context.size() + target.size() + frame);
    ex.ids.push_back(kBos);
    ex.ids.insert(ex.ids.end(), context.begin(), context.end());
    ex.ids.push_back(kSep);
    ex.ids.insert(ex.ids.end(), target.begin(), target.end());
    ex.ids.push_back(kEos);

    ex.target_mask.assign(ex.ids.size(), false);
    for (size_t i = context.size() + 2; i < ex.ids.size(); ++i) ex.target_mask[i] = true;
    return ex;
}

TokenSeq encode_context(const std::vector<TokenSeq>& context_sents, const std::vector<TokenSeq>& history,
                        int max_seq_len, int reserve_for_target) {
    TokenSeq context;
    for (const auto& s : context_sents) context.insert(context.end(), s.begin(), s.end());
    for (const auto& u : history) context.insert(context.end(), u.begin(), u.end());

    const int budget = max_seq_len - 2 - std::max(reserve_for_target, 1) - 1;  // BOS, SEP, target, EOS
    if (budget < 0) throw std::runtime_error("encode_context: no room for generation");
    if (static_cast<int>(context.size()) > budget) {
        context.erase(context.begin(), context.end() - budget);
    }

    TokenSeq ids;
    ids.reserve(context.size() + 2);
    ids.push_back(kBos);
    ids.insert(ids.end(), context.begin(), context.end());
    ids.push_back(kSep);
    return ids;
}

std::vector<Pick> target_picks(const EncodedExample& ex, int batch_row) {
    std::vector<Pick> picks;
    for (size_t i = 1; i < ex.ids.size(); ++i) {
        if (ex.target_mask[i]) {
            picks.push_back(Pick{batch_row, static_cast<int>(i) - 1, ex.ids[i]});
        }
    }
    return picks;
}

std::vector<float> target_logprobs(const ModelParams& params, const ModelConfig& cfg,
                                   const EncodedExample& ex) {
    Tape tape;
    auto pn = push_params(tape, params, /*needs_grad=*/false);
    auto logp = forward_logprobs(tape, pn, cfg, {ex.ids});
    const auto& lv = tape.val(logp);
    const int vocab = lv.shape[2];

    std::vector<float> out;
    for (const auto& p : target_picks(ex, 0)) {
        out.push_back(lv.v[(static_cast<size_t>(p.pos)) * vocab + p.token]);
    }
    return out;
}

}  // namespace ul
