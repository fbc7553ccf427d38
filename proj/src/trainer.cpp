#include "ul/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

namespace ul {

double lr_schedule(int step, double peak, int warmup) {
    if (step < 1) throw std::runtime_error("lr_schedule: step counts from 1");
    if (warmup < 1) throw std::runtime_error("lr_schedule: warmup must be >= 1");
    const double s = static_cast<double>(step), w = static_cast<double>(warmup);
    return peak * std::min(s / w, std::sqrt(w / s));
}

AdamState AdamState::like(ModelParams& params) {
    AdamState st;
    params.for_each([&](const std::string&, Array& a) {
        st.m.push_back(Array::zeros(a.shape));
        st.v.push_back(Array::zeros(a.shape));
    });
    return st;
}

void adam_step(ModelParams& params, const std::vector<Array>& grads, AdamState& state, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    auto arrays = params.flat();
    if (grads.size() != arrays.size() || state.m.size() != arrays.size()) {
        throw std::runtime_error("adam_step: parameter/gradient count mismatch");
    }

    double norm_sq = 0.0;
    for (const auto& g : grads) {
        for (float x : g.v) {
            if (!std::isfinite(x)) throw std::runtime_error("adam_step: non-finite gradient");
            norm_sq += static_cast<double>(x) * x;
        }
    }
    const double norm = std::sqrt(norm_sq);
    const double clip = norm > 1.0 ? 1.0 / norm : 1.0;

    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < arrays.size(); ++i) {
        Array& p = *arrays[i];
        const Array& g = grads[i];
        Array& m = state.m[i];
        Array& v = state.v[i];
        if (!p.same_shape(g)) throw std::runtime_error("adam_step: gradient shape mismatch");
        for (size_t j = 0; j < p.numel(); ++j) {
            const double gj = static_cast<double>(g.v[j]) * clip;
            const double mj = beta1 * m.v[j] + (1.0 - beta1) * gj;
            const double vj = beta2 * v.v[j] + (1.0 - beta2) * gj * gj;
            m.v[j] = static_cast<float>(mj);
            v.v[j] = static_cast<float>(vj);
            const double update = lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps);
            const float next = static_cast<float>(static_cast<double>(p.v[j]) - update);
            if (!std::isfinite(next)) throw std::runtime_error("adam_step: non-finite parameter after update");
            p.v[j] = next;
        }
    }
}

void TrainConfig::validate() const {
    if (steps < 1) throw std::runtime_error("train config: steps must be >= 1");
    if (lr_peak <= 0.0) throw std::runtime_error("train config: lr must be positive");
    if (warmup < 1) throw std::runtime_error("train config: warmup must be >= 1");
    if (batch_size < 1) throw std::runtime_error("train config: batch_size must be >= 1");
    if (ngram < 1) throw std::runtime_error("train config: ngram must be >= 1");
    if (unigram_window < 1) throw std::runtime_error("train config: unigram window must be >= 1");
    if (eval_interval < 1) throw std::runtime_error("train config: eval_interval must be >= 1");
    if (gen_max_len < 1) throw std::runtime_error("train config: gen_max_len must be >= 1");
}

std::string TrainLog::csv_header() {
    return "step,mle_loss,ul_loss,lr,valid_ppl,valid_ctx_rep,valid_lbl_rep";
}

std::string TrainLog::to_csv() const {
    std::string out = csv_header() + "\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", r.step, r.mle_per_token,
                      r.ul_per_example, r.lr, r.valid_ppl, r.valid_ctx_rep, r.valid_lbl_rep);
        out += buf;
    }
    return out;
}

void TrainLog::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("train log: cannot write " + path);
    out << to_csv();
}

Vocabulary build_vocabulary(const std::vector<const Corpus*>& corpora) {
    std::vector<std::string> texts;
    for (const Corpus* c : corpora) {
        auto t = corpus_texts(*c);
        texts.insert(texts.end(), t.begin(), t.end());
    }
    return Vocabulary::build(texts);
}

std::vector<EncodedExample> encode_corpus(const Vocabulary& vocab, const Corpus& corpus, int max_seq_len) {
    std::vector<EncodedExample> out;
    out.reserve(corpus.size());
    for (const auto& ex : corpus) {
        const auto tok = tokenize_example(vocab, ex);
        out.push_back(encode_example(tok.context_sents, tok.history, tok.target, max_seq_len));
    }
    return out;
}

DecodeMetrics decode_metrics(const ModelParams& params, const ModelConfig& cfg, const Vocabulary& vocab,
                             const Corpus& corpus, const DecodeConfig& dc, int ngram, int limit) {
    DecodeMetrics out;
    const int count = std::min<int>(limit, static_cast<int>(corpus.size()));
    if (count == 0) return out;
    double ctx_sum = 0.0, lbl_sum = 0.0, f1_sum = 0.0;
    for (int i = 0; i < count; ++i) {
        const auto tok = tokenize_example(vocab, corpus[static_cast<size_t>(i)]);
        const TokenSeq ctx = tok.context_tokens();
        const TokenSeq prefix = encode_context(tok.context_sents, tok.history, cfg.max_seq_len, dc.max_len);
        const DecodeResult res = decode(params, cfg, prefix, ctx, dc, static_cast<uint64_t>(i));
        ctx_sum += context_repetition(res.tokens, ctx, ngram);
        lbl_sum += label_repetition(res.tokens, ngram);
        f1_sum += unigram_f1(res.tokens, tok.target);
        out.fallback_count += res.fallback_used;
        out.generations.push_back(res.tokens);
    }
    out.ctx_rep = ctx_sum / count;
    out.lbl_rep = lbl_sum / count;
    out.f1 = f1_sum / count;
    return out;
}

namespace {

struct PreparedExample {
    TokenizedExample tokens;
    EncodedExample encoded;  // gold encoding
    TokenSeq context_tokens;
};

std::vector<PreparedExample> prepare(const Vocabulary& vocab, const Corpus& corpus, int max_seq_len) {
    std::vector<PreparedExample> out;
    out.reserve(corpus.size());
    for (const auto& ex : corpus) {
        PreparedExample p;
        p.tokens = tokenize_example(vocab, ex);
        p.encoded = encode_example(p.tokens.context_sents, p.tokens.history, p.tokens.target, max_seq_len);
        p.context_tokens = p.tokens.context_tokens();
        out.push_back(std::move(p));
    }
    return out;
}

// gradients in canonical order after one backward pass
std::vector<Array> collect_grads(Tape& tape, const ParamNodesT<float>& pn) {
    std::vector<Array> grads;
    grads.reserve(pn.ids.size());
    for (auto id : pn.ids) grads.push_back(tape.grad(id));
    return grads;
}

double batch_valid_ppl(const ModelParams& params, const ModelConfig& cfg,
                       const std::vector<EncodedExample>& encoded) {
    return corpus_perplexity(params, cfg, encoded);
}

}  // namespace

TrainResult train(const TrainConfig& config, const Corpus& train_corpus, const Corpus& valid_corpus,
                  const Corpus* train_neg) {
    config.validate();
    if (train_corpus.empty() || valid_corpus.empty()) throw std::runtime_error("train: empty corpus");
    const bool nli_mode = config.objective == Objective::nli;
    if (nli_mode && (train_neg == nullptr || train_neg->empty())) {
        throw std::runtime_error("train: nli objective requires a negative corpus");
    }

    // model, vocabulary and parameters; fine-tuning adopts the checkpoint's
    Vocabulary vocab;
    ModelConfig cfg = config.model;
    ModelParams params;
    Rng init_rng(config.seed);
    if (!config.init_from.empty()) {
        Checkpoint ck = load_checkpoint(config.init_from);
        vocab = std::move(ck.vocab);
        cfg = ck.config;
        params = std::move(ck.params);
    } else {
        std::vector<const Corpus*> sources = {&train_corpus};
        if (nli_mode) sources.push_back(train_neg);
        vocab = build_vocabulary(sources);
        cfg.vocab_size = vocab.size();
        if (cfg.feedforward_dim == 0) cfg.feedforward_dim = 4 * cfg.embed_dim;
        cfg.validate();
        params = ModelParams::init(cfg, init_rng);
    }

    auto train_prepared = prepare(vocab, train_corpus, cfg.max_seq_len);
    std::vector<PreparedExample> neg_prepared;
    if (nli_mode) neg_prepared = prepare(vocab, *train_neg, cfg.max_seq_len);
    const auto valid_encoded = encode_corpus(vocab, valid_corpus, cfg.max_seq_len);

    const bool use_generation =
        objective_uses_generation(config.objective) &&
        (config.weights.alpha_context > 0.0 || config.weights.alpha_label > 0.0 ||
         config.weights.alpha_vocab > 0.0);
    const bool vocab_mode = config.objective == Objective::ul_vocab && config.weights.alpha_vocab > 0.0;

    RunningUnigram stats(cfg.vocab_size, config.unigram_window);
    std::optional<HumanUnigram> human;
    if (vocab_mode) {
        std::vector<TokenSeq> targets;
        for (const auto& p : train_prepared) targets.push_back(p.tokens.target);
        human = HumanUnigram::from_targets(targets, cfg.vocab_size);
    }

    AdamState adam = AdamState::like(params);
    Rng order_rng(config.seed ^ 0x5eedu);
    std::vector<size_t> order(train_prepared.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<size_t> neg_order(neg_prepared.size());
    for (size_t i = 0; i < neg_order.size(); ++i) neg_order[i] = i;

    TrainResult result;
    result.best_valid_ppl = std::numeric_limits<double>::infinity();

    const DecodeConfig eval_dc{DecodeStrategy::greedy, 5, config.ngram, 0.9, config.gen_max_len,
                               config.seed};
    const std::string best_path =
        config.checkpoint_path.empty() ? std::string() : config.checkpoint_path + ".best";

    size_t cursor = order.size();  // forces a shuffle on first use
    size_t neg_cursor = neg_order.size();
    auto next_batch = [&](std::vector<size_t>& ord, size_t& cur, size_t count) {
        std::vector<size_t> batch;
        for (size_t i = 0; i < count; ++i) {
            if (cur >= ord.size()) {
                order_rng.shuffle(ord);
                cur = 0;
            }
            batch.push_back(ord[cur++]);
        }
        return batch;
    };

    Rng dropout_rng(config.seed ^ 0xd20u);
    Rng* drop = cfg.dropout > 0.0f ? &dropout_rng : nullptr;

    auto run_eval = [&](int step, double mle_per_token, double ul_per_example, double lr) {
        const double ppl = batch_valid_ppl(params, cfg, valid_encoded);
        DecodeMetrics dm;
        if (!nli_mode && config.eval_decode_examples > 0) {
            dm = decode_metrics(params, cfg, vocab, valid_corpus, eval_dc, config.ngram,
                                config.eval_decode_examples);
        }
        result.log.rows.push_back(
            TrainLogRow{step, mle_per_token, ul_per_example, lr, ppl, dm.ctx_rep, dm.lbl_rep});
        if (ppl < result.best_valid_ppl) {
            result.best_valid_ppl = ppl;
            result.best_step = step;
            if (!best_path.empty()) save_checkpoint(params, cfg, vocab, best_path);
        }
        std::fprintf(stderr, "step %d | mle/token %.4f | ul/ex %.4f | lr %.2e | valid ppl %.3f\n", step,
                     mle_per_token, ul_per_example, lr, ppl);
    };

    for (int step = 1; step <= config.steps; ++step) {
        const auto batch_idx = next_batch(order, cursor, static_cast<size_t>(config.batch_size));

        Tape tape;
        auto pn = push_params(tape, params, true);

        double mle_value = 0.0, ul_value = 0.0;
        int mle_steps = 0;
        Tape::Id total = 0;

        if (nli_mode) {
            const auto neg_idx = next_batch(neg_order, neg_cursor, static_cast<size_t>(config.batch_size));
            std::vector<TokenizedExample> pos, neg;
            for (size_t i : batch_idx) pos.push_back(train_prepared[i].tokens);
            for (size_t i : neg_idx) neg.push_back(neg_prepared[i].tokens);
            auto nodes = nli_loss_node<float>(tape, pn, cfg, pos, neg, config.weights.alpha_nli);
            total = nodes.total;
            mle_value = nodes.mle_value;
            ul_value = nodes.ul_value;
            mle_steps = nodes.target_steps;
        } else {
            // likelihood over the gold batch
            std::vector<TokenSeq> gold_seqs;
            std::vector<Pick> picks;
            for (size_t row = 0; row < batch_idx.size(); ++row) {
                const auto& p = train_prepared[batch_idx[row]];
                gold_seqs.push_back(p.encoded.ids);
                for (auto pick : target_picks(p.encoded, static_cast<int>(row))) picks.push_back(pick);
            }
            auto gold_logp = forward_logprobs(tape, pn, cfg, gold_seqs, drop);
            auto mle_node = ops::pick_nll(tape, gold_logp, picks);
            mle_value = static_cast<double>(tape.val(mle_node).v[0]);
            mle_steps = static_cast<int>(picks.size());
            total = mle_node;

            if (use_generation) {
                // greedy continuations under the current parameters; gradients
                // flow only through the teacher-forced re-scoring pass
                std::vector<TokenSeq> gen_seqs;
                std::vector<const PreparedExample*> gen_owner;
                TokenSeq batch_tokens;
                for (size_t i : batch_idx) {
                    const auto& p = train_prepared[i];
                    const TokenSeq prefix =
                        encode_context(p.tokens.context_sents, p.tokens.history, cfg.max_seq_len,
                                       config.gen_max_len);
                    DecodeResult res = greedy_decode(params, cfg, prefix, config.gen_max_len);
                    if (res.tokens.empty()) continue;
                    gen_owner.push_back(&p);
                    gen_seqs.push_back(std::move(res.tokens));
                }
                if (!gen_seqs.empty()) {
                    std::vector<EncodedExample> gen_enc;
                    std::vector<TokenSeq> gen_ids;
                    for (size_t g = 0; g < gen_seqs.size(); ++g) {
                        gen_enc.push_back(encode_example(gen_owner[g]->tokens.context_sents,
                                                         gen_owner[g]->tokens.history, gen_seqs[g],
                                                         cfg.max_seq_len));
                        gen_ids.push_back(gen_enc.back().ids);
                    }
                    auto gen_logp = forward_logprobs(tape, pn, cfg, gen_ids, drop);

                    std::vector<UlPick> ul_picks;
                    for (size_t g = 0; g < gen_seqs.size(); ++g) {
                        int first = -1;
                        for (size_t i = 0; i < gen_enc[g].target_mask.size(); ++i) {
                            if (gen_enc[g].target_mask[i]) {
                                first = static_cast<int>(i);
                                break;
                            }
                        }
                        auto add_set = [&](const CandidateSet& cs, double alpha) {
                            for (auto pick : ul_picks_for(cs, static_cast<int>(g), first)) {
                                pick.beta *= alpha;
                                if (pick.beta != 0.0) ul_picks.push_back(pick);
                            }
                        };
                        if (config.objective == Objective::ul_context ||
                            config.objective == Objective::ul_both) {
                            add_set(context_copy_candidates(gen_owner[g]->context_tokens, gen_seqs[g],
                                                            config.ngram),
                                    config.weights.alpha_context);
                        }
                        if (config.objective == Objective::ul_label ||
                            config.objective == Objective::ul_both) {
                            add_set(label_repeat_candidates(gen_seqs[g], config.ngram),
                                    config.weights.alpha_label);
                        }
                        if (vocab_mode) {
                            add_set(identity_candidates(gen_seqs[g], vocab_mismatch_scaler(stats, *human)),
                                    config.weights.alpha_vocab);
                        }
                    }
                    if (vocab_mode) {
                        // beta above used the pre-update snapshot
                        for (const auto& seq : gen_seqs) {
                            batch_tokens.insert(batch_tokens.end(), seq.begin(), seq.end());
                        }
                        stats.update(batch_tokens);
                    }
                    if (!ul_picks.empty()) {
                        auto ul_node = ops::pick_ul(tape, gen_logp, ul_picks);
                        ul_value = static_cast<double>(tape.val(ul_node).v[0]);
                        total = ops::add(tape, total, ul_node);
                    }
                }
            }
        }

        tape.backward(total);
        auto grads = collect_grads(tape, pn);
        const double lr = lr_schedule(step, config.lr_peak, config.warmup);
        adam_step(params, grads, adam, lr);

        if (step % config.eval_interval == 0 || step == config.steps) {
            const double mle_per_token = mle_steps > 0 ? mle_value / mle_steps : 0.0;
            const double ul_per_example = ul_value / static_cast<double>(config.batch_size);
            run_eval(step, mle_per_token, ul_per_example, lr);
        }
    }

    if (!config.checkpoint_path.empty()) save_checkpoint(params, cfg, vocab, config.checkpoint_path);
    if (!config.log_path.empty()) result.log.save(config.log_path);

    result.checkpoint.params = std::move(params);
    result.checkpoint.config = cfg;
    result.checkpoint.vocab = std::move(vocab);
    return result;
}

MetricReport evaluate(const Checkpoint& ck, const Corpus& data, const DecodeConfig& decode_cfg,
                      int ngram, const HumanUnigram* human) {
    if (data.empty()) throw std::runtime_error("evaluate: empty corpus");
    MetricReport report;
    report.ngram = ngram;

    const auto encoded = encode_corpus(ck.vocab, data, ck.config.max_seq_len);
    report.values["ppl"] = corpus_perplexity(ck.params, ck.config, encoded);

    const auto dm = decode_metrics(ck.params, ck.config, ck.vocab, data, decode_cfg, ngram,
                                   static_cast<int>(data.size()));
    report.values["ctx_rep"] = dm.ctx_rep;
    report.values["lbl_rep"] = dm.lbl_rep;
    report.values["f1"] = dm.f1;

    if (human != nullptr) {
        const auto classes = frequency_classes(*human);
        const auto fr = class_fractions(dm.generations, classes);
        report.values["freq"] = fr[0];
        report.values["med"] = fr[1];
        report.values["rare"] = fr[2];
        report.values["rarest"] = fr[3];
    }

    std::vector<SelectionPair> pairs;
    for (const auto& ex : data) {
        if (!ex.negative || !ex.label) continue;
        const auto tok = tokenize_example(ck.vocab, ex);
        SelectionPair pair;
        pair.positive = encode_example(tok.context_sents, tok.history, tok.target, ck.config.max_seq_len);
        pair.negative = encode_example(tok.context_sents, tok.history, *tok.negative, ck.config.max_seq_len);
        pair.positive_type = *ex.label;
        pairs.push_back(std::move(pair));
    }
    if (!pairs.empty()) {
        const auto acc = selection_accuracy(ck.params, ck.config, pairs);
        if (acc.per_type.count(NliLabel::entail)) {
            report.values["sel_acc_entail"] = acc.accuracy(NliLabel::entail);
        }
        if (acc.per_type.count(NliLabel::triple_entail)) {
            report.values["sel_acc_triple"] = acc.accuracy(NliLabel::triple_entail);
        }
        if (acc.per_type.count(NliLabel::neutral)) {
            report.values["sel_acc_neutral"] = acc.accuracy(NliLabel::neutral);
        }
        report.values["ppl_pos"] = acc.ppl_pos_mean;
        report.values["ppl_neg"] = acc.ppl_neg_mean;
    }
    return report;
}

}  // namespace ul
