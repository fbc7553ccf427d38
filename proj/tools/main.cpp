#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ul/decoding.hpp"
#include "ul/metrics.hpp"
#include "ul/objectives.hpp"
#include "ul/selftest.hpp"
#include "ul/synth.hpp"
#include "ul/trainer.hpp"

namespace {

using namespace ul;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// flag-value validation failures are usage errors (exit 1), not data errors
template <class F>
void validate_usage(F&& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

void echo_config(const CLI::App* sub) {
    std::cerr << "# resolved config (" << sub->get_name() << ")\n";
    std::cerr << const_cast<CLI::App*>(sub)->config_to_str(true, false);
}

struct DecodeFlags {
    std::string strategy = "greedy";
    int beam_size = 5;
    int block_n = 3;
    double p = 0.9;
    int max_len = 32;
    uint64_t seed = 0;

    void attach(CLI::App* sub) {
        sub->add_option("--decode", strategy, "greedy|beam|beam-block|nucleus")
            ->check(CLI::IsMember({"greedy", "beam", "beam-block", "nucleus"}));
        sub->add_option("--beam-size", beam_size, "beam width");
        sub->add_option("--block-n", block_n, "context n-gram size to block");
        sub->add_option("--p", p, "nucleus mass threshold");
        sub->add_option("--max-len", max_len, "generation length cap");
        sub->add_option("--seed", seed, "sampling seed")->envname("UL_SEED");
    }

    DecodeConfig to_config() const {
        DecodeConfig dc;
        dc.strategy = decode_strategy_from_string(strategy);
        dc.beam_size = beam_size;
        dc.block_n = block_n;
        dc.nucleus_p = p;
        dc.max_len = max_len;
        dc.seed = seed;
        dc.validate();
        return dc;
    }
};

void print_pretty(const MetricReport& report) {
    std::printf("%-16s %10s\n", "metric", "value");
    std::printf("%-16s %10d\n", "n", report.ngram);
    for (const auto& col : MetricReport::columns()) {
        auto it = report.values.find(col);
        if (it == report.values.end()) continue;
        std::printf("%-16s %10.4f\n", col.c_str(), it->second);
    }
}

int run(int argc, char** argv) {
    CLI::App app{"unlikelihood-trained dialogue generation toolkit"};
    app.require_subcommand(1);

    // ---------------------------------------------------------------- gen-data
    auto* gen = app.add_subcommand("gen-data", "write synthetic corpora");
    gen->set_config("--config");
    std::string task = "dialogue";
    GenConfig gc;
    std::string out_dir = ".";
    gen->add_option("--task", task, "dialogue|nli")->check(CLI::IsMember({"dialogue", "nli"}));
    gen->add_option("--seed", gc.seed, "generator seed")->envname("UL_SEED");
    gen->add_option("--train", gc.train, "train split size");
    gen->add_option("--valid", gc.valid, "valid split size");
    gen->add_option("--test", gc.test, "test split size");
    gen->add_option("--copy-rate", gc.copy_rate, "target context-copy fraction");
    gen->add_option("--repeat-rate", gc.repeat_rate, "target intra-target repeat fraction");
    gen->add_option("--zipf", gc.zipf_exponent, "value-rank Zipf exponent");
    gen->add_option("--out", out_dir, "output directory");

    // ------------------------------------------------------------------- train
    auto* tr = app.add_subcommand("train", "optimize a model");
    tr->set_config("--config");
    TrainConfig tc;
    std::string train_path, valid_path, neg_path, objective = "mle";
    double alpha = 0.0;
    double alpha_context = -1.0, alpha_label = -1.0, alpha_vocab = -1.0, alpha_nli = -1.0;
    tr->add_option("--train", train_path, "training corpus (D+ for nli)")->required();
    tr->add_option("--valid", valid_path, "validation corpus")->required();
    tr->add_option("--train-neg", neg_path, "negative corpus D- (nli)");
    tr->add_option("--objective", objective, "mle|ul-context|ul-label|ul-both|ul-vocab|nli")
        ->check(CLI::IsMember({"mle", "ul-context", "ul-label", "ul-both", "ul-vocab", "nli"}));
    tr->add_option("--alpha", alpha, "unlikelihood mixing weight");
    tr->add_option("--alpha-context", alpha_context, "context-copy weight (defaults to --alpha)");
    tr->add_option("--alpha-label", alpha_label, "label-repeat weight (defaults to --alpha)");
    tr->add_option("--alpha-vocab", alpha_vocab, "vocabulary weight (defaults to --alpha)");
    tr->add_option("--alpha-nli", alpha_nli, "nli weight (defaults to --alpha)");
    tr->add_option("--ngram", tc.ngram, "candidate/metric n-gram size");
    tr->add_option("--batch-size", tc.batch_size, "examples per step");
    tr->add_option("--steps", tc.steps, "optimization steps");
    tr->add_option("--lr", tc.lr_peak, "peak learning rate");
    tr->add_option("--warmup", tc.warmup, "warmup steps");
    tr->add_option("--seed", tc.seed, "training seed")->envname("UL_SEED");
    tr->add_option("--k", tc.unigram_window, "running-unigram window (batches)");
    tr->add_option("--eval-interval", tc.eval_interval, "steps between validations");
    tr->add_option("--eval-decode", tc.eval_decode_examples, "validation contexts decoded per eval");
    tr->add_option("--gen-max-len", tc.gen_max_len, "generated-sequence length cap");
    tr->add_option("--init-from", tc.init_from, "checkpoint to fine-tune from");
    tr->add_option("--out", tc.checkpoint_path, "checkpoint output path");
    tr->add_option("--log", tc.log_path, "CSV train log path");
    tr->add_option("--embed-dim", tc.model.embed_dim, "embedding width");
    tr->add_option("--layers", tc.model.layers, "transformer layers");
    tr->add_option("--heads", tc.model.heads, "attention heads");
    tr->add_option("--ffn", tc.model.feedforward_dim, "feedforward width (0 = 4x embed)");
    tr->add_option("--max-seq-len", tc.model.max_seq_len, "maximum sequence length");
    tr->add_option("--dropout", tc.model.dropout, "dropout rate");

    // -------------------------------------------------------------------- eval
    auto* ev = app.add_subcommand("eval", "score a model on a corpus");
    ev->set_config("--config");
    std::string ev_model, ev_data;
    int ev_ngram = 3;
    bool ev_pretty = false;
    DecodeFlags ev_decode;
    ev->add_option("--model", ev_model, "checkpoint path")->required();
    ev->add_option("--data", ev_data, "corpus to evaluate")->required();
    ev->add_option("--ngram", ev_ngram, "repetition metric n");
    ev->add_flag("--pretty", ev_pretty, "aligned human-readable output");
    ev_decode.attach(ev);

    // ----------------------------------------------------------------- analyze
    auto* an = app.add_subcommand("analyze", "eval plus vocabulary class fractions");
    an->set_config("--config");
    std::string an_model, an_data, an_train;
    int an_ngram = 3;
    bool an_pretty = false;
    DecodeFlags an_decode;
    an->add_option("--model", an_model, "checkpoint path")->required();
    an->add_option("--data", an_data, "corpus to evaluate")->required();
    an->add_option("--train-data", an_train, "corpus defining the human distribution")->required();
    an->add_option("--ngram", an_ngram, "repetition metric n");
    an->add_flag("--pretty", an_pretty, "aligned human-readable output");
    an_decode.attach(an);

    // ---------------------------------------------------------------- generate
    auto* ge = app.add_subcommand("generate", "decode responses for a corpus");
    ge->set_config("--config");
    std::string ge_model, ge_data;
    int ge_limit = 0;
    DecodeFlags ge_decode;
    ge->add_option("--model", ge_model, "checkpoint path")->required();
    ge->add_option("--data", ge_data, "corpus with contexts")->required();
    ge->add_option("--limit", ge_limit, "decode at most this many examples (0 = all)");
    ge_decode.attach(ge);

    // ---------------------------------------------------------------- selftest
    auto* st = app.add_subcommand("selftest", "run gradient and oracle suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (gen->parsed()) {
        echo_config(gen);
        validate_usage([&] { gc.validate(); });
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        if (task == "dialogue") {
            const auto corpora = gen_dialogue_corpus(gc);
            write_corpus((fs::path(out_dir) / "train.jsonl").string(), corpora.train);
            write_corpus((fs::path(out_dir) / "valid.jsonl").string(), corpora.valid);
            write_corpus((fs::path(out_dir) / "test.jsonl").string(), corpora.test);
        } else {
            const auto corpora = gen_nli_corpus(gc);
            write_corpus((fs::path(out_dir) / "train_pos.jsonl").string(), corpora.train_pos);
            write_corpus((fs::path(out_dir) / "train_neg.jsonl").string(), corpora.train_neg);
            write_corpus((fs::path(out_dir) / "valid_pairs.jsonl").string(), corpora.valid_pairs);
            write_corpus((fs::path(out_dir) / "test_pairs.jsonl").string(), corpora.test_pairs);
        }
        return 0;
    }

    if (tr->parsed()) {
        echo_config(tr);
        tc.objective = objective_from_string(objective);
        auto resolve = [&](double specific) { return specific >= 0.0 ? specific : alpha; };
        tc.weights.alpha_context = resolve(alpha_context);
        tc.weights.alpha_label = resolve(alpha_label);
        tc.weights.alpha_vocab = resolve(alpha_vocab);
        tc.weights.alpha_nli = resolve(alpha_nli);
        validate_usage([&] { tc.validate(); });
        const Corpus train_corpus = read_corpus(train_path);
        const Corpus valid_corpus = read_corpus(valid_path);
        Corpus neg_corpus;
        if (!neg_path.empty()) neg_corpus = read_corpus(neg_path);
        train(tc, train_corpus, valid_corpus, neg_corpus.empty() ? nullptr : &neg_corpus);
        return 0;
    }

    if (ev->parsed() || an->parsed()) {
        const bool analyze_mode = an->parsed();
        echo_config(analyze_mode ? an : ev);
        const Checkpoint ck = load_checkpoint(analyze_mode ? an_model : ev_model);
        const Corpus data = read_corpus(analyze_mode ? an_data : ev_data);
        DecodeConfig dc;
        validate_usage([&] { dc = (analyze_mode ? an_decode : ev_decode).to_config(); });
        const int n = analyze_mode ? an_ngram : ev_ngram;

        std::optional<HumanUnigram> human;
        if (analyze_mode) {
            std::vector<TokenSeq> targets;
            for (const auto& ex : read_corpus(an_train)) {
                targets.push_back(ck.vocab.tokenize(ex.target));
            }
            human = HumanUnigram::from_targets(targets, ck.config.vocab_size);
        }
        const MetricReport report = evaluate(ck, data, dc, n, human ? &*human : nullptr);
        if (analyze_mode ? an_pretty : ev_pretty) {
            print_pretty(report);
        } else {
            std::printf("%s\n", MetricReport::csv_header().c_str());
            std::printf("%s\n",
                        report
                            .csv_row(analyze_mode ? an_model : ev_model, analyze_mode ? an_data : ev_data,
                                     to_string(dc.strategy))
                            .c_str());
        }
        return 0;
    }

    if (ge->parsed()) {
        echo_config(ge);
        const Checkpoint ck = load_checkpoint(ge_model);
        const Corpus data = read_corpus(ge_data);
        DecodeConfig dc;
        validate_usage([&] { dc = ge_decode.to_config(); });
        const size_t count = ge_limit > 0 ? std::min<size_t>(data.size(), static_cast<size_t>(ge_limit))
                                          : data.size();
        for (size_t i = 0; i < count; ++i) {
            const auto tok = tokenize_example(ck.vocab, data[i]);
            const TokenSeq prefix =
                encode_context(tok.context_sents, tok.history, ck.config.max_seq_len, dc.max_len);
            const DecodeResult res = decode(ck.params, ck.config, prefix, tok.context_tokens(), dc, i);
            std::printf("%s\n", ck.vocab.detokenize(res.tokens).c_str());
        }
        return 0;
    }

    if (st->parsed()) {
        return run_selftest(std::cout) ? 0 : 1;
    }

    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
