#include "ul/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ul/decoding.hpp"
#include "ul/gradcheck.hpp"
#include "ul/metrics.hpp"
#include "ul/objectives.hpp"
#include "ul/synth.hpp"
#include "ul/trainer.hpp"

namespace ul {

namespace {

constexpr double kGradTolerance = 1e-4;

struct TinySetup {
    ModelConfig cfg;
    ModelParamsT<double> params;
    TokenizedExample gold;
    TokenSeq generated;

    static TinySetup make(uint64_t seed) {
        TinySetup s;
        s.cfg.vocab_size = 13;
        s.cfg.embed_dim = 8;
        s.cfg.heads = 2;
        s.cfg.layers = 2;
        s.cfg.feedforward_dim = 16;
        s.cfg.max_seq_len = 24;
        Rng rng(seed);
        s.params = ModelParams::init(s.cfg, rng).cast<double>();
        auto tok = [&](int len) {
            TokenSeq seq;
            for (int i = 0; i < len; ++i) {
                seq.push_back(kNumReserved + rng.index(static_cast<size_t>(s.cfg.vocab_size - kNumReserved)));
            }
            return seq;
        };
        s.gold.context_sents = {tok(4)};
        s.gold.history = {tok(3)};
        s.gold.target = tok(5);
        s.generated = tok(5);
        // force n-gram overlap so candidate sets are non-trivial
        s.generated[2] = s.gold.context_sents[0][1];
        s.generated[3] = s.gold.context_sents[0][2];
        s.generated[4] = s.generated[2];
        return s;
    }

    std::vector<ArrayT<double>> flat_params() const {
        std::vector<ArrayT<double>> out;
        params.for_each([&](const std::string&, const ArrayT<double>& a) { out.push_back(a); });
        return out;
    }
};

double check_objective(Objective mode, uint64_t seed) {
    TinySetup s = TinySetup::make(seed);
    MixWeights w = MixWeights::uniform(1.0);

    RunningUnigram stats0(s.cfg.vocab_size, 4);
    stats0.update(s.generated);  // non-trivial model distribution
    HumanUnigram human = HumanUnigram::from_targets({s.gold.target, s.generated}, s.cfg.vocab_size);

    LossBuilder<double> build = [&, mode, w](TapeT<double>& tape,
                                             const std::vector<TapeT<double>::Id>& ids) {
        ParamNodesT<double> pn{ids};
        if (mode == Objective::nli) {
            TokenizedExample neg = s.gold;
            neg.target = s.generated;
            return nli_loss_node<double>(tape, pn, s.cfg, {s.gold}, {neg}, 0.7).total;
        }
        RunningUnigram local = stats0;  // keep f deterministic across evaluations
        std::optional<TokenSeq> gen = s.generated;
        return ule_loss_node<double>(tape, pn, s.cfg, s.gold, gen, mode, w, &local, &human, 2).total;
    };

    GradCheckOptions opts;
    opts.step = 1e-5;  // double-precision evaluation permits a small step
    opts.max_coords_per_param = 6;
    opts.sample_seed = seed;
    opts.zero_floor = 1e-7;
    return finite_difference_check<double>(build, s.flat_params(), opts);
}

bool close(double a, double b, double tol = 1e-9) { return std::abs(a - b) <= tol; }

}  // namespace

bool run_selftest(std::ostream& out) {
    int failures = 0;
    auto report = [&](const std::string& name, bool ok, const std::string& detail = "") {
        out << (ok ? "PASS" : "FAIL") << "  " << name;
        if (!detail.empty()) out << "  (" << detail << ")";
        out << "\n";
        if (!ok) ++failures;
    };

    // gradient suite
    for (Objective mode : {Objective::mle, Objective::ul_context, Objective::ul_label, Objective::ul_both,
                           Objective::ul_vocab, Objective::nli}) {
        double worst = 0.0;
        for (uint64_t seed : {11u, 29u}) worst = std::max(worst, check_objective(mode, seed));
        char detail[64];
        std::snprintf(detail, sizeof(detail), "max rel err %.2e", worst);
        report("gradient-" + to_string(mode), worst < kGradTolerance, detail);
    }

    // candidate generators versus a quadratic window scan
    {
        Rng rng(17);
        bool ok = true;
        for (int trial = 0; trial < 200 && ok; ++trial) {
            const int n = 1 + rng.index(3);
            auto seq = [&](int len) {
                TokenSeq s;
                for (int i = 0; i < len; ++i) s.push_back(kNumReserved + rng.index(5));
                return s;
            };
            const TokenSeq x = seq(2 + rng.index(15));
            const TokenSeq y = seq(1 + rng.index(15));

            const auto fast_ctx = context_copy_candidates(x, y, n);
            const auto fast_lbl = label_repeat_candidates(y, n);
            for (int t = 0; t < static_cast<int>(y.size()); ++t) {
                bool ctx_hit = false, lbl_hit = false;
                for (int i = std::max(0, t - n + 1); i + n <= static_cast<int>(y.size()) && i <= t; ++i) {
                    bool in_ctx = false;
                    for (int j = 0; j + n <= static_cast<int>(x.size()); ++j) {
                        bool eq = true;
                        for (int c = 0; c < n; ++c) eq = eq && x[j + c] == y[i + c];
                        if (eq) in_ctx = true;
                    }
                    if (in_ctx) ctx_hit = true;
                    for (int j = 0; j + n - 1 < i; ++j) {
                        bool eq = true;
                        for (int c = 0; c < n; ++c) eq = eq && y[j + c] == y[i + c];
                        if (eq) lbl_hit = true;
                    }
                }
                ok = ok && ctx_hit == !fast_ctx.at[static_cast<size_t>(t)].empty();
                ok = ok && lbl_hit == !fast_lbl.at[static_cast<size_t>(t)].empty();
            }
        }
        report("candidate-oracle", ok);
    }

    // running unigram window equals a recount
    {
        RunningUnigram stats(12, 4);
        Rng rng(23);
        bool ok = true;
        for (int b = 0; b < 7; ++b) {
            TokenSeq batch;
            for (int i = 0; i < 10; ++i) batch.push_back(kNumReserved + rng.index(7));
            stats.update(batch);
            std::vector<int64_t> recount(12, 0);
            for (const auto& counts : stats.window()) {
                for (size_t i = 0; i < counts.size(); ++i) recount[i] += counts[i];
            }
            ok = ok && recount == stats.aggregate();
        }
        report("unigram-window", ok);
    }

    // pinned metric values
    {
        const TokenSeq a = {10, 11, 10, 11};
        const TokenSeq x = {10, 11, 12}, y = {10, 11, 13};
        const TokenSeq gold = {10, 11, 14};
        bool ok = close(label_repetition(a, 2), 1.0 / 3.0) && close(context_repetition(y, x, 2), 0.5) &&
                  close(unigram_f1(y, gold), 2.0 / 3.0) &&
                  close(beta_vocab_mismatch(0.2, 0.1), 0.2 * std::log(2.0), 1e-12);
        report("metric-units", ok);
    }

    // decoding equivalence on a random model
    {
        ModelConfig cfg = TinySetup::make(1).cfg;
        Rng rng(31);
        ModelParams params = ModelParams::init(cfg, rng);
        bool ok = true;
        for (int i = 0; i < 20 && ok; ++i) {
            TokenSeq prefix = {kBos};
            const int len = 1 + rng.index(6);
            for (int j = 0; j < len; ++j) {
                prefix.push_back(kNumReserved + rng.index(static_cast<size_t>(cfg.vocab_size - kNumReserved)));
            }
            prefix.push_back(kSep);
            const auto g = greedy_decode(params, cfg, prefix, 8);
            const auto b = beam_decode(params, cfg, prefix, 1, 8);
            ok = g.tokens == b.tokens;
        }
        report("beam1-equals-greedy", ok);
    }

    // round trips
    {
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / "ulgen-selftest";
        fs::create_directories(dir);
        ModelConfig cfg = TinySetup::make(2).cfg;
        Rng rng(41);
        ModelParams params = ModelParams::init(cfg, rng);
        Vocabulary vocab;
        for (int i = 0; i < cfg.vocab_size - kNumReserved; ++i) vocab.add("tok" + std::to_string(i));
        const std::string ck_path = (dir / "selftest.ulck").string();
        save_checkpoint(params, cfg, vocab, ck_path);
        Checkpoint ck = load_checkpoint(ck_path);
        bool ok = ck.config == cfg;
        ck.params.for_each([&](const std::string& name, const Array& arr) {
            Array* orig = nullptr;
            params.for_each([&](const std::string& n2, Array& a2) {
                if (n2 == name) orig = &a2;
            });
            ok = ok && orig != nullptr && orig->v == arr.v;
        });

        GenConfig gen;
        gen.train = 8;
        gen.valid = 2;
        gen.test = 2;
        auto corpora = gen_dialogue_corpus(gen);
        const std::string corpus_path = (dir / "selftest.jsonl").string();
        write_corpus(corpus_path, corpora.train);
        ok = ok && read_corpus(corpus_path) == corpora.train;
        report("round-trips", ok);
    }

    out << (failures == 0 ? "all checks passed\n" : std::to_string(failures) + " check(s) failed\n");
    return failures == 0;
}

}  // namespace ul
