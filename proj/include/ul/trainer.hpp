#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ul/corpus.hpp"
#include "ul/decoding.hpp"
#include "ul/metrics.hpp"
#include "ul/model.hpp"
#include "ul/objectives.hpp"
#include "ul/vocab_stats.hpp"

namespace ul {

// peak * min(step / warmup, sqrt(warmup / step)); step counts from 1
double lr_schedule(int step, double peak, int warmup);

struct AdamState {
    std::vector<Array> m, v;
    int64_t t = 0;

    static AdamState like(ModelParams& params);
};

// Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected) with the
// global gradient norm clipped at 1.0 before the update. Errors on non-finite
// gradients or if an update would produce non-finite parameters.
void adam_step(ModelParams& params, const std::vector<Array>& grads, AdamState& state, double lr);

struct TrainConfig {
    Objective objective = Objective::mle;
    MixWeights weights;
    int ngram = 3;
    int batch_size = 16;
    int steps = 600;
    double lr_peak = 1e-3;
    int warmup = 100;
    uint64_t seed = 7;
    int unigram_window = 32;  // k batches for the running model distribution
    int eval_interval = 100;
    int eval_decode_examples = 64;  // validation contexts decoded per eval
    int gen_max_len = 32;           // cap for the generated-sequence pass
    std::string checkpoint_path;    // final checkpoint; ".best" suffix for best-PPL
    std::string log_path;           // CSV train log
    std::string init_from;          // optional checkpoint to fine-tune from
    ModelConfig model;              // vocab_size filled from the corpus when 0

    void validate() const;
};

struct TrainLogRow {
    int step = 0;
    double mle_per_token = 0.0;
    double ul_per_example = 0.0;
    double lr = 0.0;
    double valid_ppl = 0.0;
    double valid_ctx_rep = 0.0;
    double valid_lbl_rep = 0.0;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;

    static std::string csv_header();
    std::string to_csv() const;
    void save(const std::string& path) const;
};

struct TrainResult {
    Checkpoint checkpoint;  // final parameters
    TrainLog log;
    double best_valid_ppl = 0.0;
    int best_step = 0;
};

// Full optimization loop. `train_neg` supplies D- rows and is required (and
// only consulted) for the nli objective. Deterministic per (config, corpora).
TrainResult train(const TrainConfig& config, const Corpus& train_corpus, const Corpus& valid_corpus,
                  const Corpus* train_neg = nullptr);

// Decode-and-measure over a corpus: perplexity, F1, repetition, optional
// frequency-class fractions, and selection accuracy when rows carry paired
// negatives. Read-only with respect to the checkpoint.
MetricReport evaluate(const Checkpoint& ck, const Corpus& data, const DecodeConfig& decode_cfg,
                      int ngram, const HumanUnigram* human = nullptr);

// Shared helpers --------------------------------------------------------

// Deterministic vocabulary over every surface string in the corpora.
Vocabulary build_vocabulary(const std::vector<const Corpus*>& corpora);

// Gold-target encodings for perplexity-style evaluation.
std::vector<EncodedExample> encode_corpus(const Vocabulary& vocab, const Corpus& corpus, int max_seq_len);

// Mean context/label repetition of greedy (or configured) decodes over the
// first `limit` examples; also returns the generations.
struct DecodeMetrics {
    double ctx_rep = 0.0;
    double lbl_rep = 0.0;
    double f1 = 0.0;
    std::vector<TokenSeq> generations;
    int fallback_count = 0;
};

DecodeMetrics decode_metrics(const ModelParams& params, const ModelConfig& cfg, const Vocabulary& vocab,
                             const Corpus& corpus, const DecodeConfig& dc, int ngram, int limit);

}  // namespace ul
