#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hybrank/corpus_io.hpp"
#include "hybrank/features.hpp"
#include "hybrank/model.hpp"

namespace hybrank {

struct TrainConfig {
    double lr = 1e-3;
    double warmup_ratio = 0.1;
    double clip_norm = 2.0;
    double weight_decay = 1e-6;
    /// false couples weight decay into the gradient (classic L2) instead.
    bool decoupled_weight_decay = true;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t epochs = 100;
    std::size_t batch_queries = 32;
    double tau = 0.07;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Supervised contrastive loss over one list and its gradient w.r.t. the scores.
struct LossResult {
    double loss = 0.0;
    std::vector<double> grad;
};

/// -(1/|P|) sum_{i in P} log softmax(s / tau)_i. `positives` are 0-based indices.
/// Throws Error when positives is empty or out of range.
LossResult contrastive_loss(std::span<const double> scores, std::span<const std::size_t> positives, double tau);

/// Linear warm-up from 0 to lr over warmup_ratio * total steps, then cosine decay to 0.
double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg);

/// Scales every gradient so the global L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_grad_norm(ParamStore& params, double max_norm);

/// Adaptive-moment optimizer with optional decoupled weight decay.
class AdamW {
public:
    AdamW(ParamStore& params, const TrainConfig& cfg);
    void step(double lr);
    std::size_t steps() const noexcept { return t_; }

private:
    ParamStore* params_;
    double beta1_, beta2_, eps_, weight_decay_;
    bool decoupled_;
    std::size_t t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

struct FilterReport {
    std::size_t total = 0;
    std::size_t kept = 0;
    std::size_t dropped_unjudged = 0;
    std::size_t dropped_no_positive = 0;
    std::vector<std::string> dropped;

    std::string summary() const;
};

/// Query ids whose list holds at least one positive, in run order.
std::vector<std::string> filter_training_queries(const Run& run, const Qrels& qrels, FilterReport* report = nullptr);

struct TrainingExample {
    const QueryFeatures* features = nullptr;
    std::vector<std::size_t> positives;
};

/// Pairs feature files with their in-list positives, dropping unusable queries.
std::vector<TrainingExample> make_training_examples(const std::vector<QueryFeatures>& features, const Qrels& qrels,
                                                    FilterReport* report = nullptr);

/// Scores every query's list with the model and returns the reranked run.
Run rerank_run(const HybRankModel& model, const std::vector<QueryFeatures>& features);

struct DevSet {
    const std::vector<QueryFeatures>* features = nullptr;
    const Qrels* qrels = nullptr;
};

struct TrainOutputs {
    /// Directory for epoch_NNN.ckpt / best.ckpt / last.ckpt; empty disables checkpoints.
    std::filesystem::path checkpoint_dir;
    /// JSON-lines metrics log; empty disables it.
    std::filesystem::path metrics_log;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double dev_mrr10 = -1.0;  // -1 when no dev set
    double dev_r1 = -1.0;
};

struct TrainSummary {
    FilterReport filter;
    std::vector<double> step_losses;
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_dev = -1.0;
};

/// Trains a fresh model. Returns the best-on-dev model when a dev set is given,
/// otherwise the final one. Throws Error when no query is usable.
HybRankModel train(const std::vector<QueryFeatures>& train_features, const Qrels& qrels, const ModelConfig& model_cfg,
                   const TrainConfig& train_cfg, const DevSet& dev = {}, const TrainOutputs& outputs = {},
                   TrainSummary* summary = nullptr);

}  // namespace hybrank
