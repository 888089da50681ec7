#include "hybrank/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "hybrank/error.hpp"
#include "hybrank/metrics.hpp"
#include "hybrank/random.hpp"

namespace hybrank {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw Error("learning rate must be positive");
    if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw Error("warmup_ratio must lie in [0, 1)");
    if (!(clip_norm > 0.0)) throw Error("clip_norm must be positive");
    if (!(weight_decay >= 0.0)) throw Error("weight_decay must be non-negative");
    if (epochs == 0 || batch_queries == 0) throw Error("epochs and batch_queries must be positive");
    if (!(tau > 0.0)) throw Error("loss temperature tau must be positive");
}

LossResult contrastive_loss(std::span<const double> scores, std::span<const std::size_t> positives, double tau) {
    if (positives.empty()) throw Error("contrastive loss needs at least one positive");
    if (!(tau > 0.0)) throw Error("contrastive loss temperature must be positive");
    for (auto p : positives) {
        if (p >= scores.size()) throw Error("positive index " + std::to_string(p) + " is out of range");
    }
    const double mx = *std::max_element(scores.begin(), scores.end());
    std::vector<double> prob(scores.size());
    double z = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        prob[i] = std::exp((scores[i] - mx) / tau);
        z += prob[i];
    }
    const double log_z = std::log(z);
    for (double& p : prob) p /= z;

    LossResult r;
    const double inv_p = 1.0 / static_cast<double>(positives.size());
    for (auto p : positives) r.loss -= ((scores[p] - mx) / tau - log_z);
    r.loss *= inv_p;

    // d/ds_j = (softmax_j - [j in P] / |P|) / tau
    r.grad.resize(scores.size());
    for (std::size_t j = 0; j < scores.size(); ++j) r.grad[j] = prob[j] / tau;
    for (auto p : positives) r.grad[p] -= inv_p / tau;
    return r;
}

double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
    if (total_steps == 0) return 0.0;
    step = std::min(step, total_steps);
    const double warmup = cfg.warmup_ratio * static_cast<double>(total_steps);
    const double s = static_cast<double>(step);
    if (s < warmup) return cfg.lr * s / warmup;
    const double span = static_cast<double>(total_steps) - warmup;
    if (span <= 0.0) return 0.0;
    const double progress = (s - warmup) / span;
    return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_grad_norm(ParamStore& params, double max_norm) {
    const double norm = params.grad_norm();
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto& [name, p] : params.entries()) {
            for (double& g : p.grad.values()) g *= scale;
        }
    }
    return norm;
}

AdamW::AdamW(ParamStore& params, const TrainConfig& cfg)
    : params_(&params),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_eps),
      weight_decay_(cfg.weight_decay),
      decoupled_(cfg.decoupled_weight_decay) {
    for (const auto& [name, p] : params.entries()) {
        m_.emplace(name, std::vector<double>(p.value.size(), 0.0));
        v_.emplace(name, std::vector<double>(p.value.size(), 0.0));
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, p] : params_->entries()) {
        auto& m = m_.at(name);
        auto& v = v_.at(name);
        auto w = p.value.values();
        auto g = p.grad.values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            double gi = g[i];
            if (!decoupled_) gi += weight_decay_ * w[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
            if (decoupled_) w[i] -= lr * weight_decay_ * w[i];
            w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
        }
    }
}

std::string FilterReport::summary() const {
    std::ostringstream ss;
    ss << kept << " of " << total << " queries usable; dropped " << dropped_no_positive
       << " without an in-list positive and " << dropped_unjudged << " without judgments";
    return ss.str();
}

std::vector<std::string> filter_training_queries(const Run& run, const Qrels& qrels, FilterReport* report) {
    FilterReport rep;
    std::vector<std::string> kept;
    for (const auto& [qid, list] : run) {
        ++rep.total;
        auto it = qrels.find(qid);
        if (it == qrels.end()) {
            ++rep.dropped_unjudged;
            rep.dropped.push_back(qid);
            continue;
        }
        const bool any = std::any_of(list.begin(), list.end(), [&](const ScoredDoc& d) {
            auto g = it->second.find(d.doc_id);
            return g != it->second.end() && is_positive(g->second);
        });
        if (!any) {
            ++rep.dropped_no_positive;
            rep.dropped.push_back(qid);
            continue;
        }
        kept.push_back(qid);
    }
    rep.kept = kept.size();
    if (report) *report = std::move(rep);
    return kept;
}

std::vector<TrainingExample> make_training_examples(const std::vector<QueryFeatures>& features, const Qrels& qrels,
                                                    FilterReport* report) {
    FilterReport rep;
    std::vector<TrainingExample> out;
    for (const auto& f : features) {
        ++rep.total;
        auto it = qrels.find(f.qid);
        if (it == qrels.end()) {
            ++rep.dropped_unjudged;
            rep.dropped.push_back(f.qid);
            continue;
        }
        TrainingExample ex{&f, {}};
        for (std::size_t i = 0; i < f.passage_ids.size(); ++i) {
            auto g = it->second.find(f.passage_ids[i]);
            if (g != it->second.end() && is_positive(g->second)) ex.positives.push_back(i);
        }
        if (ex.positives.empty()) {
            ++rep.dropped_no_positive;
            rep.dropped.push_back(f.qid);
            continue;
        }
        out.push_back(std::move(ex));
    }
    rep.kept = out.size();
    if (report) *report = std::move(rep);
    return out;
}

Run rerank_run(const HybRankModel& model, const std::vector<QueryFeatures>& features) {
    Run run;
    for (const auto& f : features) run[f.qid] = rerank(f.passage_ids, model.score_all(f.tensor));
    return run;
}

namespace {

std::string epoch_name(std::size_t epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%03zu.ckpt", epoch);
    return buf;
}

}  // namespace

HybRankModel train(const std::vector<QueryFeatures>& train_features, const Qrels& qrels, const ModelConfig& model_cfg,
                   const TrainConfig& cfg, const DevSet& dev, const TrainOutputs& outputs, TrainSummary* summary) {
    cfg.validate();
    TrainSummary sum;
    const auto examples = make_training_examples(train_features, qrels, &sum.filter);
    if (examples.empty()) throw Error("no usable training queries: " + sum.filter.summary());

    HybRankModel model(model_cfg);
    auto& params = model.params();
    AdamW optimizer(params, cfg);

    const std::size_t steps_per_epoch = (examples.size() + cfg.batch_queries - 1) / cfg.batch_queries;
    const std::size_t total_steps = steps_per_epoch * cfg.epochs;

    std::ofstream log;
    if (!outputs.metrics_log.empty()) {
        log.open(outputs.metrics_log, std::ios::trunc);
        if (!log) throw Error("cannot open metrics log '" + outputs.metrics_log.string() + "'");
    }
    if (!outputs.checkpoint_dir.empty()) std::filesystem::create_directories(outputs.checkpoint_dir);

    const bool has_dev = dev.features != nullptr && dev.qrels != nullptr;
    std::map<std::string, Tensor> best_values;

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(examples.size());
    std::size_t step = 0;
    HybRankModel::Cache cache;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle(order, rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_queries) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_queries);
            const double inv_b = 1.0 / static_cast<double>(end - start);
            params.zero_grad();
            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const auto& ex = examples[order[k]];
                const auto scores = model.forward(ex.features->tensor, &cache);
                auto loss = contrastive_loss(scores, ex.positives, cfg.tau);
                batch_loss += loss.loss;
                for (double& g : loss.grad) g *= inv_b;
                model.backward(loss.grad, cache);
            }
            batch_loss *= inv_b;
            clip_grad_norm(params, cfg.clip_norm);
            const double lr = lr_at(step + 1, total_steps, cfg);
            optimizer.step(lr);
            ++step;
            epoch_loss += batch_loss * static_cast<double>(end - start);
            sum.step_losses.push_back(batch_loss);
            if (log) {
                log << nlohmann::json{{"step", step}, {"epoch", epoch}, {"lr", lr}, {"loss", batch_loss}}.dump() << '\n';
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_loss = epoch_loss / static_cast<double>(examples.size());
        if (has_dev) {
            const auto run = rerank_run(model, *dev.features);
            rec.dev_mrr10 = mrr_at_k(run, *dev.qrels, 10).value;
            rec.dev_r1 = recall_at_k(run, *dev.qrels, 1).value;
            if (rec.dev_mrr10 > sum.best_dev) {
                sum.best_dev = rec.dev_mrr10;
                sum.best_epoch = epoch;
                best_values = params.values();
                if (!outputs.checkpoint_dir.empty()) model.save(outputs.checkpoint_dir / "best.ckpt");
            }
        }
        if (log) {
            nlohmann::json j{{"epoch", epoch}, {"mean_loss", rec.mean_loss}};
            if (has_dev) {
                j["dev_mrr@10"] = rec.dev_mrr10;
                j["dev_r@1"] = rec.dev_r1;
            }
            log << j.dump() << '\n';
        }
        if (!outputs.checkpoint_dir.empty()) model.save(outputs.checkpoint_dir / epoch_name(epoch));
        sum.epochs.push_back(rec);
    }
    if (!outputs.checkpoint_dir.empty()) model.save(outputs.checkpoint_dir / "last.ckpt");
    if (has_dev && !best_values.empty()) params.assign(best_values);
    if (!has_dev) sum.best_epoch = cfg.epochs;
    if (summary) *summary = std::move(sum);
    return model;
}

}  // namespace hybrank
