#include <benchmark/benchmark.h>

#include "hybrank/features.hpp"
#include "hybrank/model.hpp"
#include "hybrank/sparse_sim.hpp"
#include "hybrank/synthetic.hpp"
#include "hybrank/trainer.hpp"

namespace {

using namespace hybrank;

const SyntheticBenchmark& bench_data() {
    static const SyntheticBenchmark b = make_synthetic_benchmark({.train_queries = 20, .test_queries = 5});
    return b;
}

const TermIndex& bench_index() {
    static const TermIndex idx = TermIndex::build(bench_data().corpus, {});
    return idx;
}

void BM_Bm25QueryAgainstList(benchmark::State& state) {
    const auto& b = bench_data();
    const auto& idx = bench_index();
    const auto& [qid, list] = *b.train.run.begin();
    const auto terms = tokenize(b.train.queries.at(qid));
    for (auto _ : state) {
        double total = 0.0;
        for (const auto& d : list) total += bm25_score(idx, terms, d.doc_id, {});
        benchmark::DoNotOptimize(total);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(list.size()));
}
BENCHMARK(BM_Bm25QueryAgainstList);

void BM_BuildRunFeatures(benchmark::State& state) {
    const auto& b = bench_data();
    FeatureOptions opts;
    opts.anchors = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        auto f = build_run_features(b.train.run, b.train.queries, &bench_index(), &b.embeddings, opts);
        benchmark::DoNotOptimize(f.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b.train.run.size()));
}
BENCHMARK(BM_BuildRunFeatures)->Arg(5)->Arg(40);

ModelConfig small_model() {
    ModelConfig cfg;
    cfg.dim = 16;
    cfg.inner = 64;
    cfg.heads = 2;
    cfg.layers_inter = 1;
    cfg.layers_aggr = 1;
    return cfg;
}

SimTensor random_features(std::size_t n, std::size_t l) {
    Rng rng(1);
    SimTensor raw(n + 1, l);
    for (double& v : raw.values()) v = uniform_real(rng);
    return build_features(raw, {});
}

void BM_ModelForward(benchmark::State& state) {
    const bool full = state.range(0) != 0;
    const HybRankModel model(full ? ModelConfig{} : small_model());
    const auto feats = random_features(40, static_cast<std::size_t>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(model.score_all(feats));
}
BENCHMARK(BM_ModelForward)->Args({0, 10})->Args({0, 40})->Args({1, 10})->Unit(benchmark::kMillisecond);

void BM_ModelForwardBackward(benchmark::State& state) {
    HybRankModel model(small_model());
    const auto feats = random_features(40, static_cast<std::size_t>(state.range(0)));
    const std::vector<std::size_t> positives{0};
    for (auto _ : state) {
        HybRankModel::Cache cache;
        const auto s = model.forward(feats, &cache);
        const auto l = contrastive_loss(s, positives, 0.07);
        model.backward(l.grad, cache);
        benchmark::DoNotOptimize(l.loss);
    }
}
BENCHMARK(BM_ModelForwardBackward)->Arg(10)->Arg(40)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
