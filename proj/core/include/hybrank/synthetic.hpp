#pragma once

#include <cstdint>

#include "hybrank/corpus_io.hpp"
#include "hybrank/dense_sim.hpp"

namespace hybrank {

/// Topic-clustered toy retrieval benchmark. Passages come in topics of
/// `positives_per_query`; each query targets one topic. Same-topic passages
/// share template terms and an embedding cluster mean (plus N(0, noise^2)
/// per-coordinate noise). A query's list holds its topic's passages plus
/// whole distractor topics; the initial ranking puts positives first and then
/// swaps each positive down by a uniform offset in [swap_min, swap_max].
struct SyntheticConfig {
    std::size_t num_passages = 2000;
    std::size_t positives_per_query = 5;
    std::size_t train_queries = 500;
    std::size_t test_queries = 100;
    std::size_t list_length = 40;
    std::size_t embed_dim = 32;
    double noise = 0.3;
    std::size_t swap_min = 5;
    std::size_t swap_max = 20;
    std::size_t template_terms = 4;
    std::size_t query_template_terms = 3;
    std::size_t filler_terms = 8;
    std::size_t filler_vocab = 300;
    std::uint64_t seed = 0;
};

struct SyntheticSplit {
    QuerySet queries;
    Run run;
    Qrels qrels;
};

struct SyntheticBenchmark {
    Corpus corpus;
    EmbeddingStore embeddings;  // passages plus "q:<qid>" rows
    SyntheticSplit train;
    SyntheticSplit test;
};

/// Throws Error when the sizes are inconsistent (e.g. list_length not a
/// multiple of positives_per_query, or too few topics).
SyntheticBenchmark make_synthetic_benchmark(const SyntheticConfig& cfg);

}  // namespace hybrank
