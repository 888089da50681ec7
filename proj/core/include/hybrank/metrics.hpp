#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hybrank/corpus_io.hpp"

namespace hybrank {

struct MetricValue {
    double value = 0.0;
    std::size_t queries_evaluated = 0;
    /// Run queries with no judgments (and, for NDCG, queries whose ideal DCG is 0).
    std::size_t queries_skipped = 0;
};

/// Fraction of judged queries with at least one positive in the top k.
MetricValue recall_at_k(const Run& run, const Qrels& qrels, std::size_t k);

/// Mean reciprocal rank of the first positive within the top k (0 if none).
MetricValue mrr_at_k(const Run& run, const Qrels& qrels, std::size_t k);

/// DCG with gain 2^grade - 1 and discount 1 / log2(rank + 1), divided by the
/// ideal DCG over all judged documents of the query.
MetricValue ndcg_at_k(const Run& run, const Qrels& qrels, std::size_t k);

enum class MetricKind { recall, mrr, ndcg };

struct MetricSpec {
    MetricKind kind;
    std::size_t k;

    std::string name() const;
    /// Accepts "r@K", "recall@K", "mrr@K" and "ndcg@K" (case-insensitive).
    static MetricSpec parse(const std::string& text);
};

MetricValue evaluate(const Run& run, const Qrels& qrels, const MetricSpec& spec);

/// JSON object {metric_name: value, ..., queries_evaluated, queries_skipped}.
std::string metric_report_json(const Run& run, const Qrels& qrels, const std::vector<MetricSpec>& metrics);

}  // namespace hybrank
