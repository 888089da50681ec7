#include <doctest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "hybrank/error.hpp"
#include "hybrank/metrics.hpp"
#include "oracles.hpp"

using namespace hybrank;

namespace {

Run one_query(const std::vector<std::string>& ids) {
    Run run;
    double s = static_cast<double>(ids.size());
    for (const auto& id : ids) run["q"].push_back({id, s--});
    return run;
}

}  // namespace

TEST_CASE("hand-computed metric cases") {
    const double inv_log3 = 1.0 / std::log2(3.0);
    // 1: positive at rank 1.
    CHECK(recall_at_k(one_query({"p", "n"}), {{"q", {{"p", 1}}}}, 1).value == 1.0);
    // 2, 3: positive at rank 6 only.
    const Run r6 = one_query({"a", "b", "c", "d", "e", "p"});
    const Qrels q6{{"q", {{"p", 1}}}};
    CHECK(recall_at_k(r6, q6, 5).value == 0.0);
    CHECK(recall_at_k(r6, q6, 10).value == 1.0);
    // 4: first positive at rank 2.
    CHECK(mrr_at_k(one_query({"n", "p", "p2"}), {{"q", {{"p", 1}, {"p2", 1}}}}, 10).value == 0.5);
    // 5: no positive within k.
    CHECK(mrr_at_k(r6, q6, 5).value == 0.0);
    // 6: single positive at rank 1.
    CHECK(ndcg_at_k(one_query({"p", "n"}), {{"q", {{"p", 1}}}}, 10).value == 1.0);
    // 7: single positive at rank 2.
    const double n7 = ndcg_at_k(one_query({"n", "p"}), {{"q", {{"p", 1}}}}, 10).value;
    CHECK(std::abs(n7 - inv_log3) < 1e-9);
    CHECK(n7 == doctest::Approx(0.6309).epsilon(1e-4));
    // 8: grades 3 and 1 swapped.
    const double n8 = ndcg_at_k(one_query({"low", "high"}), {{"q", {{"high", 3}, {"low", 1}}}}, 10).value;
    CHECK(std::abs(n8 - (1.0 + 7.0 * inv_log3) / (7.0 + inv_log3)) < 1e-9);
    // 9: judged positive never retrieved lowers the ideal-normalized score.
    const double n9 = ndcg_at_k(one_query({"p", "n"}), {{"q", {{"p", 1}, {"missing", 1}}}}, 10).value;
    CHECK(std::abs(n9 - 1.0 / (1.0 + inv_log3)) < 1e-9);
    // 10: two queries, one hit at rank 1 and one at rank 4.
    Run two;
    two["a"] = {{"x", 3}, {"y", 2}};
    two["b"] = {{"n1", 4}, {"n2", 3}, {"n3", 2}, {"p", 1}};
    const Qrels q2{{"a", {{"x", 1}}}, {"b", {{"p", 1}}}};
    CHECK(std::abs(mrr_at_k(two, q2, 10).value - (1.0 + 0.25) / 2.0) < 1e-9);
    CHECK(std::abs(recall_at_k(two, q2, 3).value - 0.5) < 1e-9);
}

TEST_CASE("grade 0 is not positive") {
    const Qrels q{{"q", {{"p", 0}}}};
    CHECK(recall_at_k(one_query({"p"}), q, 1).value == 0.0);
    const auto n = ndcg_at_k(one_query({"p"}), q, 10);
    CHECK(n.queries_evaluated == 0);
    CHECK(n.queries_skipped == 1);
}

TEST_CASE("unjudged queries are skipped and counted") {
    Run run = one_query({"p"});
    run["other"] = {{"x", 1}};
    const auto r = recall_at_k(run, {{"q", {{"p", 1}}}}, 1);
    CHECK(r.value == 1.0);
    CHECK(r.queries_evaluated == 1);
    CHECK(r.queries_skipped == 1);
}

TEST_CASE("metrics match a brute-force scan on random queries") {
    std::mt19937 gen(2024);
    std::uniform_int_distribution<int> grade(0, 3), len(1, 30), coin(0, 4);
    Run run;
    Qrels qrels;
    std::vector<oracle::Judged> judged;
    for (int q = 0; q < 100; ++q) {
        const std::string qid = "q" + std::to_string(q);
        oracle::Judged j;
        const int n = len(gen);
        for (int i = 0; i < n; ++i) {
            const std::string d = "d" + std::to_string(i);
            run[qid].push_back({d, static_cast<double>(n - i)});
            j.ranked.push_back(d);
            if (coin(gen) == 0) j.grades[d] = grade(gen);
        }
        if (coin(gen) == 0) j.grades["unretrieved"] = grade(gen);
        if (!j.grades.empty()) qrels[qid] = j.grades;
        judged.push_back(j);
    }
    for (std::size_t k : {1, 3, 5, 10, 20, 50}) {
        double rs = 0, ms = 0, ns = 0;
        std::size_t nq = 0, nn = 0;
        for (const auto& j : judged) {
            if (j.grades.empty()) continue;
            ++nq;
            rs += oracle::recall_scan(j, k);
            ms += oracle::rr_scan(j, k);
            const double nd = oracle::ndcg_scan(j, k);
            if (nd >= 0) {
                ns += nd;
                ++nn;
            }
        }
        const auto r = recall_at_k(run, qrels, k);
        CHECK(std::abs(r.value - rs / static_cast<double>(nq)) < 1e-12);
        CHECK(r.queries_evaluated == nq);
        CHECK(std::abs(mrr_at_k(run, qrels, k).value - ms / static_cast<double>(nq)) < 1e-12);
        const auto n = ndcg_at_k(run, qrels, k);
        CHECK(std::abs(n.value - ns / static_cast<double>(nn)) < 1e-12);
        CHECK(n.queries_evaluated == nn);
    }
}

TEST_CASE("metric properties") {
    std::mt19937 gen(3);
    Run run;
    Qrels qrels;
    for (int q = 0; q < 30; ++q) {
        const std::string qid = "q" + std::to_string(q);
        for (int i = 0; i < 25; ++i) run[qid].push_back({"d" + std::to_string(i), 25.0 - i});
        qrels[qid]["d" + std::to_string(gen() % 25)] = 1 + static_cast<int>(gen() % 2);
    }
    for (std::size_t k = 1; k < 30; ++k) {
        CHECK(recall_at_k(run, qrels, k + 1).value >= recall_at_k(run, qrels, k).value);
        CHECK(mrr_at_k(run, qrels, k + 1).value >= mrr_at_k(run, qrels, k).value);
        const double n = ndcg_at_k(run, qrels, k).value;
        CHECK(n >= 0.0);
        CHECK(n <= 1.0);
    }
    // Shuffling everything below the first positive leaves MRR unchanged.
    Run shuffled = run;
    for (auto& [qid, list] : shuffled) {
        std::size_t first = 0;
        while (!qrels[qid].count(list[first].doc_id)) ++first;
        std::shuffle(list.begin() + static_cast<std::ptrdiff_t>(first) + 1, list.end(), gen);
    }
    CHECK(mrr_at_k(shuffled, qrels, 10).value == mrr_at_k(run, qrels, 10).value);
    // Perfect ranking.
    Run perfect;
    for (const auto& [qid, j] : qrels)
        for (const auto& [d, g] : j) perfect[qid].push_back({d, 1.0});
    CHECK(ndcg_at_k(perfect, qrels, 10).value == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("metric names and JSON report") {
    CHECK(MetricSpec::parse("r@5").name() == "r@5");
    CHECK(MetricSpec::parse("Recall@20").kind == MetricKind::recall);
    CHECK(MetricSpec::parse("mrr@10").k == 10);
    CHECK(MetricSpec::parse("NDCG@10").kind == MetricKind::ndcg);
    CHECK_THROWS_AS(MetricSpec::parse("map@10"), Error);
    CHECK_THROWS_AS(MetricSpec::parse("r@0"), Error);
    CHECK_THROWS_AS(MetricSpec::parse("r@"), Error);

    Run run = one_query({"n", "p"});
    run["u"] = {{"x", 1}};
    const auto text = metric_report_json(run, {{"q", {{"p", 1}}}},
                                         {MetricSpec::parse("r@1"), MetricSpec::parse("mrr@10"), MetricSpec::parse("ndcg@10")});
    const auto j = nlohmann::json::parse(text);
    CHECK(j["r@1"].get<double>() == 0.0);
    CHECK(j["mrr@10"].get<double>() == 0.5);
    CHECK(j["queries_evaluated"].get<int>() == 1);
    CHECK(j["queries_skipped"].get<int>() == 1);
}
