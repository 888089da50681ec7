#include "hybrank/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>

#include <json.hpp>

#include "hybrank/error.hpp"

namespace hybrank {

namespace {

int grade_of(const std::map<std::string, int>& judged, const std::string& doc) {
    auto it = judged.find(doc);
    return it == judged.end() ? 0 : it->second;
}

// Averages a per-query value over run queries that have judgments.
MetricValue average(const Run& run, const Qrels& qrels, std::size_t k,
                    const std::function<bool(const std::vector<ScoredDoc>&, const std::map<std::string, int>&,
                                             std::size_t, double&)>& per_query) {
    if (k == 0) throw Error("metric cutoff k must be at least 1");
    MetricValue m;
    double sum = 0.0;
    for (const auto& [qid, list] : run) {
        auto it = qrels.find(qid);
        if (it == qrels.end()) {
            ++m.queries_skipped;
            continue;
        }
        double v = 0.0;
        if (!per_query(list, it->second, k, v)) {
            ++m.queries_skipped;
            continue;
        }
        sum += v;
        ++m.queries_evaluated;
    }
    m.value = m.queries_evaluated ? sum / static_cast<double>(m.queries_evaluated) : 0.0;
    return m;
}

}  // namespace

MetricValue recall_at_k(const Run& run, const Qrels& qrels, std::size_t k) {
    return average(run, qrels, k, [](const auto& list, const auto& judged, std::size_t cutoff, double& v) {
        const auto n = std::min(cutoff, list.size());
        v = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            if (is_positive(grade_of(judged, list[r].doc_id))) {
                v = 1.0;
                break;
            }
        }
        return true;
    });
}

MetricValue mrr_at_k(const Run& run, const Qrels& qrels, std::size_t k) {
    return average(run, qrels, k, [](const auto& list, const auto& judged, std::size_t cutoff, double& v) {
        const auto n = std::min(cutoff, list.size());
        v = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            if (is_positive(grade_of(judged, list[r].doc_id))) {
                v = 1.0 / static_cast<double>(r + 1);
                break;
            }
        }
        return true;
    });
}

MetricValue ndcg_at_k(const Run& run, const Qrels& qrels, std::size_t k) {
    return average(run, qrels, k, [](const auto& list, const auto& judged, std::size_t cutoff, double& v) {
        auto gain = [](int grade) { return std::exp2(static_cast<double>(grade)) - 1.0; };
        auto discount = [](std::size_t rank) { return 1.0 / std::log2(static_cast<double>(rank) + 1.0); };
        std::vector<int> grades;
        grades.reserve(judged.size());
        for (const auto& [doc, g] : judged) grades.push_back(g);
        std::sort(grades.begin(), grades.end(), std::greater<>());
        double ideal = 0.0;
        for (std::size_t r = 0; r < std::min(cutoff, grades.size()); ++r) ideal += gain(grades[r]) * discount(r + 1);
        if (ideal <= 0.0) return false;
        double dcg = 0.0;
        for (std::size_t r = 0; r < std::min(cutoff, list.size()); ++r) {
            dcg += gain(grade_of(judged, list[r].doc_id)) * discount(r + 1);
        }
        v = dcg / ideal;
        return true;
    });
}

std::string MetricSpec::name() const {
    switch (kind) {
        case MetricKind::recall: return "r@" + std::to_string(k);
        case MetricKind::mrr: return "mrr@" + std::to_string(k);
        case MetricKind::ndcg: return "ndcg@" + std::to_string(k);
    }
    return {};
}

MetricSpec MetricSpec::parse(const std::string& text) {
    std::string s;
    for (char c : text) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    const auto at = s.find('@');
    if (at == std::string::npos) throw Error("metric '" + text + "' lacks an @k cutoff");
    const auto head = s.substr(0, at);
    const auto tail = s.substr(at + 1);
    MetricSpec spec{};
    if (head == "r" || head == "recall") spec.kind = MetricKind::recall;
    else if (head == "mrr") spec.kind = MetricKind::mrr;
    else if (head == "ndcg") spec.kind = MetricKind::ndcg;
    else throw Error("unknown metric '" + text + "'");
    if (tail.empty() || !std::all_of(tail.begin(), tail.end(), [](unsigned char c) { return std::isdigit(c); })) {
        throw Error("metric '" + text + "' has a malformed cutoff");
    }
    spec.k = std::stoul(tail);
    if (spec.k == 0) throw Error("metric '" + text + "' has a zero cutoff");
    return spec;
}

MetricValue evaluate(const Run& run, const Qrels& qrels, const MetricSpec& spec) {
    switch (spec.kind) {
        case MetricKind::recall: return recall_at_k(run, qrels, spec.k);
        case MetricKind::mrr: return mrr_at_k(run, qrels, spec.k);
        case MetricKind::ndcg: return ndcg_at_k(run, qrels, spec.k);
    }
    throw Error("unknown metric kind");
}

std::string metric_report_json(const Run& run, const Qrels& qrels, const std::vector<MetricSpec>& metrics) {
    nlohmann::ordered_json report;
    std::size_t evaluated = 0;
    std::size_t skipped = 0;
    for (const auto& spec : metrics) {
        const auto m = evaluate(run, qrels, spec);
        report[spec.name()] = m.value;
        if (spec.kind == MetricKind::ndcg) {
            report[spec.name() + "_queries_evaluated"] = m.queries_evaluated;
        } else {
            evaluated = m.queries_evaluated;
            skipped = m.queries_skipped;
        }
    }
    if (evaluated == 0 && skipped == 0) {
        for (const auto& [qid, list] : run) (qrels.count(qid) ? evaluated : skipped)++;
    }
    report["queries_evaluated"] = evaluated;
    report["queries_skipped"] = skipped;
    return report.dump(2);
}

}  // namespace hybrank
