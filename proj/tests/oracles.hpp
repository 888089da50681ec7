#pragma once

// Independent reference computations for tests. None of these call into the
// code paths they check.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace hybrank::oracle {

/// ASCII-only tokenizer: lowercase, split on anything not [a-z0-9].
inline std::vector<std::string> ascii_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

/// Literal BM25 over raw texts: every statistic recounted from scratch.
class Bm25 {
public:
    Bm25(const std::vector<std::string>& docs, double k1, double b) : k1_(k1), b_(b) {
        double total = 0.0;
        for (const auto& d : docs) {
            const auto toks = ascii_tokens(d);
            std::map<std::string, int> tf;
            for (const auto& t : toks) tf[t] += 1;
            for (const auto& [t, c] : tf) df_[t] += 1;
            tfs_.push_back(tf);
            lens_.push_back(static_cast<double>(toks.size()));
            total += static_cast<double>(toks.size());
        }
        avg_ = total / static_cast<double>(docs.size());
    }

    double score(const std::string& query_text, std::size_t doc) const {
        const auto toks = ascii_tokens(query_text);
        const std::set<std::string> q(toks.begin(), toks.end());
        const double n = static_cast<double>(tfs_.size());
        double s = 0.0;
        for (const auto& t : q) {
            auto it = tfs_[doc].find(t);
            if (it == tfs_[doc].end()) continue;
            const double df = df_.at(t);
            const double w = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
            const double c = it->second;
            s += w * c / (k1_ * ((1.0 - b_) + b_ * lens_[doc] / avg_) + c);
        }
        return s;
    }

    int df(const std::string& t) const {
        auto it = df_.find(t);
        return it == df_.end() ? 0 : it->second;
    }
    double length(std::size_t doc) const { return lens_[doc]; }
    double avg_length() const { return avg_; }
    int tf(const std::string& t, std::size_t doc) const {
        auto it = tfs_[doc].find(t);
        return it == tfs_[doc].end() ? 0 : it->second;
    }

private:
    double k1_, b_;
    std::map<std::string, int> df_;
    std::vector<std::map<std::string, int>> tfs_;
    std::vector<double> lens_;
    double avg_ = 0.0;
};

/// Elementwise multiply, then sum.
inline double inner_product(const std::vector<float>& a, const std::vector<float>& b) {
    std::vector<double> prod(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) prod[i] = static_cast<double>(a[i]) * static_cast<double>(b[i]);
    double s = 0.0;
    for (double p : prod) s += p;
    return s;
}

/// Per-query metric scans over (ranked doc ids, judgments).
struct Judged {
    std::vector<std::string> ranked;
    std::map<std::string, int> grades;
};

inline double recall_scan(const Judged& q, std::size_t k) {
    for (std::size_t r = 0; r < q.ranked.size() && r < k; ++r) {
        auto it = q.grades.find(q.ranked[r]);
        if (it != q.grades.end() && it->second > 0) return 1.0;
    }
    return 0.0;
}

inline double rr_scan(const Judged& q, std::size_t k) {
    for (std::size_t r = 0; r < q.ranked.size() && r < k; ++r) {
        auto it = q.grades.find(q.ranked[r]);
        if (it != q.grades.end() && it->second > 0) return 1.0 / static_cast<double>(r + 1);
    }
    return 0.0;
}

/// Returns -1 when the ideal DCG is zero.
inline double ndcg_scan(const Judged& q, std::size_t k) {
    double dcg = 0.0;
    for (std::size_t r = 0; r < q.ranked.size() && r < k; ++r) {
        auto it = q.grades.find(q.ranked[r]);
        const int g = it == q.grades.end() ? 0 : it->second;
        dcg += (std::pow(2.0, g) - 1.0) / std::log2(static_cast<double>(r) + 2.0);
    }
    std::vector<int> gs;
    for (const auto& [d, g] : q.grades) gs.push_back(g);
    std::sort(gs.rbegin(), gs.rend());
    double ideal = 0.0;
    for (std::size_t r = 0; r < gs.size() && r < k; ++r) ideal += (std::pow(2.0, gs[r]) - 1.0) / std::log2(static_cast<double>(r) + 2.0);
    return ideal > 0.0 ? dcg / ideal : -1.0;
}

}  // namespace hybrank::oracle
