#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hybrank/corpus_io.hpp"
#include "hybrank/tokenizer.hpp"

namespace hybrank {

struct BM25Params {
    double k1 = 0.9;
    double b = 0.4;

    /// Throws Error unless k1 > 0 and b in [0, 1].
    void validate() const;
    friend bool operator==(const BM25Params&, const BM25Params&) = default;
};

using TermId = std::uint32_t;

struct TermCount {
    TermId term;
    std::uint32_t count;
    friend bool operator==(const TermCount&, const TermCount&) = default;
};

/// Corpus term statistics for BM25: document frequencies, per-document term
/// counts and lengths. Immutable once built; safe to share across threads.
class TermIndex {
public:
    TermIndex() = default;

    /// Throws Error on an empty corpus.
    static TermIndex build(const Corpus& corpus, const BM25Params& params, Tokenizer tokenizer = {});
    static TermIndex load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t num_docs() const noexcept { return doc_ids_.size(); }
    std::size_t num_terms() const noexcept { return terms_.size(); }
    double avg_length() const noexcept { return avg_len_; }
    const BM25Params& params() const noexcept { return params_; }
    const Tokenizer& tokenizer() const noexcept { return tokenizer_; }

    /// Document frequency; 0 for terms absent from the corpus.
    std::uint32_t df(std::string_view term) const;
    std::uint32_t df(TermId id) const { return df_[id]; }
    const std::string& term(TermId id) const { return terms_[id]; }
    /// Returns false when the term is not in the vocabulary.
    bool lookup(std::string_view term, TermId& id) const;

    bool contains(const std::string& doc_id) const { return doc_index_.count(doc_id) > 0; }
    /// Throws LookupError.
    std::size_t doc_index(const std::string& doc_id) const;
    const std::string& doc_id(std::size_t idx) const { return doc_ids_[idx]; }
    std::uint32_t doc_length(std::size_t idx) const { return doc_len_[idx]; }
    /// Sorted by term id.
    std::span<const TermCount> doc_terms(std::size_t idx) const { return doc_terms_[idx]; }
    std::uint32_t term_count(TermId term, std::size_t doc_idx) const;

    /// Distinct in-vocabulary term ids of `text`, sorted. Out-of-vocabulary terms
    /// cannot match any document and are dropped.
    std::vector<TermId> query_terms(std::string_view text) const;
    /// Distinct term ids of an indexed document, sorted.
    std::vector<TermId> doc_as_query(std::size_t doc_idx) const;

    /// BM25 of `doc_idx` against a sorted distinct term-id set.
    double score(std::span<const TermId> query, std::size_t doc_idx, const BM25Params& params) const;

    friend bool operator==(const TermIndex& a, const TermIndex& b);

private:
    BM25Params params_;
    Tokenizer tokenizer_;
    std::vector<std::string> terms_;
    std::unordered_map<std::string, TermId> term_ids_;
    std::vector<std::uint32_t> df_;
    std::vector<std::string> doc_ids_;
    std::unordered_map<std::string, std::size_t> doc_index_;
    std::vector<std::uint32_t> doc_len_;
    std::vector<std::vector<TermCount>> doc_terms_;
    double avg_len_ = 0.0;

    void rebuild_lookups();
};

/// Robertson-Spärck Jones weight log(1 + (Nd - df + 0.5) / (df + 0.5)).
double rsj_weight(std::size_t num_docs, std::uint32_t df);
double rsj_weight(const TermIndex& index, std::string_view term);

/// BM25 of one indexed document against a term set (duplicates ignored).
/// Throws LookupError for unknown doc ids.
double bm25_score(const TermIndex& index, std::span<const std::string> query_terms, const std::string& doc_id,
                  const BM25Params& params);

/// BM25 with the distinct tokens of `text_a` as the query and document `doc_id_b`.
double sparse_pair_score(const TermIndex& index, std::string_view text_a, const std::string& doc_id_b,
                         const BM25Params& params);

}  // namespace hybrank
