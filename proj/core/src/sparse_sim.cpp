#include "hybrank/sparse_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "hybrank/binary_io.hpp"
#include "hybrank/error.hpp"

namespace hybrank {

namespace {
constexpr io::Magic kIndexMagic = io::make_magic("HYBIDX1");
}

void BM25Params::validate() const {
    if (!(k1 > 0.0) || !std::isfinite(k1)) throw Error("BM25 k1 must be positive");
    if (!(b >= 0.0 && b <= 1.0)) throw Error("BM25 b must lie in [0, 1]");
}

TermIndex TermIndex::build(const Corpus& corpus, const BM25Params& params, Tokenizer tokenizer) {
    params.validate();
    if (corpus.empty()) throw Error("cannot build an index over an empty corpus");

    TermIndex idx;
    idx.params_ = params;
    idx.tokenizer_ = std::move(tokenizer);

    // Per-document counts keyed by term string first; ids are assigned in
    // lexicographic order afterwards so the index is independent of hash order.
    std::vector<std::map<std::string, std::uint32_t>> counts(corpus.size());
    std::map<std::string, std::uint32_t> df;
    std::uint64_t total_len = 0;
    idx.doc_ids_.reserve(corpus.size());
    idx.doc_len_.reserve(corpus.size());
    for (std::size_t d = 0; d < corpus.size(); ++d) {
        const auto& doc = corpus[d];
        idx.doc_ids_.push_back(doc.id);
        const auto tokens = idx.tokenizer_(doc.text);
        idx.doc_len_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total_len += tokens.size();
        for (const auto& t : tokens) ++counts[d][t];
        for (const auto& [t, c] : counts[d]) ++df[t];
    }

    idx.terms_.reserve(df.size());
    idx.df_.reserve(df.size());
    std::unordered_map<std::string, TermId> ids;
    for (const auto& [t, n] : df) {
        ids.emplace(t, static_cast<TermId>(idx.terms_.size()));
        idx.terms_.push_back(t);
        idx.df_.push_back(n);
    }
    idx.doc_terms_.resize(corpus.size());
    for (std::size_t d = 0; d < corpus.size(); ++d) {
        auto& row = idx.doc_terms_[d];
        row.reserve(counts[d].size());
        // std::map iteration is lexicographic, matching id order.
        for (const auto& [t, c] : counts[d]) row.push_back({ids.at(t), c});
    }
    idx.avg_len_ = static_cast<double>(total_len) / static_cast<double>(corpus.size());
    idx.rebuild_lookups();
    return idx;
}

void TermIndex::rebuild_lookups() {
    term_ids_.clear();
    term_ids_.reserve(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) term_ids_.emplace(terms_[i], static_cast<TermId>(i));
    doc_index_.clear();
    doc_index_.reserve(doc_ids_.size());
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
        if (!doc_index_.emplace(doc_ids_[i], i).second) throw Error("duplicate document id '" + doc_ids_[i] + "'");
    }
}

bool TermIndex::lookup(std::string_view term, TermId& id) const {
    auto it = term_ids_.find(std::string(term));
    if (it == term_ids_.end()) return false;
    id = it->second;
    return true;
}

std::uint32_t TermIndex::df(std::string_view term) const {
    TermId id = 0;
    return lookup(term, id) ? df_[id] : 0;
}

std::size_t TermIndex::doc_index(const std::string& doc_id) const {
    auto it = doc_index_.find(doc_id);
    if (it == doc_index_.end()) throw LookupError("document", doc_id);
    return it->second;
}

std::uint32_t TermIndex::term_count(TermId term, std::size_t doc_idx) const {
    const auto& row = doc_terms_[doc_idx];
    auto it = std::lower_bound(row.begin(), row.end(), term,
                               [](const TermCount& tc, TermId t) { return tc.term < t; });
    return (it != row.end() && it->term == term) ? it->count : 0;
}

std::vector<TermId> TermIndex::query_terms(std::string_view text) const {
    std::vector<TermId> ids;
    for (const auto& t : tokenizer_(text)) {
        TermId id = 0;
        if (lookup(t, id)) ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

std::vector<TermId> TermIndex::doc_as_query(std::size_t doc_idx) const {
    std::vector<TermId> ids;
    ids.reserve(doc_terms_[doc_idx].size());
    for (const auto& tc : doc_terms_[doc_idx]) ids.push_back(tc.term);
    return ids;
}

double TermIndex::score(std::span<const TermId> query, std::size_t doc_idx, const BM25Params& params) const {
    const auto& row = doc_terms_[doc_idx];
    const double norm = params.k1 * ((1.0 - params.b) +
                                     (avg_len_ > 0.0 ? params.b * doc_len_[doc_idx] / avg_len_ : 0.0));
    double sum = 0.0;
    auto q = query.begin();
    auto d = row.begin();
    while (q != query.end() && d != row.end()) {
        if (*q < d->term) {
            ++q;
        } else if (d->term < *q) {
            ++d;
        } else {
            const double c = d->count;
            sum += rsj_weight(doc_ids_.size(), df_[*q]) * c / (norm + c);
            ++q;
            ++d;
        }
    }
    return sum;
}

void TermIndex::save(const std::filesystem::path& path) const {
    io::write_atomically(path, [&](std::ostream& out) {
        io::write_magic(out, kIndexMagic);
        io::write_u32(out, kTokenizerVersion);
        io::write_f64(out, params_.k1);
        io::write_f64(out, params_.b);
        io::write_u32(out, static_cast<std::uint32_t>(tokenizer_.stopwords().size()));
        for (const auto& s : tokenizer_.stopwords()) io::write_string(out, s);
        io::write_u32(out, static_cast<std::uint32_t>(terms_.size()));
        for (std::size_t i = 0; i < terms_.size(); ++i) {
            io::write_string(out, terms_[i]);
            io::write_u32(out, df_[i]);
        }
        io::write_u32(out, static_cast<std::uint32_t>(doc_ids_.size()));
        io::write_f64(out, avg_len_);
        for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
            io::write_string(out, doc_ids_[d]);
            io::write_u32(out, doc_len_[d]);
            io::write_u32(out, static_cast<std::uint32_t>(doc_terms_[d].size()));
            for (const auto& tc : doc_terms_[d]) {
                io::write_u32(out, tc.term);
                io::write_u32(out, tc.count);
            }
        }
    });
}

TermIndex TermIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    const std::string what = "index file '" + path.string() + "'";
    io::expect_magic(in, kIndexMagic, what);
    const auto version = io::read_u32(in);
    if (version != kTokenizerVersion) {
        throw ParseError(what + ": tokenizer version " + std::to_string(version) + " is not supported");
    }
    TermIndex idx;
    idx.params_.k1 = io::read_f64(in);
    idx.params_.b = io::read_f64(in);
    std::set<std::string> stop;
    for (auto n = io::read_u32(in); n > 0; --n) stop.insert(io::read_string(in));
    idx.tokenizer_ = Tokenizer(std::move(stop));
    const auto nterms = io::read_u32(in);
    idx.terms_.reserve(nterms);
    idx.df_.reserve(nterms);
    for (std::uint32_t i = 0; i < nterms; ++i) {
        idx.terms_.push_back(io::read_string(in));
        idx.df_.push_back(io::read_u32(in));
    }
    const auto ndocs = io::read_u32(in);
    idx.avg_len_ = io::read_f64(in);
    idx.doc_ids_.reserve(ndocs);
    idx.doc_len_.reserve(ndocs);
    idx.doc_terms_.resize(ndocs);
    for (std::uint32_t d = 0; d < ndocs; ++d) {
        idx.doc_ids_.push_back(io::read_string(in));
        idx.doc_len_.push_back(io::read_u32(in));
        const auto n = io::read_u32(in);
        auto& row = idx.doc_terms_[d];
        row.reserve(n);
        for (std::uint32_t k = 0; k < n; ++k) {
            const auto term = io::read_u32(in);
            const auto count = io::read_u32(in);
            if (term >= nterms) throw ParseError(what + ": term id out of range");
            row.push_back({term, count});
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError(what + ": trailing bytes");
    idx.rebuild_lookups();
    return idx;
}

bool operator==(const TermIndex& a, const TermIndex& b) {
    return a.params_ == b.params_ && a.tokenizer_.stopwords() == b.tokenizer_.stopwords() && a.terms_ == b.terms_ &&
           a.df_ == b.df_ && a.doc_ids_ == b.doc_ids_ && a.doc_len_ == b.doc_len_ && a.doc_terms_ == b.doc_terms_ &&
           a.avg_len_ == b.avg_len_;
}

double rsj_weight(std::size_t num_docs, std::uint32_t df) {
    const double n = static_cast<double>(num_docs);
    const double f = static_cast<double>(df);
    return std::log(1.0 + (n - f + 0.5) / (f + 0.5));
}

double rsj_weight(const TermIndex& index, std::string_view term) { return rsj_weight(index.num_docs(), index.df(term)); }

double bm25_score(const TermIndex& index, std::span<const std::string> query_terms, const std::string& doc_id,
                  const BM25Params& params) {
    const auto doc = index.doc_index(doc_id);
    std::vector<TermId> ids;
    ids.reserve(query_terms.size());
    for (const auto& t : query_terms) {
        TermId id = 0;
        if (index.lookup(t, id)) ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return index.score(ids, doc, params);
}

double sparse_pair_score(const TermIndex& index, std::string_view text_a, const std::string& doc_id_b,
                         const BM25Params& params) {
    const auto doc = index.doc_index(doc_id_b);
    return index.score(index.query_terms(text_a), doc, params);
}

}  // namespace hybrank
