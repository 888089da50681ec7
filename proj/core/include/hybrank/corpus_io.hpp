#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace hybrank {

struct Document {
    std::string id;
    std::string title;
    std::string text;
};

/// Ordered document collection with id lookup.
class Corpus {
public:
    Corpus() = default;
    /// Throws Error on duplicate ids.
    explicit Corpus(std::vector<Document> docs);

    const std::vector<Document>& documents() const noexcept { return docs_; }
    std::size_t size() const noexcept { return docs_.size(); }
    bool empty() const noexcept { return docs_.empty(); }
    const Document& operator[](std::size_t i) const { return docs_[i]; }

    bool contains(const std::string& id) const { return by_id_.count(id) > 0; }
    /// Throws LookupError.
    const Document& at(const std::string& id) const;

private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;

    friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

/// Query id -> ranked list, best first. std::map keeps query iteration deterministic.
using Run = std::map<std::string, std::vector<ScoredDoc>>;

/// Query id -> (doc id -> grade). A document is positive iff its grade is >= 1.
using Qrels = std::map<std::string, std::map<std::string, int>>;

using QuerySet = std::map<std::string, std::string>;

inline bool is_positive(int grade) { return grade >= 1; }

/// JSON-lines corpus: one {"id", "title"?, "text"} object per line.
Corpus load_corpus(const std::filesystem::path& path);

/// TREC run (`qid Q0 docid rank score tag`). Lists are re-sorted descending by score
/// (stable, so file order breaks ties) and truncated to `max_depth`.
Run load_run(const std::filesystem::path& path, std::size_t max_depth);

/// TREC qrels (`qid 0 docid grade`). Later duplicates overwrite earlier ones; each
/// overwrite is reported through `warnings` when provided.
Qrels load_qrels(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

/// Tab- or whitespace-separated `qid text...` lines, or JSON-lines with "id"/"text".
QuerySet load_queries(const std::filesystem::path& path);

/// Writes TREC run lines with 1-based ranks and 6-significant-digit scores.
void write_run(const Run& run, const std::filesystem::path& path, const std::string& tag);

/// Score text form used by write_run.
std::string format_score(double score);

}  // namespace hybrank
