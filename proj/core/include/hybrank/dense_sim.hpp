#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace hybrank {

/// Fixed-dimension float vectors keyed by id. Queries and passages share the
/// namespace; query rows are stored under "q:<qid>".
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    explicit EmbeddingStore(std::size_t dim) : dim_(dim) {}

    /// Throws Error on duplicate id, wrong dimension or non-finite values.
    void add(const std::string& id, std::span<const float> vec);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool contains(const std::string& id) const { return rows_.count(id) > 0; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }

    /// Throws LookupError naming the id.
    std::span<const float> vector(const std::string& id) const;
    std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

    /// Writes the binary vector file and the newline-delimited id file.
    void save(const std::filesystem::path& vec_path, const std::filesystem::path& id_path) const;

private:
    std::size_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> data_;
    std::unordered_map<std::string, std::size_t> rows_;
};

inline std::string query_key(const std::string& qid) { return "q:" + qid; }

/// Reads the "HYBEMB1\0" binary file plus its id list.
EmbeddingStore load_embeddings(const std::filesystem::path& vec_path, const std::filesystem::path& id_path);

/// Parses "id v1 v2 ... vD" lines into a store (all rows must agree on D).
EmbeddingStore load_text_embeddings(const std::filesystem::path& path);

/// Inner product accumulated in double precision.
double dot(std::span<const float> a, std::span<const float> b);

/// Throws LookupError for a missing id.
double dense_score(const EmbeddingStore& store, const std::string& id_a, const std::string& id_b);

}  // namespace hybrank
