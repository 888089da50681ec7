#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hybrank/corpus_io.hpp"
#include "hybrank/dense_sim.hpp"
#include "hybrank/sparse_sim.hpp"

namespace hybrank {

enum class FeatureMode : std::uint8_t { sparse, dense, hybrid };
enum class AnchorStrategy : std::uint8_t { top, random };

/// How rows relate to columns in a SimTensor.
enum class FeatureLayout : std::uint8_t {
    /// Row i holds similarities between entity i (query or passage) and each anchor.
    collaborative,
    /// Single column of query-passage similarities; the query row is inactive.
    query_only,
};

std::string to_string(FeatureMode m);
std::string to_string(AnchorStrategy s);
FeatureMode parse_feature_mode(const std::string& s);
AnchorStrategy parse_anchor_strategy(const std::string& s);

inline constexpr std::size_t kSparse = 0;
inline constexpr std::size_t kDense = 1;

struct NormConfig {
    double t_sparse = 100.0;
    double t_dense = 10.0;

    void validate() const;
};

struct AnchorSet {
    std::vector<std::string> ids;
    friend bool operator==(const AnchorSet&, const AnchorSet&) = default;
};

/// (N+1) x L x 2 similarity features. Row 0 is the query, rows 1..N the passages
/// in initial rank order; channel 0 is sparse, channel 1 dense.
class SimTensor {
public:
    SimTensor() = default;
    SimTensor(std::size_t rows, std::size_t cols);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t num_passages() const noexcept { return rows_ - 1; }

    double& at(std::size_t i, std::size_t j, std::size_t c) { return data_[(i * cols_ + j) * 2 + c]; }
    double at(std::size_t i, std::size_t j, std::size_t c) const { return data_[(i * cols_ + j) * 2 + c]; }
    std::span<const double> values() const noexcept { return data_; }
    std::span<double> values() noexcept { return data_; }

    std::array<bool, 2> channel_active{true, true};
    bool query_row_active = true;
    FeatureLayout layout = FeatureLayout::collaborative;

    friend bool operator==(const SimTensor&, const SimTensor&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// One query's cached reranking input.
struct QueryFeatures {
    std::string qid;
    std::vector<std::string> passage_ids;
    AnchorSet anchors;
    SimTensor tensor;

    friend bool operator==(const QueryFeatures&, const QueryFeatures&) = default;
};

/// top: the first L ids of `list`. random: L distinct ids drawn uniformly from
/// `corpus_ids` with `seed`. Throws Error when L exceeds the available ids.
AnchorSet select_anchors(std::span<const std::string> list, std::size_t L, AnchorStrategy strategy,
                         std::uint64_t seed = 0, std::span<const std::string> corpus_ids = {});

struct QueryInput {
    std::string id;
    std::string text;
};

/// Raw pair similarities. `index` is required unless mode is dense, `store`
/// unless mode is sparse. Passage rows use the indexed passage's distinct
/// terms as the sparse query; the query row uses the query text. Dense rows
/// look up "q:<qid>" for the query. Throws LookupError for unresolvable ids.
SimTensor raw_similarities(const QueryInput& query, std::span<const std::string> passages, const AnchorSet& anchors,
                           const TermIndex* index, const EmbeddingStore* store, FeatureMode mode);

/// Query-passage similarities only: an (N+1) x 1 tensor whose row i holds
/// f(q, p_i). Row 0 is zero and flagged inactive.
SimTensor raw_query_similarities(const QueryInput& query, std::span<const std::string> passages,
                                 const TermIndex* index, const EmbeddingStore* store, FeatureMode mode);

/// softmax(x / t) then min-max scaled to [-1, 1]. Constant input maps to zeros.
/// Throws Error on non-finite input or t <= 0.
std::vector<double> normalize_channel(std::span<const double> x, double t);

/// Applies normalize_channel to every active row/channel (collaborative layout)
/// or to each active channel over the passage rows (query-only layout).
SimTensor build_features(const SimTensor& raw, const NormConfig& cfg);

struct FeatureOptions {
    /// 0 selects every passage of the list (top strategy) as an anchor.
    std::size_t anchors = 0;
    AnchorStrategy strategy = AnchorStrategy::top;
    std::uint64_t seed = 0;
    FeatureMode mode = FeatureMode::hybrid;
    NormConfig norm;
    /// Build query-passage-only tensors instead of collaborative ones.
    bool query_only = false;
};

/// Builds normalized features for every query of `run`, in run order. Random
/// anchors for a query are drawn with a seed derived from `opts.seed` and the
/// query id. Throws LookupError naming the first unresolvable id.
std::vector<QueryFeatures> build_run_features(const Run& run, const QuerySet& queries, const TermIndex* index,
                                              const EmbeddingStore* store, const FeatureOptions& opts,
                                              std::span<const std::string> corpus_ids = {});

/// Per-query feature file ("HYBFEA1\0"), values in single precision.
void save_features(const QueryFeatures& f, const std::filesystem::path& path);
QueryFeatures load_features(const std::filesystem::path& path);

/// Settings that determine a feature cache's content.
struct FeatureCacheKey {
    std::string run_hash;
    AnchorStrategy strategy = AnchorStrategy::top;
    std::size_t anchors = 0;  // 0 = whole list
    std::uint64_t seed = 0;
    FeatureMode mode = FeatureMode::hybrid;
    NormConfig norm;
    bool query_only = false;

    std::string digest() const;
};

/// A directory of feature files plus manifest.json listing (qid, file).
class FeatureCache {
public:
    /// Writes all files atomically and the manifest last.
    static void write(const std::filesystem::path& dir, const FeatureCacheKey& key,
                      const std::vector<QueryFeatures>& queries);
    /// Loads every query listed in the manifest, in manifest order.
    static std::vector<QueryFeatures> read(const std::filesystem::path& dir);
    /// Returns the stored key digest, or an empty string without a manifest.
    static std::string stored_digest(const std::filesystem::path& dir);
};

}  // namespace hybrank
