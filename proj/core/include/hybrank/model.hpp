#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hybrank/corpus_io.hpp"
#include "hybrank/features.hpp"
#include "hybrank/layers.hpp"
#include "hybrank/tensor.hpp"

namespace hybrank {

struct ModelConfig {
    std::size_t dim = 64;
    std::size_t inner = 256;
    std::size_t heads = 8;
    std::size_t layers_inter = 2;
    std::size_t layers_aggr = 1;
    /// Rows of the position table; lists need N + 1 <= max_rank.
    std::size_t max_rank = 101;

    bool use_interaction = true;
    bool use_query_row = true;
    bool use_positions = true;
    std::array<bool, 2> channels_active{true, true};
    /// Separate [CLS] vectors for the query and passage sequences.
    bool separate_cls = false;

    Activation activation = Activation::gelu;
    bool pre_norm = false;
    std::uint64_t init_seed = 0;

    /// Throws Error on inconsistent settings.
    void validate() const;
    LayerConfig layer() const;

    /// Flat key=value lines, stable ordering.
    std::string to_text() const;
    /// Accepts the to_text() format; unknown keys are an error.
    static ModelConfig from_text(const std::string& text);

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Exact scalar count of the parameters a model with `cfg` owns.
std::size_t param_count(const ModelConfig& cfg);

/// rows x cols grid of D-dim vectors; values row (i * cols + j) holds cell (i, j).
struct Embeddings {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Matrix values;

    auto cell(std::size_t i, std::size_t j) { return values.row(static_cast<Eigen::Index>(i * cols + j)); }
    auto cell(std::size_t i, std::size_t j) const { return values.row(static_cast<Eigen::Index>(i * cols + j)); }
};

/// Collaborative reranker over a normalized SimTensor.
class HybRankModel {
public:
    struct Cache {
        Matrix features;  // (R * L) x 2 after channel masking
        std::size_t rows = 0;
        std::size_t cols = 0;
        std::size_t first_row = 0;  // 1 when the query row is replaced by the learned token
        Encoder::Cache inter;
        Encoder::Cache aggr;
        Encoder::Cache token;
        Matrix h;  // rows x D; row 0 is the query representation
    };

    explicit HybRankModel(const ModelConfig& cfg);
    HybRankModel(HybRankModel&&) = default;
    HybRankModel& operator=(HybRankModel&&) = default;

    static HybRankModel load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    const ModelConfig& config() const noexcept { return cfg_; }
    ParamStore& params() noexcept { return params_; }
    const ParamStore& params() const noexcept { return params_; }

    /// e_ij = x_ij W for every cell; no bias. Inactive channels contribute zero.
    Embeddings project(const SimTensor& features) const;

    /// Encodes each anchor column [e_q; e_1; ...; e_N] (plus rank positions)
    /// with the interaction stack. Identity when interaction is disabled.
    /// Throws Error when N + 1 exceeds max_rank.
    Embeddings interact(const Embeddings& emb) const;

    /// [CLS] output of the aggregation stack over one row's L embeddings (L x D).
    Eigen::VectorXd aggregate(const Matrix& sequence, bool query_row = false) const;

    /// Aggregated representation of the learned query token (query-row ablation).
    Eigen::VectorXd encode_query_token() const;

    /// s_i = h_q . h_{p_i} for i = 1..N.
    std::vector<double> score_all(const SimTensor& features) const;

    /// score_all that records what backward() needs.
    std::vector<double> forward(const SimTensor& features, Cache* cache) const;

    /// Accumulates d(loss)/d(params) given d(loss)/d(scores).
    void backward(std::span<const double> dscores, const Cache& cache);

private:
    ModelConfig cfg_;
    ParamStore params_;
    Parameter* proj_ = nullptr;
    Parameter* pos_ = nullptr;
    Parameter* cls_ = nullptr;
    Parameter* cls_query_ = nullptr;
    Parameter* query_token_ = nullptr;
    Encoder inter_;
    Encoder aggr_;

    void check_input(const SimTensor& features) const;
    Matrix masked_features(const SimTensor& features) const;
    const Parameter& query_cls() const { return cls_query_ ? *cls_query_ : *cls_; }
};

/// Stable descending sort; ties keep the original (lower) rank first.
/// Throws Error when the lengths differ.
std::vector<ScoredDoc> rerank(std::span<const std::string> list, std::span<const double> scores);

}  // namespace hybrank
