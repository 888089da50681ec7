#include "hybrank/model.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "hybrank/error.hpp"

namespace hybrank {

// ------------------------------------------------------------ ModelConfig

void ModelConfig::validate() const {
    if (dim == 0 || inner == 0 || heads == 0) throw Error("model dimensions must be positive");
    if (dim % heads != 0) {
        throw Error("embedding dimension " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) +
                    " heads");
    }
    if (max_rank < 2) throw Error("max_rank must be at least 2");
    if (layers_aggr == 0) throw Error("the aggregation stack needs at least one layer");
    if (use_interaction && layers_inter == 0) throw Error("interaction enabled with zero interaction layers");
    if (!channels_active[0] && !channels_active[1]) throw Error("at least one feature channel must be active");
}

LayerConfig ModelConfig::layer() const { return {dim, inner, heads, activation, pre_norm}; }

std::string ModelConfig::to_text() const {
    std::ostringstream ss;
    ss << "dim=" << dim << '\n'
       << "inner=" << inner << '\n'
       << "heads=" << heads << '\n'
       << "layers_inter=" << layers_inter << '\n'
       << "layers_aggr=" << layers_aggr << '\n'
       << "max_rank=" << max_rank << '\n'
       << "use_interaction=" << use_interaction << '\n'
       << "use_query_row=" << use_query_row << '\n'
       << "use_positions=" << use_positions << '\n'
       << "sparse_channel=" << channels_active[0] << '\n'
       << "dense_channel=" << channels_active[1] << '\n'
       << "separate_cls=" << separate_cls << '\n'
       << "activation=" << (activation == Activation::gelu ? "gelu" : "relu") << '\n'
       << "pre_norm=" << pre_norm << '\n'
       << "init_seed=" << init_seed << '\n';
    return ss.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
    ModelConfig cfg;
    std::istringstream ss(text);
    std::string line;
    auto as_size = [](const std::string& k, const std::string& v) {
        try {
            std::size_t used = 0;
            const auto n = std::stoull(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return static_cast<std::size_t>(n);
        } catch (const std::exception&) {
            throw ParseError("model config: '" + k + "' expects an integer, got '" + v + "'");
        }
    };
    auto as_bool = [](const std::string& k, const std::string& v) {
        if (v == "1" || v == "true") return true;
        if (v == "0" || v == "false") return false;
        throw ParseError("model config: '" + k + "' expects a boolean, got '" + v + "'");
    };
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("model config: malformed line '" + line + "'");
        const auto k = line.substr(0, eq);
        const auto v = line.substr(eq + 1);
        if (k == "dim") cfg.dim = as_size(k, v);
        else if (k == "inner") cfg.inner = as_size(k, v);
        else if (k == "heads") cfg.heads = as_size(k, v);
        else if (k == "layers_inter") cfg.layers_inter = as_size(k, v);
        else if (k == "layers_aggr") cfg.layers_aggr = as_size(k, v);
        else if (k == "max_rank") cfg.max_rank = as_size(k, v);
        else if (k == "use_interaction") cfg.use_interaction = as_bool(k, v);
        else if (k == "use_query_row") cfg.use_query_row = as_bool(k, v);
        else if (k == "use_positions") cfg.use_positions = as_bool(k, v);
        else if (k == "sparse_channel") cfg.channels_active[0] = as_bool(k, v);
        else if (k == "dense_channel") cfg.channels_active[1] = as_bool(k, v);
        else if (k == "separate_cls") cfg.separate_cls = as_bool(k, v);
        else if (k == "activation") {
            if (v == "gelu") cfg.activation = Activation::gelu;
            else if (v == "relu") cfg.activation = Activation::relu;
            else throw ParseError("model config: unknown activation '" + v + "'");
        } else if (k == "pre_norm") cfg.pre_norm = as_bool(k, v);
        else if (k == "init_seed") cfg.init_seed = as_size(k, v);
        else throw ParseError("model config: unknown key '" + k + "'");
    }
    cfg.validate();
    return cfg;
}

std::size_t param_count(const ModelConfig& cfg) {
    cfg.validate();
    const auto d = cfg.dim;
    const std::size_t projection = 2 * d;
    const std::size_t positions = cfg.max_rank * d;
    const std::size_t cls = (cfg.separate_cls ? 2 : 1) * d;
    const std::size_t query_token = d;
    const std::size_t layers = (cfg.layers_inter + cfg.layers_aggr) * TransformerLayer::param_count(cfg.layer());
    return projection + positions + cls + query_token + layers;
}

// ----------------------------------------------------------- HybRankModel

HybRankModel::HybRankModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.init_seed);
    const auto d = cfg_.dim;
    proj_ = &params_.add("projection.weight", {2, d}, Init::normal, &rng);
    pos_ = &params_.add("rank_position", {cfg_.max_rank, d}, Init::normal, &rng);
    cls_ = &params_.add("cls", {1, d}, Init::normal, &rng);
    if (cfg_.separate_cls) cls_query_ = &params_.add("cls_query", {1, d}, Init::normal, &rng);
    query_token_ = &params_.add("query_token", {1, d}, Init::normal, &rng);
    const auto layer = cfg_.layer();
    inter_ = Encoder(params_, "interaction", cfg_.layers_inter, layer, rng);
    aggr_ = Encoder(params_, "aggregation", cfg_.layers_aggr, layer, rng);
}

HybRankModel HybRankModel::load(const std::filesystem::path& path) {
    auto ck = load_checkpoint(path);
    HybRankModel model(ModelConfig::from_text(ck.config));
    model.params_.assign(ck.tensors);
    return model;
}

void HybRankModel::save(const std::filesystem::path& path) const { save_checkpoint(path, cfg_.to_text(), params_); }

void HybRankModel::check_input(const SimTensor& features) const {
    if (features.rows() < 2) throw ShapeError("feature tensor needs a query row and at least one passage");
    if (features.rows() > cfg_.max_rank) {
        throw Error("list of " + std::to_string(features.num_passages()) + " passages exceeds the position table (" +
                    "max_rank " + std::to_string(cfg_.max_rank) + ")");
    }
    if (cfg_.use_query_row && !features.query_row_active) {
        throw Error("features carry no query row; use a model with use_query_row disabled");
    }
}

Matrix HybRankModel::masked_features(const SimTensor& features) const {
    const auto cells = static_cast<Eigen::Index>(features.rows() * features.cols());
    Matrix x = ConstMatrixMap(features.values().data(), cells, 2);
    for (std::size_t c = 0; c < 2; ++c) {
        if (!cfg_.channels_active[c] || !features.channel_active[c]) x.col(static_cast<Eigen::Index>(c)).setZero();
    }
    return x;
}

Embeddings HybRankModel::project(const SimTensor& features) const {
    Embeddings e{features.rows(), features.cols(), masked_features(features) * proj_->value.matrix()};
    return e;
}

namespace {

// Gathers column sequences (sequence j = rows first..R-1 of column j) into a
// sequence-major matrix, adding rank positions when given.
Matrix gather_columns(const Embeddings& emb, std::size_t first, const Parameter* pos) {
    const std::size_t S = emb.rows - first;
    Matrix x(static_cast<Eigen::Index>(emb.cols * S), emb.values.cols());
    for (std::size_t j = 0; j < emb.cols; ++j) {
        for (std::size_t i = first; i < emb.rows; ++i) {
            auto r = x.row(static_cast<Eigen::Index>(j * S + (i - first)));
            r = emb.cell(i, j);
            if (pos) r += pos->value.matrix().row(static_cast<Eigen::Index>(i));
        }
    }
    return x;
}

// Builds [cls; row_i] sequences for rows first..R-1.
Matrix gather_rows(const Embeddings& emb, std::size_t first, const Parameter& cls, const Parameter& cls_query) {
    const std::size_t S = emb.cols + 1;
    Matrix x(static_cast<Eigen::Index>((emb.rows - first) * S), emb.values.cols());
    for (std::size_t i = first; i < emb.rows; ++i) {
        const auto base = static_cast<Eigen::Index>((i - first) * S);
        x.row(base) = (i == 0 ? cls_query : cls).value.matrix().row(0);
        for (std::size_t j = 0; j < emb.cols; ++j) x.row(base + 1 + static_cast<Eigen::Index>(j)) = emb.cell(i, j);
    }
    return x;
}

}  // namespace

Embeddings HybRankModel::interact(const Embeddings& emb) const {
    if (!cfg_.use_interaction) return emb;
    if (emb.rows > cfg_.max_rank) {
        throw Error("sequence of " + std::to_string(emb.rows) + " rows exceeds max_rank " +
                    std::to_string(cfg_.max_rank));
    }
    const std::size_t first = cfg_.use_query_row ? 0 : 1;
    const std::size_t S = emb.rows - first;
    const Matrix out = inter_.forward(gather_columns(emb, first, cfg_.use_positions ? pos_ : nullptr), S, nullptr);
    Embeddings result = emb;
    for (std::size_t j = 0; j < emb.cols; ++j) {
        for (std::size_t i = first; i < emb.rows; ++i) result.cell(i, j) = out.row(static_cast<Eigen::Index>(j * S + i - first));
    }
    return result;
}

Eigen::VectorXd HybRankModel::aggregate(const Matrix& sequence, bool query_row) const {
    Matrix x(sequence.rows() + 1, sequence.cols());
    x.row(0) = (query_row ? query_cls() : *cls_).value.matrix().row(0);
    x.bottomRows(sequence.rows()) = sequence;
    const Matrix out = aggr_.forward(x, static_cast<std::size_t>(x.rows()), nullptr);
    return out.row(0).transpose();
}

Eigen::VectorXd HybRankModel::encode_query_token() const { return aggregate(query_token_->value.matrix(), true); }

std::vector<double> HybRankModel::score_all(const SimTensor& features) const { return forward(features, nullptr); }

std::vector<double> HybRankModel::forward(const SimTensor& features, Cache* cache) const {
    check_input(features);
    const std::size_t R = features.rows();
    const std::size_t L = features.cols();
    const std::size_t first = cfg_.use_query_row ? 0 : 1;
    const auto D = static_cast<Eigen::Index>(cfg_.dim);

    Matrix x = masked_features(features);
    Embeddings emb{R, L, x * proj_->value.matrix()};

    if (cfg_.use_interaction) {
        const std::size_t S = R - first;
        const Matrix out = inter_.forward(gather_columns(emb, first, cfg_.use_positions ? pos_ : nullptr), S,
                                          cache ? &cache->inter : nullptr);
        for (std::size_t j = 0; j < L; ++j) {
            for (std::size_t i = first; i < R; ++i) emb.cell(i, j) = out.row(static_cast<Eigen::Index>(j * S + i - first));
        }
    }

    const std::size_t S = L + 1;
    const Matrix out = aggr_.forward(gather_rows(emb, first, *cls_, query_cls()), S, cache ? &cache->aggr : nullptr);
    Matrix h(static_cast<Eigen::Index>(R), D);
    for (std::size_t i = first; i < R; ++i) h.row(static_cast<Eigen::Index>(i)) = out.row(static_cast<Eigen::Index>((i - first) * S));
    if (first == 1) {
        Matrix tok(2, D);
        tok.row(0) = query_cls().value.matrix().row(0);
        tok.row(1) = query_token_->value.matrix().row(0);
        h.row(0) = aggr_.forward(tok, 2, cache ? &cache->token : nullptr).row(0);
    }

    std::vector<double> scores(R - 1);
    for (std::size_t i = 1; i < R; ++i) scores[i - 1] = h.row(0).dot(h.row(static_cast<Eigen::Index>(i)));

    if (cache) {
        cache->features = std::move(x);
        cache->rows = R;
        cache->cols = L;
        cache->first_row = first;
        cache->h = std::move(h);
    }
    return scores;
}

void HybRankModel::backward(std::span<const double> dscores, const Cache& cache) {
    const std::size_t R = cache.rows;
    const std::size_t L = cache.cols;
    const std::size_t first = cache.first_row;
    const auto D = static_cast<Eigen::Index>(cfg_.dim);
    if (dscores.size() + 1 != R) throw ShapeError("score gradient length does not match the cached forward pass");

    // s_i = h_0 . h_i
    Matrix dh = Matrix::Zero(static_cast<Eigen::Index>(R), D);
    for (std::size_t i = 1; i < R; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        dh.row(0) += dscores[i - 1] * cache.h.row(ii);
        dh.row(ii) = dscores[i - 1] * cache.h.row(0);
    }

    auto cls_grad = cls_->grad.matrix();
    auto query_cls_grad = (cls_query_ ? cls_query_ : cls_)->grad.matrix();

    if (first == 1) {
        Matrix dtok = Matrix::Zero(2, D);
        dtok.row(0) = dh.row(0);
        const Matrix din = aggr_.backward(dtok, cache.token);
        query_cls_grad.row(0) += din.row(0);
        query_token_->grad.matrix().row(0) += din.row(1);
    }

    const std::size_t S = L + 1;
    Matrix dout = Matrix::Zero(static_cast<Eigen::Index>((R - first) * S), D);
    for (std::size_t i = first; i < R; ++i) dout.row(static_cast<Eigen::Index>((i - first) * S)) = dh.row(static_cast<Eigen::Index>(i));
    const Matrix din = aggr_.backward(dout, cache.aggr);

    Embeddings demb{R, L, Matrix::Zero(static_cast<Eigen::Index>(R * L), D)};
    for (std::size_t i = first; i < R; ++i) {
        const auto base = static_cast<Eigen::Index>((i - first) * S);
        if (i == 0) {
            query_cls_grad.row(0) += din.row(base);
        } else {
            cls_grad.row(0) += din.row(base);
        }
        for (std::size_t j = 0; j < L; ++j) demb.cell(i, j) = din.row(base + 1 + static_cast<Eigen::Index>(j));
    }

    if (cfg_.use_interaction) {
        const std::size_t Si = R - first;
        Matrix dcols(static_cast<Eigen::Index>(L * Si), D);
        for (std::size_t j = 0; j < L; ++j) {
            for (std::size_t i = first; i < R; ++i) dcols.row(static_cast<Eigen::Index>(j * Si + i - first)) = demb.cell(i, j);
        }
        const Matrix dx = inter_.backward(dcols, cache.inter);
        auto pos_grad = pos_->grad.matrix();
        for (std::size_t j = 0; j < L; ++j) {
            for (std::size_t i = first; i < R; ++i) {
                const auto r = dx.row(static_cast<Eigen::Index>(j * Si + i - first));
                demb.cell(i, j) = r;
                if (cfg_.use_positions) pos_grad.row(static_cast<Eigen::Index>(i)) += r;
            }
        }
    }

    proj_->grad.matrix().noalias() += cache.features.transpose() * demb.values;
}

std::vector<ScoredDoc> rerank(std::span<const std::string> list, std::span<const double> scores) {
    if (list.size() != scores.size()) {
        throw Error("rerank: " + std::to_string(list.size()) + " passages but " + std::to_string(scores.size()) +
                    " scores");
    }
    std::vector<std::size_t> order(list.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<ScoredDoc> out;
    out.reserve(list.size());
    for (auto k : order) out.push_back({list[k], scores[k]});
    return out;
}

}  // namespace hybrank
