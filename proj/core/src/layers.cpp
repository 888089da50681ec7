#include "hybrank/layers.hpp"

#include <cmath>

#include "hybrank/error.hpp"

namespace hybrank {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_cols(const Matrix& x, std::size_t expected, const char* what) {
    if (static_cast<std::size_t>(x.cols()) != expected) {
        throw ShapeError(std::string(what) + ": expected trailing dimension " + std::to_string(expected) + ", got " +
                         std::to_string(x.cols()));
    }
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x); }

// ---------------------------------------------------------------- Linear

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, bool bias, Rng& rng)
    : in_(in), out_(out) {
    weight_ = &store.add(name + ".weight", {in, out}, Init::normal, &rng);
    if (bias) bias_ = &store.add(name + ".bias", {out}, Init::zeros);
}

Matrix Linear::forward(const Matrix& x, Cache* cache) const {
    check_cols(x, in_, "linear");
    Matrix y = x * weight_->value.matrix();
    if (bias_) y.rowwise() += bias_->value.matrix().row(0);
    if (cache) cache->x = x;
    return y;
}

Matrix Linear::backward(const Matrix& dy, const Cache& cache) const {
    weight_->grad.matrix().noalias() += cache.x.transpose() * dy;
    if (bias_) bias_->grad.matrix().row(0) += dy.colwise().sum();
    return dy * weight_->value.matrix().transpose();
}

// ------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, std::size_t dim) : dim_(dim) {
    gain_ = &store.add(name + ".gain", {dim}, Init::ones);
    bias_ = &store.add(name + ".bias", {dim}, Init::zeros);
}

Matrix LayerNorm::forward(const Matrix& x, Cache* cache) const {
    check_cols(x, dim_, "layer_norm");
    const auto n = static_cast<double>(dim_);
    Matrix xhat(x.rows(), x.cols());
    Eigen::VectorXd inv_std(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).sum() / n;
        const auto centered = (x.row(r).array() - mean).matrix();
        const double var = centered.squaredNorm() / n;
        inv_std(r) = 1.0 / std::sqrt(var + kEps);
        xhat.row(r) = centered * inv_std(r);
    }
    Matrix y = xhat;
    y.array().rowwise() *= gain_->value.matrix().row(0).array();
    y.rowwise() += bias_->value.matrix().row(0);
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

Matrix LayerNorm::backward(const Matrix& dy, const Cache& cache) const {
    const auto n = static_cast<double>(dim_);
    gain_->grad.matrix().row(0) += dy.cwiseProduct(cache.xhat).colwise().sum();
    bias_->grad.matrix().row(0) += dy.colwise().sum();
    Matrix dxhat = dy;
    dxhat.array().rowwise() *= gain_->value.matrix().row(0).array();
    Matrix dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const double mean_d = dxhat.row(r).sum() / n;
        const double mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) / n;
        dx.row(r) = cache.inv_std(r) * (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx).matrix();
    }
    return dx;
}

// ---------------------------------------------------- MultiHeadAttention

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name, std::size_t dim, std::size_t heads,
                                       Rng& rng)
    : dim_(dim), heads_(heads) {
    if (heads == 0 || dim % heads != 0) {
        throw ShapeError("attention dimension " + std::to_string(dim) + " is not divisible by " +
                         std::to_string(heads) + " heads");
    }
    q_ = Linear(store, name + ".query", dim, dim, true, rng);
    k_ = Linear(store, name + ".key", dim, dim, true, rng);
    v_ = Linear(store, name + ".value", dim, dim, true, rng);
    out_ = Linear(store, name + ".output", dim, dim, true, rng);
}

Matrix MultiHeadAttention::forward(const Matrix& q_in, const Matrix& k_in, const Matrix& v_in, std::size_t seq_len,
                                   Cache* cache) const {
    if (seq_len == 0 || q_in.rows() % static_cast<Eigen::Index>(seq_len) != 0 || k_in.rows() != q_in.rows() ||
        v_in.rows() != q_in.rows()) {
        throw ShapeError("attention inputs must hold whole sequences of equal length");
    }
    const auto S = static_cast<Eigen::Index>(seq_len);
    const auto B = q_in.rows() / S;
    const auto dh = static_cast<Eigen::Index>(dim_ / heads_);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix q = q_.forward(q_in, cache ? &cache->q_in : nullptr);
    Matrix k = k_.forward(k_in, cache ? &cache->k_in : nullptr);
    Matrix v = v_.forward(v_in, cache ? &cache->v_in : nullptr);

    Matrix ctx(q.rows(), q.cols());
    if (cache) {
        cache->weights.clear();
        cache->weights.reserve(static_cast<std::size_t>(B) * heads_);
    }
    Matrix a(S, S);
    for (Eigen::Index b = 0; b < B; ++b) {
        for (Eigen::Index h = 0; h < static_cast<Eigen::Index>(heads_); ++h) {
            const auto qb = q.block(b * S, h * dh, S, dh);
            const auto kb = k.block(b * S, h * dh, S, dh);
            const auto vb = v.block(b * S, h * dh, S, dh);
            a.noalias() = (qb * kb.transpose()) * scale;
            for (Eigen::Index r = 0; r < S; ++r) {
                const double mx = a.row(r).maxCoeff();
                a.row(r) = (a.row(r).array() - mx).exp().matrix();
                a.row(r) /= a.row(r).sum();
            }
            ctx.block(b * S, h * dh, S, dh).noalias() = a * vb;
            if (cache) cache->weights.push_back(a);
        }
    }
    Matrix y = out_.forward(ctx, cache ? &cache->out_in : nullptr);
    if (cache) {
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->batch = static_cast<std::size_t>(B);
        cache->seq = seq_len;
    }
    return y;
}

MultiHeadAttention::Grads MultiHeadAttention::backward(const Matrix& dy, const Cache& cache) const {
    const auto S = static_cast<Eigen::Index>(cache.seq);
    const auto B = static_cast<Eigen::Index>(cache.batch);
    const auto dh = static_cast<Eigen::Index>(dim_ / heads_);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    const Matrix dctx = out_.backward(dy, cache.out_in);
    Matrix dq(dctx.rows(), dctx.cols());
    Matrix dk(dctx.rows(), dctx.cols());
    Matrix dv(dctx.rows(), dctx.cols());
    Matrix da(S, S);
    for (Eigen::Index b = 0; b < B; ++b) {
        for (Eigen::Index h = 0; h < static_cast<Eigen::Index>(heads_); ++h) {
            const Matrix& a = cache.weights[static_cast<std::size_t>(b * static_cast<Eigen::Index>(heads_) + h)];
            const auto dcb = dctx.block(b * S, h * dh, S, dh);
            const auto qb = cache.q.block(b * S, h * dh, S, dh);
            const auto kb = cache.k.block(b * S, h * dh, S, dh);
            const auto vb = cache.v.block(b * S, h * dh, S, dh);
            da.noalias() = dcb * vb.transpose();
            dv.block(b * S, h * dh, S, dh).noalias() = a.transpose() * dcb;
            // Softmax Jacobian: ds = a * (da - rowsum(da * a)).
            const Eigen::VectorXd inner = da.cwiseProduct(a).rowwise().sum();
            da.colwise() -= inner;
            da = da.cwiseProduct(a) * scale;
            dq.block(b * S, h * dh, S, dh).noalias() = da * kb;
            dk.block(b * S, h * dh, S, dh).noalias() = da.transpose() * qb;
        }
    }
    return {q_.backward(dq, cache.q_in), k_.backward(dk, cache.k_in), v_.backward(dv, cache.v_in)};
}

Matrix MultiHeadAttention::backward_self(const Matrix& dy, const Cache& cache) const {
    auto g = backward(dy, cache);
    g.dq += g.dk;
    g.dq += g.dv;
    return std::move(g.dq);
}

// ----------------------------------------------------------- FeedForward

FeedForward::FeedForward(ParamStore& store, const std::string& name, std::size_t dim, std::size_t inner,
                         Activation act, Rng& rng)
    : act_(act) {
    fc1_ = Linear(store, name + ".fc1", dim, inner, true, rng);
    fc2_ = Linear(store, name + ".fc2", inner, dim, true, rng);
}

Matrix FeedForward::forward(const Matrix& x, Cache* cache) const {
    Matrix pre = fc1_.forward(x, cache ? &cache->in1 : nullptr);
    Matrix hidden = act_ == Activation::gelu ? Matrix(pre.unaryExpr([](double z) { return gelu(z); }))
                                             : Matrix(pre.cwiseMax(0.0));
    Matrix y = fc2_.forward(hidden, cache ? &cache->in2 : nullptr);
    if (cache) cache->pre = std::move(pre);
    return y;
}

Matrix FeedForward::backward(const Matrix& dy, const Cache& cache) const {
    Matrix dh = fc2_.backward(dy, cache.in2);
    if (act_ == Activation::gelu) {
        dh.array() *= cache.pre.unaryExpr([](double z) { return gelu_grad(z); }).array();
    } else {
        dh.array() *= (cache.pre.array() > 0.0).cast<double>();
    }
    return fc1_.backward(dh, cache.in1);
}

// ------------------------------------------------------ TransformerLayer

TransformerLayer::TransformerLayer(ParamStore& store, const std::string& name, const LayerConfig& cfg, Rng& rng)
    : pre_norm_(cfg.pre_norm) {
    attn_ = MultiHeadAttention(store, name + ".attn", cfg.dim, cfg.heads, rng);
    ln1_ = LayerNorm(store, name + ".ln1", cfg.dim);
    ffn_ = FeedForward(store, name + ".ffn", cfg.dim, cfg.inner, cfg.activation, rng);
    ln2_ = LayerNorm(store, name + ".ln2", cfg.dim);
}

Matrix TransformerLayer::forward(const Matrix& x, std::size_t seq_len, Cache* cache) const {
    if (pre_norm_) {
        Matrix x1 = x + attn_.forward_self(ln1_.forward(x, cache ? &cache->ln1 : nullptr), seq_len,
                                           cache ? &cache->attn : nullptr);
        Matrix y = ffn_.forward(ln2_.forward(x1, cache ? &cache->ln2 : nullptr), cache ? &cache->ffn : nullptr);
        y += x1;
        return y;
    }
    Matrix r1 = attn_.forward_self(x, seq_len, cache ? &cache->attn : nullptr);
    r1 += x;
    Matrix x1 = ln1_.forward(r1, cache ? &cache->ln1 : nullptr);
    Matrix r2 = ffn_.forward(x1, cache ? &cache->ffn : nullptr);
    r2 += x1;
    return ln2_.forward(r2, cache ? &cache->ln2 : nullptr);
}

Matrix TransformerLayer::backward(const Matrix& dy, const Cache& cache) const {
    if (pre_norm_) {
        Matrix dx1 = dy + ln2_.backward(ffn_.backward(dy, cache.ffn), cache.ln2);
        Matrix dx = dx1 + ln1_.backward(attn_.backward_self(dx1, cache.attn), cache.ln1);
        return dx;
    }
    const Matrix dr2 = ln2_.backward(dy, cache.ln2);
    Matrix dx1 = dr2 + ffn_.backward(dr2, cache.ffn);
    const Matrix dr1 = ln1_.backward(dx1, cache.ln1);
    Matrix dx = dr1 + attn_.backward_self(dr1, cache.attn);
    return dx;
}

std::size_t TransformerLayer::param_count(const LayerConfig& cfg) {
    const auto d = cfg.dim;
    const auto attention = 4 * (d * d + d);
    const auto norms = 2 * 2 * d;
    const auto ffn = d * cfg.inner + cfg.inner + cfg.inner * d + d;
    return attention + norms + ffn;
}

// --------------------------------------------------------------- Encoder

Encoder::Encoder(ParamStore& store, const std::string& name, std::size_t layers, const LayerConfig& cfg, Rng& rng) {
    layers_.reserve(layers);
    for (std::size_t i = 0; i < layers; ++i) layers_.emplace_back(store, name + "." + std::to_string(i), cfg, rng);
}

Matrix Encoder::forward(const Matrix& x, std::size_t seq_len, Cache* cache) const {
    if (cache) cache->layers.resize(layers_.size());
    Matrix h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) h = layers_[i].forward(h, seq_len, cache ? &cache->layers[i] : nullptr);
    return h;
}

Matrix Encoder::backward(const Matrix& dy, const Cache& cache) const {
    Matrix d = dy;
    for (std::size_t i = layers_.size(); i-- > 0;) d = layers_[i].backward(d, cache.layers[i]);
    return d;
}

}  // namespace hybrank
