#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hybrank/tensor.hpp"

namespace hybrank {

// Layers hold pointers into a ParamStore that must outlive them. forward()
// optionally fills a cache; backward() consumes that cache, accumulates
// parameter gradients (+=) and returns the input gradient.

class Linear {
public:
    struct Cache {
        Matrix x;
    };

    Linear() = default;
    /// Weight [in, out] with N(0, 0.02^2) init; bias [out] zero-initialized.
    Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, bool bias, Rng& rng);

    std::size_t in_features() const { return in_; }
    std::size_t out_features() const { return out_; }

    /// Throws ShapeError when x.cols() != in.
    Matrix forward(const Matrix& x, Cache* cache) const;
    Matrix backward(const Matrix& dy, const Cache& cache) const;

    Parameter& weight() const { return *weight_; }
    Parameter* bias() const { return bias_; }

private:
    Parameter* weight_ = nullptr;
    Parameter* bias_ = nullptr;
    std::size_t in_ = 0;
    std::size_t out_ = 0;
};

class LayerNorm {
public:
    static constexpr double kEps = 1e-5;

    struct Cache {
        Matrix xhat;
        Eigen::VectorXd inv_std;
    };

    LayerNorm() = default;
    LayerNorm(ParamStore& store, const std::string& name, std::size_t dim);

    Matrix forward(const Matrix& x, Cache* cache) const;
    Matrix backward(const Matrix& dy, const Cache& cache) const;

private:
    Parameter* gain_ = nullptr;
    Parameter* bias_ = nullptr;
    std::size_t dim_ = 0;
};

enum class Activation { gelu, relu };

/// Scaled dot-product attention over a batch of equal-length sequences.
/// Rows of every input are laid out sequence-major: row b * seq_len + s.
class MultiHeadAttention {
public:
    struct Cache {
        Linear::Cache q_in, k_in, v_in, out_in;
        Matrix q, k, v;
        std::vector<Matrix> weights;  // [batch * heads] of seq x seq
        std::size_t batch = 0;
        std::size_t seq = 0;
    };

    struct Grads {
        Matrix dq, dk, dv;
    };

    MultiHeadAttention() = default;
    /// Throws ShapeError unless dim is divisible by heads.
    MultiHeadAttention(ParamStore& store, const std::string& name, std::size_t dim, std::size_t heads, Rng& rng);

    std::size_t heads() const { return heads_; }

    Matrix forward(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t seq_len, Cache* cache) const;
    Grads backward(const Matrix& dy, const Cache& cache) const;

    Matrix forward_self(const Matrix& x, std::size_t seq_len, Cache* cache) const { return forward(x, x, x, seq_len, cache); }
    Matrix backward_self(const Matrix& dy, const Cache& cache) const;

    Linear& out_proj() { return out_; }

private:
    Linear q_, k_, v_, out_;
    std::size_t dim_ = 0;
    std::size_t heads_ = 0;
};

class FeedForward {
public:
    struct Cache {
        Linear::Cache in1, in2;
        Matrix pre;  // pre-activation
    };

    FeedForward() = default;
    FeedForward(ParamStore& store, const std::string& name, std::size_t dim, std::size_t inner, Activation act, Rng& rng);

    Matrix forward(const Matrix& x, Cache* cache) const;
    Matrix backward(const Matrix& dy, const Cache& cache) const;

    Linear& out_proj() { return fc2_; }

private:
    Linear fc1_, fc2_;
    Activation act_ = Activation::gelu;
};

struct LayerConfig {
    std::size_t dim = 64;
    std::size_t inner = 256;
    std::size_t heads = 8;
    Activation activation = Activation::gelu;
    bool pre_norm = false;
};

/// Residual encoder block. Post-norm: x' = LN(x + MHA(x)), y = LN(x' + FFN(x')).
/// Pre-norm: x' = x + MHA(LN(x)), y = x' + FFN(LN(x')).
class TransformerLayer {
public:
    struct Cache {
        MultiHeadAttention::Cache attn;
        FeedForward::Cache ffn;
        LayerNorm::Cache ln1, ln2;
    };

    TransformerLayer() = default;
    TransformerLayer(ParamStore& store, const std::string& name, const LayerConfig& cfg, Rng& rng);

    Matrix forward(const Matrix& x, std::size_t seq_len, Cache* cache) const;
    Matrix backward(const Matrix& dy, const Cache& cache) const;

    MultiHeadAttention& attention() { return attn_; }
    FeedForward& ffn() { return ffn_; }

    /// Scalar count of one layer for the config.
    static std::size_t param_count(const LayerConfig& cfg);

private:
    MultiHeadAttention attn_;
    FeedForward ffn_;
    LayerNorm ln1_, ln2_;
    bool pre_norm_ = false;
};

class Encoder {
public:
    struct Cache {
        std::vector<TransformerLayer::Cache> layers;
    };

    Encoder() = default;
    Encoder(ParamStore& store, const std::string& name, std::size_t layers, const LayerConfig& cfg, Rng& rng);

    std::size_t depth() const { return layers_.size(); }
    TransformerLayer& layer(std::size_t i) { return layers_[i]; }

    Matrix forward(const Matrix& x, std::size_t seq_len, Cache* cache) const;
    Matrix backward(const Matrix& dy, const Cache& cache) const;

private:
    std::vector<TransformerLayer> layers_;
};

double gelu(double x);
double gelu_grad(double x);

}  // namespace hybrank
