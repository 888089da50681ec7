#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hybrank/random.hpp"

namespace hybrank {

/// Row-major dense matrix used for activations: one token per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

/// Dense double-precision tensor with an explicit shape.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// View as [size / last_dim, last_dim].
    MatrixMap matrix();
    ConstMatrixMap matrix() const;

    void fill(double v);

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> shape_;
    // Fixed alignment keeps Eigen's vectorized reductions on the same code path
    // for every allocation, which makes results bit-reproducible.
    std::vector<double, Eigen::aligned_allocator<double>> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

enum class Init { zeros, ones, normal };

/// Named parameters with gradient accumulators, iterated in name order.
/// Parameter addresses are stable for the lifetime of the store (including moves).
class ParamStore {
public:
    ParamStore() = default;
    ParamStore(const ParamStore&) = delete;
    ParamStore& operator=(const ParamStore&) = delete;
    ParamStore(ParamStore&&) = default;
    ParamStore& operator=(ParamStore&&) = default;

    /// Throws Error on duplicate names. `normal` draws from N(0, std^2).
    Parameter& add(const std::string& name, std::vector<std::size_t> shape, Init init, Rng* rng = nullptr,
                   double std = 0.02);

    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    std::map<std::string, Parameter>& entries() noexcept { return params_; }
    const std::map<std::string, Parameter>& entries() const noexcept { return params_; }

    void zero_grad();
    /// Total scalar count.
    std::size_t count() const;
    double grad_norm() const;

    /// Parameter values keyed by name (for snapshots and comparisons).
    std::map<std::string, Tensor> values() const;
    /// Throws ShapeError unless names and shapes match exactly.
    void assign(const std::map<std::string, Tensor>& values);

private:
    std::map<std::string, Parameter> params_;
};

/// Checkpoint file content: the owning model's config text and named tensors.
struct Checkpoint {
    std::string config;
    std::map<std::string, Tensor> tensors;
};

/// "HYBCKP1\0", config echo, then (name, shape, f64 payload) per parameter.
void save_checkpoint(const std::filesystem::path& path, const std::string& config, const ParamStore& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hybrank
