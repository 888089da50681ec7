#include "hybrank/tensor.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>

#include "hybrank/binary_io.hpp"
#include "hybrank/error.hpp"

namespace hybrank {

namespace {
constexpr io::Magic kCheckpointMagic = io::make_magic("HYBCKP1");

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
    if (shape_.empty()) throw ShapeError("tensor shape must have at least one axis");
    for (auto d : shape_) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape_));
    }
    data_.assign(product(shape_), fill);
}

MatrixMap Tensor::matrix() {
    const auto cols = static_cast<Eigen::Index>(shape_.back());
    return {data_.data(), static_cast<Eigen::Index>(data_.size()) / cols, cols};
}

ConstMatrixMap Tensor::matrix() const {
    const auto cols = static_cast<Eigen::Index>(shape_.back());
    return {data_.data(), static_cast<Eigen::Index>(data_.size()) / cols, cols};
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Parameter& ParamStore::add(const std::string& name, std::vector<std::size_t> shape, Init init, Rng* rng, double std) {
    Parameter p{name, Tensor(shape), Tensor(shape)};
    switch (init) {
        case Init::zeros: break;
        case Init::ones: p.value.fill(1.0); break;
        case Init::normal:
            if (rng == nullptr) throw Error("normal init for '" + name + "' needs a random generator");
            for (double& v : p.value.values()) v = std * standard_normal(*rng);
            break;
    }
    auto [it, fresh] = params_.emplace(name, std::move(p));
    if (!fresh) throw Error("duplicate parameter name '" + name + "'");
    return it->second;
}

Parameter& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw LookupError("parameter", name);
    return it->second;
}

const Parameter& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw LookupError("parameter", name);
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto& [name, p] : params_) p.grad.fill(0.0);
}

std::size_t ParamStore::count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.value.size();
    return n;
}

double ParamStore::grad_norm() const {
    double s = 0.0;
    for (const auto& [name, p] : params_) {
        for (double g : p.grad.values()) s += g * g;
    }
    return std::sqrt(s);
}

std::map<std::string, Tensor> ParamStore::values() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, p] : params_) out.emplace(name, p.value);
    return out;
}

void ParamStore::assign(const std::map<std::string, Tensor>& values) {
    if (values.size() != params_.size()) {
        throw ShapeError("expected " + std::to_string(params_.size()) + " parameters, got " +
                         std::to_string(values.size()));
    }
    for (auto& [name, p] : params_) {
        auto it = values.find(name);
        if (it == values.end()) throw ShapeError("missing parameter '" + name + "'");
        if (it->second.shape() != p.value.shape()) {
            throw ShapeError("parameter '" + name + "' has shape " + shape_string(it->second.shape()) + ", expected " +
                             shape_string(p.value.shape()));
        }
        p.value = it->second;
    }
}

void save_checkpoint(const std::filesystem::path& path, const std::string& config, const ParamStore& params) {
    io::write_atomically(path, [&](std::ostream& out) {
        io::write_magic(out, kCheckpointMagic);
        io::write_string(out, config);
        io::write_u32(out, static_cast<std::uint32_t>(params.entries().size()));
        for (const auto& [name, p] : params.entries()) {
            io::write_string(out, name);
            io::write_u32(out, static_cast<std::uint32_t>(p.value.rank()));
            for (auto d : p.value.shape()) io::write_u32(out, static_cast<std::uint32_t>(d));
            for (double v : p.value.values()) io::write_f64(out, v);
        }
    });
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    const std::string what = "checkpoint '" + path.string() + "'";
    io::expect_magic(in, kCheckpointMagic, what);
    Checkpoint ck;
    ck.config = io::read_string(in);
    const auto n = io::read_u32(in);
    for (std::uint32_t k = 0; k < n; ++k) {
        auto name = io::read_string(in);
        const auto rank = io::read_u32(in);
        if (rank == 0 || rank > 8) throw ParseError(what + ": bad rank for '" + name + "'");
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = io::read_u32(in);
        Tensor t(shape);
        for (double& v : t.values()) {
            v = io::read_f64(in);
            if (!std::isfinite(v)) throw ParseError(what + ": non-finite value in '" + name + "'");
        }
        if (!ck.tensors.emplace(std::move(name), std::move(t)).second) throw ParseError(what + ": duplicate parameter");
    }
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError(what + ": trailing bytes");
    return ck;
}

}  // namespace hybrank
