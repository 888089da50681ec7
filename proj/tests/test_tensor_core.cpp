#include <doctest.h>

#include <cmath>
#include <numeric>

#include "hybrank/error.hpp"
#include "hybrank/grad_check.hpp"
#include "hybrank/layers.hpp"
#include "hybrank/tensor.hpp"
#include "test_util.hpp"

using namespace hybrank;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * standard_normal(rng);
    return m;
}

void randomize(ParamStore& store, Rng& rng, double scale) {
    for (auto& [name, p] : store.entries())
        for (double& v : p.value.values()) v += scale * standard_normal(rng);
}

/// Registers a trainable input so the checker also covers dx.
Parameter& add_input(ParamStore& store, Rng& rng, std::size_t r, std::size_t c) {
    auto& p = store.add("input", {r, c}, Init::normal, &rng, 1.0);
    return p;
}

/// Weighted-sum objective sum(y * probe) around a forward/backward pair.
template <class Fwd, class Bwd>
Objective probe_objective(Parameter& input, const Matrix& probe, Fwd fwd, Bwd bwd) {
    return [&input, probe, fwd, bwd](bool grad) {
        const Matrix x = input.value.matrix();
        auto [y, cache] = fwd(x);
        if (grad) {
            const Matrix dx = bwd(probe, cache);
            input.grad.matrix() += dx;
        }
        return (y.array() * probe.array()).sum();
    };
}

}  // namespace

TEST_CASE("tensor basics") {
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.matrix().rows() == 2);
    t.matrix()(1, 2) = 4.0;
    CHECK(t[5] == 4.0);
    CHECK(shape_string({2, 3}) == "[2, 3]");
}

TEST_CASE("linear: identity and hand product") {
    Rng rng(1);
    ParamStore store;
    Linear lin(store, "l", 2, 2, true, rng);
    lin.weight().value.matrix() = Matrix::Identity(2, 2);
    Matrix x(1, 2);
    x << 5, 6;
    CHECK(lin.forward(x, nullptr) == x);
    lin.weight().value.matrix() << 1, 2, 3, 4;
    lin.bias()->value.matrix() << 0.5, -1;
    const Matrix y = lin.forward(x, nullptr);
    CHECK(y(0, 0) == 23.5);
    CHECK(y(0, 1) == 33.0);
    CHECK_THROWS_AS(lin.forward(Matrix::Zero(1, 3), nullptr), ShapeError);
}

TEST_CASE("linear gradient vs finite differences") {
    Rng rng(2);
    ParamStore store;
    Linear lin(store, "l", 4, 3, true, rng);
    randomize(store, rng, 0.5);
    auto& input = add_input(store, rng, 5, 4);
    const Matrix probe = random_matrix(rng, 5, 3);
    auto fn = probe_objective(
        input, probe,
        [&](const Matrix& x) {
            Linear::Cache c;
            Matrix y = lin.forward(x, &c);
            return std::pair{y, c};
        },
        [&](const Matrix& dy, const Linear::Cache& c) { return lin.backward(dy, c); });
    const auto rep = finite_diff_check(fn, store, {.tolerance = 1e-6});
    CHECK(rep.passed);
    CHECK(rep.max_rel_error < 1e-6);
    CHECK(rep.coords_checked == store.count());
}

TEST_CASE("layer norm values") {
    ParamStore store;
    LayerNorm ln(store, "ln", 2);
    Matrix x(2, 2);
    x << 1, -1, 3, 3;
    const Matrix y = ln.forward(x, nullptr);
    const double s = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(y(0, 0) == doctest::Approx(s).epsilon(1e-15));
    CHECK(y(0, 1) == doctest::Approx(-s).epsilon(1e-15));
    CHECK(y(1, 0) == 0.0);
    CHECK(y(1, 1) == 0.0);
}

TEST_CASE("layer norm gradient vs finite differences") {
    Rng rng(3);
    ParamStore store;
    LayerNorm ln(store, "ln", 6);
    randomize(store, rng, 0.3);
    auto& input = add_input(store, rng, 4, 6);
    const Matrix probe = random_matrix(rng, 4, 6);
    auto fn = probe_objective(
        input, probe,
        [&](const Matrix& x) {
            LayerNorm::Cache c;
            Matrix y = ln.forward(x, &c);
            return std::pair{y, c};
        },
        [&](const Matrix& dy, const LayerNorm::Cache& c) { return ln.backward(dy, c); });
    const auto rep = finite_diff_check(fn, store, {.tolerance = 1e-6});
    CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("attention with a single token") {
    Rng rng(4);
    ParamStore store;
    MultiHeadAttention mha(store, "a", 4, 2, rng);
    randomize(store, rng, 0.3);
    const Matrix x = random_matrix(rng, 1, 4);
    MultiHeadAttention::Cache cache;
    const Matrix y = mha.forward_self(x, 1, &cache);
    for (const auto& w : cache.weights) CHECK(w(0, 0) == 1.0);
    const auto& P = store.entries();
    const Matrix v = x * P.at("a.value.weight").value.matrix() +
                     Matrix(P.at("a.value.bias").value.matrix()).replicate(1, 1);
    const Matrix want = v * P.at("a.output.weight").value.matrix() + Matrix(P.at("a.output.bias").value.matrix());
    CHECK((y - want).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("attention weights are row-stochastic and permutation equivariant") {
    Rng rng(5);
    ParamStore store;
    MultiHeadAttention mha(store, "a", 8, 2, rng);
    randomize(store, rng, 0.3);
    const Matrix x = random_matrix(rng, 5, 8);
    MultiHeadAttention::Cache cache;
    const Matrix y = mha.forward_self(x, 5, &cache);
    for (const auto& w : cache.weights)
        for (Eigen::Index r = 0; r < w.rows(); ++r) CHECK(w.row(r).sum() == doctest::Approx(1.0).epsilon(1e-14));
    const std::vector<int> perm{3, 0, 4, 1, 2};
    Matrix xp(5, 8);
    for (int i = 0; i < 5; ++i) xp.row(i) = x.row(perm[i]);
    const Matrix yp = mha.forward_self(xp, 5, nullptr);
    for (int i = 0; i < 5; ++i) CHECK((yp.row(i) - y.row(perm[i])).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(MultiHeadAttention(store, "b", 6, 4, rng), ShapeError);
}

TEST_CASE("attention gradient vs finite differences") {
    Rng rng(6);
    ParamStore store;
    MultiHeadAttention mha(store, "a", 8, 2, rng);
    randomize(store, rng, 0.3);
    auto& input = add_input(store, rng, 6, 8);  // two sequences of three
    const Matrix probe = random_matrix(rng, 6, 8);
    auto fn = probe_objective(
        input, probe,
        [&](const Matrix& x) {
            MultiHeadAttention::Cache c;
            Matrix y = mha.forward_self(x, 3, &c);
            return std::pair{y, c};
        },
        [&](const Matrix& dy, const MultiHeadAttention::Cache& c) { return mha.backward_self(dy, c); });
    const auto rep = finite_diff_check(fn, store, {.tolerance = 1e-5});
    CHECK(rep.max_rel_error < 1e-5);
}

TEST_CASE("transformer layer with zeroed output projections is two layer norms") {
    Rng rng(7);
    ParamStore store;
    TransformerLayer layer(store, "t", {.dim = 8, .inner = 16, .heads = 2}, rng);
    layer.attention().out_proj().weight().value.fill(0.0);
    layer.ffn().out_proj().weight().value.fill(0.0);
    ParamStore ln_store;
    LayerNorm ln(ln_store, "ln", 8);
    const Matrix x = random_matrix(rng, 4, 8, 3.0);
    const Matrix y = layer.forward(x, 4, nullptr);
    const Matrix want = ln.forward(ln.forward(x, nullptr), nullptr);
    CHECK((y - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("transformer layer is permutation equivariant") {
    Rng rng(8);
    ParamStore store;
    TransformerLayer layer(store, "t", {.dim = 8, .inner = 16, .heads = 2}, rng);
    randomize(store, rng, 0.2);
    const Matrix x = random_matrix(rng, 4, 8);
    const Matrix y = layer.forward(x, 4, nullptr);
    const std::vector<int> perm{2, 3, 1, 0};
    Matrix xp(4, 8);
    for (int i = 0; i < 4; ++i) xp.row(i) = x.row(perm[i]);
    const Matrix yp = layer.forward(xp, 4, nullptr);
    for (int i = 0; i < 4; ++i) CHECK((yp.row(i) - y.row(perm[i])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("transformer layer gradient vs finite differences") {
    for (bool pre : {false, true}) {
        for (Activation act : {Activation::gelu, Activation::relu}) {
            Rng rng(9);
            ParamStore store;
            TransformerLayer layer(store, "t", {.dim = 8, .inner = 12, .heads = 2, .activation = act, .pre_norm = pre},
                                   rng);
            randomize(store, rng, 0.3);
            auto& input = add_input(store, rng, 6, 8);
            const Matrix probe = random_matrix(rng, 6, 8);
            auto fn = probe_objective(
                input, probe,
                [&](const Matrix& x) {
                    TransformerLayer::Cache c;
                    Matrix y = layer.forward(x, 3, &c);
                    return std::pair{y, c};
                },
                [&](const Matrix& dy, const TransformerLayer::Cache& c) { return layer.backward(dy, c); });
            const auto rep = finite_diff_check(fn, store, {.tolerance = 1e-5});
            INFO("pre_norm=", pre, " worst=", rep.worst_param, "[", rep.worst_index, "]");
            CHECK(rep.max_rel_error < 1e-5);
        }
    }
}

TEST_CASE("finite_diff_check: quadratic and corrupted gradient") {
    Rng rng(10);
    ParamStore store;
    auto& p = store.add("x", {7}, Init::normal, &rng, 1.0);
    auto quad = [&p](bool grad) {
        double s = 0.0;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            s += p.value[i] * p.value[i];
            if (grad) p.grad[i] += 2.0 * p.value[i];
        }
        return s;
    };
    const auto ok = finite_diff_check(quad, store, {});
    CHECK(ok.passed);
    CHECK(ok.max_rel_error < 1e-9);

    auto broken = [&p](bool grad) {
        double s = 0.0;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            s += p.value[i] * p.value[i];
            if (grad) p.grad[i] += (i == 3 ? 2.2 : 2.0) * p.value[i];
        }
        return s;
    };
    const auto bad = finite_diff_check(broken, store, {});
    CHECK_FALSE(bad.passed);
    CHECK(bad.max_rel_error > 1e-6);
    CHECK(bad.worst_index == 3);

    const auto before = store.values();
    finite_diff_check(quad, store, {.max_coords = 3, .seed = 5});
    CHECK(store.values() == before);
}

TEST_CASE("param store bookkeeping") {
    Rng rng(11);
    ParamStore store;
    store.add("a", {2, 3}, Init::ones);
    store.add("b", {4}, Init::zeros);
    CHECK(store.count() == 10);
    CHECK_THROWS_AS(store.add("a", {1}, Init::zeros), Error);
    store.get("a").grad.fill(1.0);
    CHECK(store.grad_norm() == doctest::Approx(std::sqrt(6.0)));
    store.zero_grad();
    CHECK(store.grad_norm() == 0.0);
    auto vals = store.values();
    vals["b"][2] = 9.0;
    store.assign(vals);
    CHECK(store.get("b").value[2] == 9.0);
    vals["b"] = Tensor({5});
    CHECK_THROWS_AS(store.assign(vals), ShapeError);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    Rng rng(12);
    ParamStore store;
    store.add("w", {3, 4}, Init::normal, &rng, 0.7);
    store.add("v", {5}, Init::normal, &rng, 1e-300);
    hybrank::testing::TempDir dir;
    save_checkpoint(dir / "a.ckpt", "dim=4\n", store);
    const auto ck = load_checkpoint(dir / "a.ckpt");
    CHECK(ck.config == "dim=4\n");
    CHECK(ck.tensors == store.values());
    ParamStore other;
    other.add("w", {3, 4}, Init::zeros);
    other.add("v", {5}, Init::zeros);
    other.assign(ck.tensors);
    save_checkpoint(dir / "b.ckpt", ck.config, other);
    CHECK(hybrank::testing::slurp(dir / "a.ckpt") == hybrank::testing::slurp(dir / "b.ckpt"));
    CHECK_THROWS_AS(load_checkpoint(dir.write("bad.ckpt", "garbage!")), Error);
}
