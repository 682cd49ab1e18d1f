#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tednet/gradcheck.hpp"
#include "tednet/tape.hpp"
#include "tednet/tensor.hpp"
#include "test_support.hpp"

using namespace tednet;
using test_support::bit_equal;
using test_support::random_tensor;

namespace {

// triple-loop reference, kept deliberately separate from the kernels
Tensor matmul_reference(const Tensor& a, const Tensor& b) {
    Tensor c(Shape{a.dim(0), b.dim(1)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < b.dim(1); ++j) {
            float s = 0;
            for (std::size_t t = 0; t < a.dim(1); ++t) s += a.at2(i, t) * b.at2(t, j);
            c.at2(i, j) = s;
        }
    return c;
}

Tensor identity(std::size_t n) {
    Tensor t(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) t.at2(i, i) = 1.0f;
    return t;
}

}  // namespace

TEST_CASE("matmul basics") {
    const Tensor a({2, 2}, {1, 2, 3, 4});
    CHECK(bit_equal(matmul(a, identity(2)), a));

    const Tensor b({2, 2}, {5, 6, 7, 8});
    const Tensor ab = matmul(a, b);
    CHECK(ab.at2(0, 0) == 19.0f);
    CHECK(ab.at2(0, 1) == 22.0f);
    CHECK(ab.at2(1, 0) == 43.0f);
    CHECK(ab.at2(1, 1) == 50.0f);
    CHECK(bit_equal(ab, matmul_reference(a, b)));

    const Tensor z = matmul(Tensor::zeros({2, 3}), Tensor::ones({3, 4}));
    CHECK(z.shape() == Shape{2, 4});
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0f);
}

TEST_CASE("matmul agrees with the reference on random shapes") {
    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t m = rng.below(9) + 1, k = rng.below(9) + 1, n = rng.below(9) + 1;
        const Tensor a = random_tensor<float>(rng, {m, k});
        const Tensor b = random_tensor<float>(rng, {k, n});
        CHECK(test_support::max_abs_diff(matmul(a, b), matmul_reference(a, b)) < 1e-5);
        // transposed variants against the plain kernel
        CHECK(test_support::max_abs_diff(matmul_nt(a, transpose2d(b)), matmul(a, b)) < 1e-5);
        CHECK(test_support::max_abs_diff(matmul_tn(transpose2d(a), b), matmul(a, b)) < 1e-5);
    }
}

TEST_CASE("matmul with identity associates exactly on integer inputs") {
    Rng rng(13);
    Tensor a(Shape{3, 3}), b(Shape{3, 3});
    for (std::size_t i = 0; i < 9; ++i) {
        a[i] = static_cast<float>(rng.range_int(-8, 8));
        b[i] = static_cast<float>(rng.range_int(-8, 8));
    }
    const Tensor i3 = identity(3);
    CHECK(bit_equal(matmul(matmul(a, i3), b), matmul(a, b)));
    CHECK(bit_equal(matmul(a, matmul(i3, b)), matmul(a, b)));
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[4x2]"), ShapeError);
}

TEST_CASE("matmul is bit-identical across runs and thread counts") {
    Rng rng(29);
    const Tensor a = random_tensor<float>(rng, {64, 80});
    const Tensor b = random_tensor<float>(rng, {80, 96});
    set_max_threads(1);
    const Tensor c1 = matmul(a, b);
    set_max_threads(4);
    const Tensor c2 = matmul(a, b);
    set_max_threads(0);
    const Tensor c3 = matmul(a, b);
    CHECK(bit_equal(c1, c2));
    CHECK(bit_equal(c1, c3));
}

TEST_CASE("softmax_rows") {
    const Tensor c({1, 3}, {4.2f, 4.2f, 4.2f});
    const Tensor sc = softmax_rows(c);
    for (std::size_t j = 0; j < 3; ++j) CHECK(sc[j] == doctest::Approx(1.0 / 3).epsilon(1e-6));

    // shift invariance
    Rng rng(5);
    const Tensor x = random_tensor<float>(rng, {4, 6}, -2, 2);
    Tensor shifted = x;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 7.5f;
    CHECK(test_support::max_abs_diff(softmax_rows(x), softmax_rows(shifted)) < 1e-6);

    // extreme logits stay stable
    const Tensor hot({1, 2}, {1000.0f, 0.0f});
    const Tensor sh = softmax_rows(hot);
    CHECK(sh[0] == doctest::Approx(1.0));
    CHECK(sh[1] == doctest::Approx(0.0));

    // rows are probability vectors
    for (int rep = 0; rep < 10; ++rep) {
        const Tensor r = random_tensor<float>(rng, {rng.below(5) + 1, rng.below(6) + 1}, -3, 3);
        const Tensor s = softmax_rows(r);
        for (std::size_t i = 0; i < s.dim(0); ++i) {
            double sum = 0;
            for (std::size_t j = 0; j < s.dim(1); ++j) {
                CHECK(s.at2(i, j) >= 0.0f);
                CHECK(s.at2(i, j) <= 1.0f);
                sum += s.at2(i, j);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("layer_norm") {
    const Tensor gamma1 = Tensor::ones({4});
    const Tensor beta0 = Tensor::zeros({4});

    // constant row: zero variance, eps keeps it finite
    const Tensor c = Tensor::full({2, 4}, 3.25f);
    const Tensor n = layer_norm(c, gamma1, beta0, 1e-5f);
    for (std::size_t i = 0; i < n.size(); ++i) CHECK(n[i] == 0.0f);

    // normalized rows have mean 0 variance 1
    Rng rng(17);
    const Tensor x = random_tensor<float>(rng, {3, 4}, -5, 5);
    const Tensor y = layer_norm(x, gamma1, beta0, 1e-7f);
    for (std::size_t r = 0; r < 3; ++r) {
        double mean = 0, var = 0;
        for (std::size_t j = 0; j < 4; ++j) mean += y.at2(r, j);
        mean /= 4;
        for (std::size_t j = 0; j < 4; ++j) var += (y.at2(r, j) - mean) * (y.at2(r, j) - mean);
        var /= 4;
        CHECK(std::fabs(mean) < 1e-6);
        CHECK(std::fabs(var - 1.0) < 1e-4);
    }

    // gamma 0 pins every output to beta
    const Tensor betas({4}, {1, 2, 3, 4});
    const Tensor z = layer_norm(x, Tensor::zeros({4}), betas, 1e-5f);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t j = 0; j < 4; ++j) CHECK(z.at2(r, j) == betas[j]);
}

TEST_CASE("linear") {
    Rng rng(3);
    const Tensor a = random_tensor<float>(rng, {5, 3});
    CHECK(bit_equal(linear(a, identity(3), Tensor::zeros({3})), a));

    const Tensor b({3}, {1, 2, 3});
    const Tensor zrows = linear(Tensor::zeros({4, 3}), identity(3), b);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t j = 0; j < 3; ++j) CHECK(zrows.at2(r, j) == b[j]);

    const Tensor single({1, 2}, {1, 2});
    const Tensor w({2, 1}, {1, 1});
    const Tensor out = linear(single, w, Tensor::zeros({1}));
    CHECK(out.size() == 1);
    CHECK(out[0] == 3.0f);
}

TEST_CASE("non-finite results are rejected") {
    const float big = std::numeric_limits<float>::max();
    const Tensor x = Tensor::full({2, 2}, big);
    CHECK_THROWS_AS(add(x, x), NumericError);
    CHECK_THROWS_AS(scale(x, 2.0f), NumericError);
    CHECK_THROWS_AS(matmul(x, x), NumericError);
}

TEST_CASE("tape: gradient of sum is ones") {
    Rng rng(23);
    Tape<double> tape;
    const auto x = tape.leaf(random_tensor<double>(rng, {3, 5}));
    const auto loss = sum_all(tape, x);
    const auto g = tape.grad(loss, std::vector<Tape<double>::Id>{x});
    for (std::size_t i = 0; i < g[0].size(); ++i) CHECK(g[0][i] == 1.0);
}

TEST_CASE("tape: gradient of sum(x*x)/2 is x") {
    Rng rng(27);
    const TensorT<double> xv = random_tensor<double>(rng, {4, 4});
    Tape<double> tape;
    const auto x = tape.leaf(xv);
    const auto loss = scale(tape, sum_all(tape, mul(tape, x, x)), 0.5);
    const auto g = tape.grad(loss, std::vector<Tape<double>::Id>{x});
    CHECK(test_support::max_abs_diff(g[0], xv) < 1e-12);
}

TEST_CASE("tape: fan-out accumulates into shared inputs") {
    Tape<double> tape;
    const auto x = tape.leaf(TensorT<double>({1}, {3.0}));
    const auto y = scale(tape, x, 2.0);
    const auto z = add(tape, y, y);  // z = 4x
    const auto g = tape.grad(z, std::vector<Tape<double>::Id>{x});
    CHECK(g[0][0] == 4.0);
}

TEST_CASE("tape: error cases") {
    Tape<double> tape;
    const auto x = tape.leaf(TensorT<double>({2, 2}, {1, 2, 3, 4}));
    // non-scalar loss
    CHECK_THROWS_AS(tape.grad(x, std::vector<Tape<double>::Id>{x}), ShapeError);
    // id not on tape
    const auto loss = sum_all(tape, x);
    CHECK_THROWS_AS(tape.grad(loss, std::vector<Tape<double>::Id>{9999}), ShapeError);
    // disconnected leaf gets a zero gradient
    const auto other = tape.leaf(TensorT<double>({3}, {1, 1, 1}));
    const auto g = tape.grad(loss, std::vector<Tape<double>::Id>{other});
    CHECK(g[0].shape() == Shape{3});
    for (std::size_t i = 0; i < 3; ++i) CHECK(g[0][i] == 0.0);
}

TEST_CASE("spot finite-difference checks on core primitives") {
    Rng rng(31);
    const TensorT<double> a = random_tensor<double>(rng, {3, 4});
    const TensorT<double> b = random_tensor<double>(rng, {4, 2});
    const TensorT<double> w = random_tensor<double>(rng, {3, 2});

    Tape<double> tape;
    const auto ai = tape.leaf(a);
    const auto bi = tape.leaf(b);
    const auto loss = sum_all(tape, mul(tape, matmul(tape, ai, bi), tape.leaf(w)));
    const auto g = tape.grad(loss, std::vector<Tape<double>::Id>{ai, bi});

    const auto numeric_a = fd_gradient(
        [&](const TensorT<double>& probe) {
            const TensorT<double> out = matmul(probe, b);
            double s = 0;
            for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
            return s;
        },
        a);
    const auto numeric_b = fd_gradient(
        [&](const TensorT<double>& probe) {
            const TensorT<double> out = matmul(a, probe);
            double s = 0;
            for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
            return s;
        },
        b);
    CHECK(max_rel_error(g[0], numeric_a) < kGradCheckTolerance);
    CHECK(max_rel_error(g[1], numeric_b) < kGradCheckTolerance);
}

TEST_CASE("deterministic kernels: repeated evaluation is bit-identical") {
    Rng rng(41);
    const Tensor x = random_tensor<float>(rng, {6, 6}, -2, 2);
    const Tensor g = random_tensor<float>(rng, {6}, 0.5, 1.5);
    const Tensor b = random_tensor<float>(rng, {6});
    CHECK(bit_equal(softmax_rows(x), softmax_rows(x)));
    CHECK(bit_equal(layer_norm(x, g, b, 1e-5f), layer_norm(x, g, b, 1e-5f)));
    CHECK(bit_equal(gelu(x), gelu(x)));
}
