#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tednet/metrics.hpp"
#include "test_support.hpp"

using namespace tednet;
using test_support::random_tensor;

TEST_CASE("rmse basics") {
    Rng rng(1);
    const Tensor x = random_tensor<float>(rng, {16, 16});
    CHECK(rmse(x, x) == 0.0);

    const Tensor a = Tensor::full({8, 8}, 1.25f);
    const Tensor b = Tensor::full({8, 8}, 4.25f);
    CHECK(rmse(a, b) == doctest::Approx(3.0).epsilon(1e-12));

    const Tensor p({2}, {0, 0});
    const Tensor q({2}, {3, 4});
    CHECK(rmse(p, q) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));

    CHECK_THROWS_AS(rmse(a, p), ShapeError);
}

TEST_CASE("rmse satisfies the triangle inequality") {
    Rng rng(3);
    for (int rep = 0; rep < 30; ++rep) {
        const Tensor a = random_tensor<float>(rng, {12, 12});
        const Tensor b = random_tensor<float>(rng, {12, 12});
        const Tensor c = random_tensor<float>(rng, {12, 12});
        CHECK(rmse(a, c) <= rmse(a, b) + rmse(b, c) + 1e-12);
    }
}

TEST_CASE("ssim of an image with itself is exactly one") {
    Rng rng(5);
    const Tensor x = random_tensor<float>(rng, {20, 20}, 0, 1);
    CHECK(ssim(x, x, 1.0) == 1.0);
}

TEST_CASE("constant images match the closed form") {
    const double mu1 = 0.3, mu2 = 0.55, range = 1.0;
    const Tensor a = Tensor::full({16, 16}, static_cast<float>(mu1));
    const Tensor b = Tensor::full({16, 16}, static_cast<float>(mu2));
    const double c1 = 0.01 * range * 0.01 * range;
    // zero variance makes the structure factor exactly one
    const double m1 = static_cast<double>(static_cast<float>(mu1));
    const double m2 = static_cast<double>(static_cast<float>(mu2));
    const double expected = (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
    CHECK(std::fabs(ssim(a, b, range) - expected) < 1e-10);
}

TEST_CASE("ssim is symmetric and bounded") {
    Rng rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        const Tensor a = random_tensor<float>(rng, {16, 16}, 0, 1);
        const Tensor b = random_tensor<float>(rng, {16, 16}, 0, 1);
        const double s1 = ssim(a, b, 1.0);
        const double s2 = ssim(b, a, 1.0);
        CHECK(s1 == doctest::Approx(s2).epsilon(1e-12));
        CHECK(s1 >= -1.0);
        CHECK(s1 <= 1.0);
    }
}

TEST_CASE("ssim decreases as noise amplitude grows") {
    Rng str(11);
    // smooth structured image: sum of low-frequency products
    Tensor base(Shape{32, 32});
    for (std::size_t r = 0; r < 32; ++r)
        for (std::size_t c = 0; c < 32; ++c)
            base.at2(r, c) = 0.5f + 0.3f * std::sin(0.3f * r) * std::cos(0.2f * c);

    double last = 1.1;
    for (const double amp : {0.01, 0.05, 0.1}) {
        Rng noise(13);  // same noise pattern, growing amplitude
        Tensor perturbed = base;
        for (std::size_t i = 0; i < perturbed.size(); ++i)
            perturbed[i] += static_cast<float>(amp * noise.normal());
        const double s = ssim(base, perturbed, 1.0);
        CHECK(s < last);
        last = s;
    }
}

TEST_CASE("ssim input validation") {
    const Tensor x = Tensor::zeros({16, 16});
    CHECK_THROWS_AS(ssim(x, Tensor::zeros({8, 8}), 1.0), ShapeError);
    CHECK_THROWS_AS(ssim(x, x, 0.0), NumericError);
    CHECK_THROWS_AS(ssim(Tensor::zeros({8, 8}), Tensor::zeros({8, 8}), 1.0), ShapeError);
}

TEST_CASE("evaluate_pair bundles the metrics") {
    Rng rng(17);
    const Tensor x = random_tensor<float>(rng, {16, 16}, 0, 1);
    const MetricReport r = evaluate_pair(x, x, 1.0);
    CHECK(r.ssim == 1.0);
    CHECK(r.rmse == 0.0);
    CHECK(r.data_range == 1.0);
}
