#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tednet/binio.hpp"
#include "tednet/model.hpp"
#include "tednet/params_io.hpp"
#include "test_support.hpp"

using namespace tednet;
using test_support::bit_equal;
using test_support::max_abs_diff;
using test_support::random_tensor;
using test_support::TempFile;

namespace {

ModelConfig reduced_config() {
    ModelConfig cfg;
    cfg.patch_side = 16;
    cfg.embed_dim = 16;
    cfg.heads = 2;
    cfg.mlp_ratio = 2;
    return cfg;
}

}  // namespace

TEST_CASE("default shape plan follows the derived chain") {
    const ShapePlan plan = plan_shapes(default_config());
    CHECK(plan.stages[0].input_side == 64);
    CHECK(plan.stages[1].input_side == 32);
    CHECK(plan.stages[2].input_side == 32);
    CHECK(plan.stages[0].grid == 32);
    CHECK(plan.stages[1].grid == 32);
    CHECK(plan.stages[2].grid == 32);
    CHECK(plan.stages[0].raw_dim == 49);
    CHECK(plan.stages[1].raw_dim == 2304);
    CHECK(plan.stages[2].raw_dim == 2304);
    for (const auto& s : plan.stages) CHECK(s.proj_dim == 256);
    CHECK(plan.output_side == 64);
}

TEST_CASE("kernel-1 stages keep sides constant and raw dim equal to channels") {
    ModelConfig cfg;
    cfg.patch_side = 8;
    cfg.embed_dim = 8;
    cfg.heads = 2;
    cfg.stages = {{{1, 1, 1, 0}, {1, 1, 1, 0}, {1, 1, 1, 0}}};
    const ShapePlan plan = plan_shapes(cfg);
    CHECK(plan.stages[0].input_side == 8);
    CHECK(plan.stages[1].input_side == 8);
    CHECK(plan.stages[2].input_side == 8);
    CHECK(plan.stages[0].raw_dim == 1);       // one input channel
    CHECK(plan.stages[1].raw_dim == 8);       // embed channels
    CHECK(plan.stages[2].raw_dim == 8);
}

TEST_CASE("invalid stage geometry fails the plan loudly") {
    ModelConfig cfg;
    cfg.patch_side = 4;
    cfg.embed_dim = 8;
    cfg.heads = 2;
    cfg.stages = {{{2, 3, 1, 0}, {1, 1, 1, 0}, {1, 1, 1, 0}}};
    CHECK_THROWS_AS(plan_shapes(cfg), GeometryError);
}

TEST_CASE("decoder projections mirror the encoder stage shapes") {
    const ModelConfig cfg = desk_config();
    const ShapePlan plan = plan_shapes(cfg);
    const auto params = zero_params<float>(cfg);
    for (int i = 0; i < 3; ++i) {
        const std::size_t raw = static_cast<std::size_t>(plan.stages[i].raw_dim);
        const std::size_t e = static_cast<std::size_t>(cfg.embed_dim);
        CHECK(params.enc[i].w.shape() == Shape{raw, e});
        CHECK(params.dec[i].w.shape() == Shape{e, raw});
        CHECK(params.dec[i].b.shape() == Shape{raw});
    }
}

TEST_CASE("forward maps 1 x s x s to 1 x s x s with finite values") {
    const ModelConfig cfg = reduced_config();
    const auto params = init_params<float>(cfg, 42);
    Rng rng(1);
    const Tensor x = random_tensor<float>(rng, {1, 16, 16}, 0, 1);
    const Tensor y = forward(x, params, cfg);
    CHECK(y.shape() == x.shape());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::isfinite(y[i]));
}

TEST_CASE("zeroing only the final projection makes forward the identity") {
    const ModelConfig cfg = reduced_config();
    auto params = init_params<float>(cfg, 7);
    params.dec[0].w = Tensor::zeros(params.dec[0].w.shape());
    params.dec[0].b = Tensor::zeros(params.dec[0].b.shape());
    Rng rng(2);
    const Tensor x = random_tensor<float>(rng, {1, 16, 16}, 0, 1);
    CHECK(bit_equal(forward(x, params, cfg), x));
}

TEST_CASE("forward is deterministic across runs and thread counts") {
    const ModelConfig cfg = reduced_config();
    const auto params = init_params<float>(cfg, 3);
    Rng rng(4);
    const Tensor x = random_tensor<float>(rng, {1, 16, 16}, 0, 1);
    set_max_threads(1);
    const Tensor a = forward(x, params, cfg);
    set_max_threads(2);
    const Tensor b = forward(x, params, cfg);
    set_max_threads(0);
    const Tensor c = forward(x, params, cfg);
    CHECK(bit_equal(a, b));
    CHECK(bit_equal(a, c));
}

TEST_CASE("taped forward bit-matches the plain forward") {
    const ModelConfig cfg = reduced_config();
    const ShapePlan plan = plan_shapes(cfg);
    const auto params = init_params<float>(cfg, 11);
    Rng rng(12);
    const Tensor x = random_tensor<float>(rng, {1, 16, 16}, 0, 1);

    const Tensor plain = forward(x, params, cfg, plan);
    Tape<float> tape;
    TapeCtx<float> cx{tape};
    auto lifted = lift_params(cx, params);
    const auto out = forward_op(cx, tape.leaf(x), lifted, cfg, plan);
    CHECK(bit_equal(tape.value(out), plain));
}

TEST_CASE("init_params is seed-deterministic") {
    const ModelConfig cfg = reduced_config();
    const auto a = init_params<float>(cfg, 99);
    const auto b = init_params<float>(cfg, 99);
    const auto c = init_params<float>(cfg, 100);
    bool same = true, differs = false;
    a.visit([&](const std::string& name, const Tensor& ta) {
        b.visit([&](const std::string& nb, const Tensor& tb) {
            if (name == nb && !bit_equal(ta, tb)) same = false;
        });
        c.visit([&](const std::string& nc, const Tensor& tc) {
            if (name == nc && !bit_equal(ta, tc)) differs = true;
        });
    });
    CHECK(same);
    CHECK(differs);
}

TEST_CASE("weight scales follow 1/sqrt(fan_in)") {
    const ModelConfig cfg = default_config();
    const auto params = init_params<float>(cfg, 5);
    params.visit([](const std::string&, const Tensor& t) {
        if (t.rank() != 2 || t.dim(0) < 64) return;
        double sum = 0, sum2 = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            sum += t[i];
            sum2 += static_cast<double>(t[i]) * t[i];
        }
        const double n = static_cast<double>(t.size());
        const double stdev = std::sqrt(sum2 / n - (sum / n) * (sum / n));
        const double target = 1.0 / std::sqrt(static_cast<double>(t.dim(0)));
        CHECK(stdev == doctest::Approx(target).epsilon(0.2));
    });
}

TEST_CASE("parameter count matches the closed form") {
    for (const ModelConfig& cfg : {default_config(), desk_config(), reduced_config()}) {
        CHECK(param_count(init_params<float>(cfg, 1)) == expected_param_count(cfg));
    }
    ModelConfig with_pos = reduced_config();
    with_pos.use_positional = true;
    CHECK(param_count(init_params<float>(with_pos, 1)) == expected_param_count(with_pos));
}

TEST_CASE("token skips and positional embedding change the output, defaults leave it") {
    ModelConfig cfg = reduced_config();
    Rng rng(31);
    const Tensor x = random_tensor<float>(rng, {1, 16, 16}, 0, 1);

    ModelConfig with_skips = cfg;
    with_skips.token_skips = true;
    const auto params = init_params<float>(cfg, 8);
    const Tensor base = forward(x, params, cfg);
    const Tensor skipped = forward(x, params, with_skips);
    CHECK(max_abs_diff(base, skipped) > 1e-6);

    // the positional table starts at zero, so it is a no-op on the value
    ModelConfig with_pos = cfg;
    with_pos.use_positional = true;
    auto pos_params = init_params<float>(with_pos, 8);
    REQUIRE(pos_params.pos.has_value());
    const Tensor with_zero_pos = forward(x, pos_params, with_pos);
    // (only the projections/blocks differ by seed layout, so compare against
    // a same-params run with the table perturbed instead)
    Tensor& table = *pos_params.pos;
    for (std::size_t i = 0; i < table.size(); ++i) table[i] = 0.01f * static_cast<float>(i % 7);
    const Tensor with_nonzero_pos = forward(x, pos_params, with_pos);
    CHECK(max_abs_diff(with_zero_pos, with_nonzero_pos) > 1e-6);
}

TEST_CASE("residual sign flips the learned component") {
    const ModelConfig cfg = reduced_config();
    ModelConfig neg = cfg;
    neg.residual_sign = -1;
    const auto params = init_params<float>(cfg, 21);
    Rng rng(22);
    const Tensor x = random_tensor<float>(rng, {1, 16, 16}, 0, 1);
    const Tensor plus = forward(x, params, cfg);
    const Tensor minus = forward(x, params, neg);
    // plus + minus == 2x since the residual term negates exactly
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(plus[i] + minus[i] == doctest::Approx(2.0f * x[i]).epsilon(1e-5));
}

TEST_CASE("parameter file round trip is bit-exact") {
    const ModelConfig cfg = reduced_config();
    const auto params = init_params<float>(cfg, 77);
    TempFile file("params");
    save_params(file.path(), params);
    const auto loaded = load_params(file.path(), cfg);
    bool same = true;
    std::size_t idx = 0;
    std::vector<const Tensor*> orig;
    params.visit([&orig](const std::string&, const Tensor& t) { orig.push_back(&t); });
    loaded.visit([&](const std::string&, const Tensor& t) {
        if (!bit_equal(*orig[idx++], t)) same = false;
    });
    CHECK(same);
    CHECK(idx == orig.size());
}

TEST_CASE("parameter loads validate magic, version and shapes") {
    const ModelConfig cfg = reduced_config();
    const auto params = init_params<float>(cfg, 78);
    TempFile file("params");
    save_params(file.path(), params);

    SUBCASE("corrupted magic") {
        auto bytes = binio::read_file(file.path());
        bytes[0] = 'X';
        binio::write_file(file.path(), bytes);
        CHECK_THROWS_WITH_AS(load_params(file.path(), cfg), doctest::Contains("magic"),
                             FormatError);
    }
    SUBCASE("truncated payload") {
        auto bytes = binio::read_file(file.path());
        bytes.resize(bytes.size() - 64);
        binio::write_file(file.path(), bytes);
        CHECK_THROWS_AS(load_params(file.path(), cfg), FormatError);
    }
    SUBCASE("incompatible config names the first mismatching tensor") {
        ModelConfig other = cfg;
        other.embed_dim = 8;
        other.heads = 2;
        CHECK_THROWS_WITH_AS(load_params(file.path(), other), doctest::Contains("enc0.w"),
                             ShapeError);
    }
}

TEST_CASE("forward rejects wrongly shaped input") {
    const ModelConfig cfg = reduced_config();
    const auto params = init_params<float>(cfg, 1);
    CHECK_THROWS_AS(forward(Tensor::zeros({1, 8, 8}), params, cfg), ShapeError);
    CHECK_THROWS_AS(forward(Tensor::zeros({2, 16, 16}), params, cfg), ShapeError);
}
