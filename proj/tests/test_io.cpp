#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tednet/binio.hpp"
#include "tednet/tiling.hpp"
#include "tednet/volume.hpp"
#include "test_support.hpp"

using namespace tednet;
using test_support::bit_equal;
using test_support::random_tensor;
using test_support::TempFile;

TEST_CASE("phantom generation") {
    SUBCASE("zero noise makes the noisy volume identical to the clean one") {
        PhantomSpec spec;
        spec.side = 32;
        spec.image_count = 2;
        spec.noise_sigma = 0.0;
        spec.seed = 4;
        const auto [clean, noisy] = generate_phantoms(spec);
        CHECK(clean.pixels == noisy.pixels);
    }
    SUBCASE("same seed reproduces bit-identical volumes") {
        PhantomSpec spec;
        spec.side = 32;
        spec.image_count = 2;
        spec.seed = 9;
        const auto [c1, n1] = generate_phantoms(spec);
        const auto [c2, n2] = generate_phantoms(spec);
        CHECK(c1.pixels == c2.pixels);
        CHECK(n1.pixels == n2.pixels);
        spec.seed = 10;
        const auto [c3, n3] = generate_phantoms(spec);
        CHECK(c1.pixels != c3.pixels);
    }
    SUBCASE("noise standard deviation lands within 5 percent") {
        PhantomSpec spec;
        spec.side = 256;
        spec.image_count = 1;
        spec.noise_sigma = 0.05;
        spec.seed = 21;
        const auto [clean, noisy] = generate_phantoms(spec);
        double sum = 0, sum2 = 0;
        for (std::size_t i = 0; i < clean.pixels.size(); ++i) {
            const double d = noisy.pixels[i] - clean.pixels[i];
            sum += d;
            sum2 += d * d;
        }
        const double n = static_cast<double>(clean.pixels.size());
        const double stdev = std::sqrt(sum2 / n - (sum / n) * (sum / n));
        CHECK(stdev == doctest::Approx(0.05).epsilon(0.05));
    }
    SUBCASE("pixels respect the declared ranges") {
        PhantomSpec spec;
        spec.side = 64;
        spec.image_count = 3;
        spec.noise_sigma = 0.15;
        spec.seed = 33;
        const auto [clean, noisy] = generate_phantoms(spec);
        CHECK_NOTHROW(clean.validate());
        CHECK_NOTHROW(noisy.validate());
        CHECK(clean.lo == 0.0);
        CHECK(clean.hi == 1.0);
    }
}

TEST_CASE("volume container") {
    PhantomSpec spec;
    spec.side = 16;
    spec.image_count = 2;
    spec.seed = 3;
    const auto [clean, _] = generate_phantoms(spec);

    SUBCASE("round trip is bit-exact") {
        TempFile file("vol");
        save_volume(file.path(), clean);
        const ImageVolume back = load_volume(file.path());
        CHECK(back.width == clean.width);
        CHECK(back.height == clean.height);
        CHECK(back.count == clean.count);
        CHECK(back.lo == clean.lo);
        CHECK(back.hi == clean.hi);
        CHECK(back.pixels == clean.pixels);

        // and the bytes themselves are stable
        save_volume(file.path() + ".2", back);
        CHECK(binio::read_file(file.path()) == binio::read_file(file.path() + ".2"));
        std::remove((file.path() + ".2").c_str());
    }
    SUBCASE("bad magic is rejected") {
        TempFile file("vol");
        save_volume(file.path(), clean);
        auto bytes = binio::read_file(file.path());
        bytes[1] = 'x';
        binio::write_file(file.path(), bytes);
        CHECK_THROWS_WITH_AS(load_volume(file.path()), doctest::Contains("magic"), FormatError);
    }
    SUBCASE("truncation reports expected and actual byte counts") {
        TempFile file("vol");
        save_volume(file.path(), clean);
        auto bytes = binio::read_file(file.path());
        bytes.resize(bytes.size() - 10);
        binio::write_file(file.path(), bytes);
        CHECK_THROWS_WITH_AS(load_volume(file.path()), doctest::Contains("expected"),
                             FormatError);
    }
    SUBCASE("out-of-range pixels fail validation on save") {
        ImageVolume bad = clean;
        bad.pixels[5] = 2.5f;  // outside [0, 1]
        TempFile file("vol");
        CHECK_THROWS_WITH_AS(save_volume(file.path(), bad), doctest::Contains("range"),
                             FormatError);
    }
}

TEST_CASE("tile grid enumeration") {
    // 256x256 with patch 64: 8 positions per axis, 64 evaluations
    CHECK(tile_grid(256, 256, 64).size() == 64);
    CHECK(tile_grid(64, 64, 32).size() == 16);
    CHECK(tile_grid(96, 64, 32).size() == 6 * 4);
    CHECK_THROWS_AS(tile_grid(100, 64, 32), ShapeError);
    CHECK_THROWS_AS(tile_grid(64, 64, 30), ConfigError);
}

TEST_CASE("center crops partition the image exactly") {
    const int patch = 32, w = 96, h = 64;
    const int crop = patch / 2;
    std::vector<int> written(static_cast<std::size_t>(w) * h, 0);
    for (const TilePos& pos : tile_grid(w, h, patch))
        for (int r = 0; r < crop; ++r)
            for (int c = 0; c < crop; ++c)
                written[static_cast<std::size_t>(pos.y + r) * w + (pos.x + c)] += 1;
    for (const int count : written) CHECK(count == 1);
}

TEST_CASE("reflect padding mirrors without repeating the edge") {
    Tensor img(Shape{4, 4});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(i);
    const Tensor padded = reflect_pad(img, 2);
    CHECK(padded.shape() == Shape{8, 8});
    CHECK(padded.at2(2, 2) == img.at2(0, 0));
    CHECK(padded.at2(1, 2) == img.at2(0, 0));  // row -1 -> row 0
    CHECK(padded.at2(0, 2) == img.at2(1, 0));  // row -2 -> row 1
    CHECK(padded.at2(6, 2) == img.at2(3, 0));  // row 4 -> row 3
    CHECK(padded.at2(7, 2) == img.at2(2, 0));  // row 5 -> row 2
    CHECK(padded.at2(2, 0) == img.at2(0, 1));
}

TEST_CASE("identity model tiling reproduces the input bit-exactly") {
    ModelConfig cfg = desk_config();
    auto params = init_params<float>(cfg, 5);
    params.dec[0].w = Tensor::zeros(params.dec[0].w.shape());
    params.dec[0].b = Tensor::zeros(params.dec[0].b.shape());
    const ShapePlan plan = plan_shapes(cfg);

    Rng rng(6);
    const Tensor img = random_tensor<float>(rng, {64, 64}, 0, 1);
    std::size_t evals = 0;
    const Tensor out = tile_denoise_image(img, params, cfg, plan, &evals);
    CHECK(evals == 16);
    CHECK(bit_equal(out, img));
}

TEST_CASE("constant input tiles to identical center crops everywhere") {
    // every patch evaluation sees the same constant input, so the assembled
    // output is the same crop repeated; periodicity must be exact
    ModelConfig cfg = desk_config();
    const auto params = init_params<float>(cfg, 15);
    const ShapePlan plan = plan_shapes(cfg);
    const Tensor img = Tensor::full({64, 64}, 0.4f);
    const Tensor out = tile_denoise_image(img, params, cfg, plan);
    const int crop = cfg.patch_side / 2;
    for (int by = 0; by < 64 / crop; ++by)
        for (int bx = 0; bx < 64 / crop; ++bx)
            for (int r = 0; r < crop; ++r)
                for (int c = 0; c < crop; ++c)
                    CHECK(out.at2(by * crop + r, bx * crop + c) == out.at2(r, c));
}

TEST_CASE("volume-level tiling widens the range to fit the data") {
    PhantomSpec spec;
    spec.side = 32;
    spec.image_count = 1;
    spec.noise_sigma = 0.05;
    spec.seed = 44;
    const auto [clean, noisy] = generate_phantoms(spec);
    ModelConfig cfg = desk_config();
    const auto params = init_params<float>(cfg, 2);
    const ImageVolume out = tile_denoise(noisy, params, cfg);
    CHECK(out.count == noisy.count);
    CHECK_NOTHROW(out.validate());
}
