#pragma once

// Stack of single-channel images with value-range metadata; the unit of all
// file I/O. Container format "TDV1":
//   magic 'TDV1' | u16 version | u32 width | u32 height | u32 count
//   | f64 lo | f64 hi | f32 pixels (count * height * width, row-major)
// All fields little-endian; round trips are bit-exact.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tednet/tensor.hpp"

namespace tednet {

struct ImageVolume {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t count = 0;
    double lo = 0.0;
    double hi = 1.0;
    std::vector<float> pixels;  // [count][height][width]

    static ImageVolume make(std::uint32_t w, std::uint32_t h, std::uint32_t n, double lo,
                            double hi) {
        ImageVolume v{w, h, n, lo, hi, {}};
        v.pixels.assign(static_cast<std::size_t>(w) * h * n, 0.0f);
        return v;
    }

    std::size_t slice_size() const { return static_cast<std::size_t>(width) * height; }

    Tensor slice(std::uint32_t i) const {
        Tensor t(Shape{height, width});
        const float* src = pixels.data() + static_cast<std::size_t>(i) * slice_size();
        std::copy(src, src + slice_size(), t.data());
        return t;
    }

    void set_slice(std::uint32_t i, const Tensor& t) {
        if (t.rank() != 2 || t.dim(0) != height || t.dim(1) != width)
            throw ShapeError("volume: slice " + shape_str(t.shape()) + " does not match " +
                             std::to_string(height) + "x" + std::to_string(width));
        std::copy(t.data(), t.data() + slice_size(),
                  pixels.data() + static_cast<std::size_t>(i) * slice_size());
    }

    // Throws when a pixel escapes the declared range or the header is empty.
    void validate() const;
};

void save_volume(const std::string& path, const ImageVolume& vol);
ImageVolume load_volume(const std::string& path);

struct PhantomSpec {
    int side = 64;
    int image_count = 1;
    int min_ellipses = 4;
    int max_ellipses = 9;
    double min_intensity = 0.08;   // per-ellipse additive magnitude
    double max_intensity = 0.28;
    double noise_sigma = 0.08;
    double dose_scale = 0.0;       // sigma grows linearly with local intensity
    std::uint64_t seed = 0;

    void validate() const {
        if (side < 8) throw ConfigError("phantom: side must be at least 8");
        if (image_count < 1) throw ConfigError("phantom: image_count must be positive");
        if (min_ellipses < 0 || max_ellipses < min_ellipses)
            throw ConfigError("phantom: bad ellipse count range");
        if (noise_sigma < 0) throw ConfigError("phantom: noise_sigma must be >= 0");
        if (dose_scale < 0) throw ConfigError("phantom: dose_scale must be >= 0");
    }
};

// Clean volume is superposed anti-aliased ellipses in [0, 1]; noisy adds
// Gaussian noise (untouched by clipping — the noisy volume widens its
// declared range to fit the data instead).
std::pair<ImageVolume, ImageVolume> generate_phantoms(const PhantomSpec& spec);

}  // namespace tednet
