#include "tednet/volume.hpp"

#include <algorithm>
#include <cmath>

#include "tednet/binio.hpp"
#include "tednet/rng.hpp"

namespace tednet {

namespace {
constexpr char kMagic[4] = {'T', 'D', 'V', '1'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

void ImageVolume::validate() const {
    if (width == 0 || height == 0 || count == 0)
        throw FormatError("volume: empty dimensions " + std::to_string(width) + "x" +
                          std::to_string(height) + "x" + std::to_string(count));
    if (!(lo < hi)) throw FormatError("volume: value range lo must be below hi");
    if (pixels.size() != slice_size() * count)
        throw FormatError("volume: pixel buffer holds " + std::to_string(pixels.size()) +
                          " values, header implies " + std::to_string(slice_size() * count));
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const float v = pixels[i];
        if (!std::isfinite(v) || v < lo || v > hi)
            throw FormatError("volume: pixel " + std::to_string(i) + " value " +
                              std::to_string(v) + " outside declared range [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
}

void save_volume(const std::string& path, const ImageVolume& vol) {
    vol.validate();
    std::vector<std::uint8_t> out;
    out.reserve(30 + vol.pixels.size() * 4);
    out.insert(out.end(), kMagic, kMagic + 4);
    binio::put_u16(out, kVersion);
    binio::put_u32(out, vol.width);
    binio::put_u32(out, vol.height);
    binio::put_u32(out, vol.count);
    binio::put_f64(out, vol.lo);
    binio::put_f64(out, vol.hi);
    for (float v : vol.pixels) binio::put_f32(out, v);
    binio::write_file(path, out);
}

ImageVolume load_volume(const std::string& path) {
    const std::vector<std::uint8_t> buf = binio::read_file(path);
    binio::Reader r(buf);
    if (r.str(4) != std::string(kMagic, 4))
        throw FormatError(path + ": bad magic, not a volume file");
    const std::uint16_t version = r.u16();
    if (version != kVersion)
        throw FormatError(path + ": unsupported format version " + std::to_string(version));
    ImageVolume vol;
    vol.width = r.u32();
    vol.height = r.u32();
    vol.count = r.u32();
    vol.lo = r.f64();
    vol.hi = r.f64();
    const std::size_t expect = vol.slice_size() * vol.count * 4;
    if (r.remaining() != expect)
        throw FormatError(path + ": payload truncated or oversized, expected " +
                          std::to_string(expect) + " pixel bytes, got " +
                          std::to_string(r.remaining()));
    vol.pixels.resize(vol.slice_size() * vol.count);
    for (float& v : vol.pixels) v = r.f32();
    vol.validate();
    return vol;
}

namespace {

struct Ellipse {
    double cy, cx, ry, rx, angle, intensity;
};

// 3x3 supersampled coverage of the ellipse interior for one pixel.
double coverage(const Ellipse& e, int y, int x) {
    const double c = std::cos(e.angle), s = std::sin(e.angle);
    int hits = 0;
    for (int sy = 0; sy < 3; ++sy) {
        for (int sx = 0; sx < 3; ++sx) {
            const double py = y + (sy + 0.5) / 3.0 - e.cy;
            const double px = x + (sx + 0.5) / 3.0 - e.cx;
            const double u = (c * px + s * py) / e.rx;
            const double v = (-s * px + c * py) / e.ry;
            if (u * u + v * v <= 1.0) ++hits;
        }
    }
    return hits / 9.0;
}

}  // namespace

std::pair<ImageVolume, ImageVolume> generate_phantoms(const PhantomSpec& spec) {
    spec.validate();
    const int side = spec.side;
    ImageVolume clean = ImageVolume::make(side, side, spec.image_count, 0.0, 1.0);
    ImageVolume noisy = ImageVolume::make(side, side, spec.image_count, 0.0, 1.0);
    Rng rng(spec.seed);

    float noisy_min = 0.0f, noisy_max = 1.0f;
    for (int img = 0; img < spec.image_count; ++img) {
        std::vector<double> acc(static_cast<std::size_t>(side) * side, 0.22);

        // one body ellipse, then smaller internal structures of either sign
        const int extra = rng.range_int(spec.min_ellipses, spec.max_ellipses);
        std::vector<Ellipse> shapes;
        shapes.push_back({side * 0.5, side * 0.5, side * rng.uniform(0.32, 0.45),
                          side * rng.uniform(0.32, 0.45), rng.uniform(0.0, 3.141592653589793),
                          rng.uniform(0.18, 0.3)});
        for (int i = 0; i < extra; ++i) {
            const double mag = rng.uniform(spec.min_intensity, spec.max_intensity);
            shapes.push_back({rng.uniform(side * 0.2, side * 0.8),
                              rng.uniform(side * 0.2, side * 0.8),
                              side * rng.uniform(0.04, 0.2), side * rng.uniform(0.04, 0.2),
                              rng.uniform(0.0, 3.141592653589793),
                              rng.uniform() < 0.35 ? -mag : mag});
        }
        for (const Ellipse& e : shapes)
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    const double cov = coverage(e, y, x);
                    if (cov > 0.0) acc[static_cast<std::size_t>(y) * side + x] += cov * e.intensity;
                }

        float* cp = clean.pixels.data() + static_cast<std::size_t>(img) * clean.slice_size();
        float* np = noisy.pixels.data() + static_cast<std::size_t>(img) * noisy.slice_size();
        for (std::size_t i = 0; i < acc.size(); ++i) {
            const double c = std::clamp(acc[i], 0.18, 0.85);
            cp[i] = static_cast<float>(c);
            const double sigma = spec.noise_sigma * (1.0 + spec.dose_scale * c);
            const double n = c + sigma * rng.normal();
            np[i] = static_cast<float>(n);
            noisy_min = std::min(noisy_min, np[i]);
            noisy_max = std::max(noisy_max, np[i]);
        }
    }
    noisy.lo = noisy_min;
    noisy.hi = noisy_max;
    clean.validate();
    noisy.validate();
    return {std::move(clean), std::move(noisy)};
}

}  // namespace tednet
