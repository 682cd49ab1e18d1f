#include "tednet/tiling.hpp"

#include <algorithm>

namespace tednet {

std::vector<TilePos> tile_grid(int width, int height, int patch_side) {
    if (patch_side < 4 || patch_side % 4 != 0)
        throw ConfigError("tiling: patch side must be a positive multiple of 4, got " +
                          std::to_string(patch_side));
    const int stride = patch_side / 2;
    if (width % stride != 0 || height % stride != 0)
        throw ShapeError("tiling: image " + std::to_string(width) + "x" + std::to_string(height) +
                         " is not a multiple of the crop stride " + std::to_string(stride));
    if (width < stride || height < stride)
        throw ShapeError("tiling: image smaller than one crop");
    const int pad = patch_side / 4;
    std::vector<TilePos> out;
    for (int y = 0; y + patch_side <= height + 2 * pad; y += stride)
        for (int x = 0; x + patch_side <= width + 2 * pad; x += stride)
            out.push_back(TilePos{y, x});
    return out;
}

Tensor reflect_pad(const Tensor& img, int pad) {
    const int h = static_cast<int>(img.dim(0));
    const int w = static_cast<int>(img.dim(1));
    if (pad > h || pad > w)
        throw ShapeError("reflect_pad: pad " + std::to_string(pad) + " too large for " +
                         shape_str(img.shape()));
    auto mirror = [](int c, int n) {
        if (c < 0) return -c - 1;
        if (c >= n) return 2 * n - 1 - c;
        return c;
    };
    Tensor out(Shape{static_cast<std::size_t>(h + 2 * pad), static_cast<std::size_t>(w + 2 * pad)});
    for (int y = -pad; y < h + pad; ++y)
        for (int x = -pad; x < w + pad; ++x)
            out.at2(y + pad, x + pad) = img.at2(mirror(y, h), mirror(x, w));
    return out;
}

Tensor tile_denoise_image(const Tensor& img, const TedNetParams<float>& params,
                          const ModelConfig& cfg, const ShapePlan& plan,
                          std::size_t* patch_evals) {
    const int h = static_cast<int>(img.dim(0));
    const int w = static_cast<int>(img.dim(1));
    const int patch = cfg.patch_side;
    const int pad = patch / 4;
    const int crop = patch / 2;
    const std::vector<TilePos> grid = tile_grid(w, h, patch);
    const Tensor padded = reflect_pad(img, pad);

    Tensor out(Shape{static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    Tensor patch_in(Shape{1, static_cast<std::size_t>(patch), static_cast<std::size_t>(patch)});
    for (const TilePos& pos : grid) {
        for (int r = 0; r < patch; ++r)
            for (int c = 0; c < patch; ++c)
                patch_in.at3(0, r, c) = padded.at2(pos.y + r, pos.x + c);
        const Tensor res = forward(patch_in, params, cfg, plan);
        // central crop lands at the patch position in original coordinates
        for (int r = 0; r < crop; ++r)
            for (int c = 0; c < crop; ++c)
                out.at2(pos.y + r, pos.x + c) = res.at3(0, pad + r, pad + c);
        if (patch_evals) ++*patch_evals;
    }
    return out;
}

ImageVolume tile_denoise(const ImageVolume& in, const TedNetParams<float>& params,
                         const ModelConfig& cfg) {
    const ShapePlan plan = plan_shapes(cfg);
    ImageVolume out = ImageVolume::make(in.width, in.height, in.count, in.lo, in.hi);
    float mn = static_cast<float>(in.lo), mx = static_cast<float>(in.hi);
    for (std::uint32_t i = 0; i < in.count; ++i) {
        const Tensor denoised = tile_denoise_image(in.slice(i), params, cfg, plan);
        out.set_slice(i, denoised);
        for (std::size_t j = 0; j < denoised.size(); ++j) {
            mn = std::min(mn, denoised[j]);
            mx = std::max(mx, denoised[j]);
        }
    }
    out.lo = mn;
    out.hi = mx;
    return out;
}

}  // namespace tednet
