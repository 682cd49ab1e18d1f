#pragma once

// Overlapped-patch inference: reflect-pad by patch/4 per side, slide patches
// at stride patch/2, run the model on each, and keep only the central
// (patch/2)^2 region. The kept crops partition the original image exactly,
// so no blending is needed and an identity model reproduces the input
// bit for bit.

#include <vector>

#include "tednet/model.hpp"
#include "tednet/volume.hpp"

namespace tednet {

struct TilePos {
    int y = 0;  // top-left corner in padded coordinates
    int x = 0;
};

// Enumerates patch positions for one image; throws when the image is not a
// multiple of patch/2 per axis (the partition precondition).
std::vector<TilePos> tile_grid(int width, int height, int patch_side);

Tensor reflect_pad(const Tensor& img, int pad);

Tensor tile_denoise_image(const Tensor& img, const TedNetParams<float>& params,
                          const ModelConfig& cfg, const ShapePlan& plan,
                          std::size_t* patch_evals = nullptr);

ImageVolume tile_denoise(const ImageVolume& in, const TedNetParams<float>& params,
                         const ModelConfig& cfg);

}  // namespace tednet
