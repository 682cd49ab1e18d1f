#pragma once

// MSE objective, bias-corrected Adam, patch sampling and dihedral
// augmentation, plus the two training drivers: train_on_patches for a fixed
// patch set and fit for the full sample-augment-optimize loop. Everything is
// deterministic given (data, config, seed); gradient accumulation order is
// fixed, and a non-finite loss aborts with the offending step index.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "tednet/model.hpp"
#include "tednet/rng.hpp"

namespace tednet {

struct TrainConfig {
    double learning_rate = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    int epochs = 10;
    int batch_size = 16;
    int patches_per_image = 4;
    int patch_side = 64;
    std::uint64_t seed = 0;
    bool augment = true;
    bool augment_duplicate = false;  // keep original AND one transformed copy
    int max_steps = 0;               // 0 = unlimited
    double early_stop_fraction = 0.0;  // stop once loss <= fraction * initial

    void validate() const {
        if (learning_rate < 0) throw ConfigError("train: learning_rate must be >= 0");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw ConfigError("train: beta1/beta2 must lie in [0, 1)");
        if (eps_adam <= 0) throw ConfigError("train: eps_adam must be positive");
        if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
        if (patches_per_image < 1) throw ConfigError("train: patches_per_image must be positive");
        if (patch_side < 1) throw ConfigError("train: patch_side must be positive");
    }
};

inline TrainConfig paper_train_config() {
    TrainConfig cfg;
    cfg.learning_rate = 1e-5;
    cfg.epochs = 4000;
    cfg.patch_side = 64;
    return cfg;
}

inline TrainConfig desk_train_config() {
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.epochs = 40;
    cfg.batch_size = 8;
    cfg.patch_side = 32;
    cfg.max_steps = 500;
    return cfg;
}

template <typename T>
T mse_loss(const TensorT<T>& pred, const TensorT<T>& target) {
    return mse_value(pred, target);
}

struct AdamState {
    std::vector<Tensor> m, v;  // canonical visit order
    long step = 0;

    static AdamState like(const TedNetParams<float>& params) {
        AdamState st;
        params.visit([&st](const std::string&, const Tensor& t) {
            st.m.push_back(Tensor::zeros(t.shape()));
            st.v.push_back(Tensor::zeros(t.shape()));
        });
        return st;
    }
};

void adam_step_list(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                    AdamState& state, const TrainConfig& cfg);

void adam_step(TedNetParams<float>& params, const std::vector<Tensor>& grads, AdamState& state,
               const TrainConfig& cfg);

// The eight symmetries of the square; training draws from the first six
// (identity, three rotations, two axis flips).
enum class Dihedral {
    kIdentity,
    kRot90,
    kRot180,
    kRot270,
    kFlipVertical,
    kFlipHorizontal,
    kTranspose,
    kAntiTranspose,
};

Tensor apply_dihedral(const Tensor& img, Dihedral t);
Dihedral inverse_dihedral(Dihedral t);

struct PatchPair {
    Tensor noisy, clean;  // side x side
};

std::vector<PatchPair> sample_patches(const Tensor& noisy, const Tensor& clean, int count,
                                      int side, Rng& rng);

// Draws one transform (identity included) and applies it to both members.
PatchPair augment(const PatchPair& pair, Rng& rng);

struct ImagePair {
    Tensor noisy, clean;
};

struct TrainResult {
    TedNetParams<float> params;
    std::vector<double> losses;  // per step (train_on_patches) or per epoch (fit)
    long steps_run = 0;
};

double training_step(TedNetParams<float>& params, std::span<const PatchPair> batch,
                     AdamState& state, const ModelConfig& mcfg, const ShapePlan& plan,
                     const TrainConfig& tcfg, long step_index);

TrainResult train_on_patches(const std::vector<PatchPair>& patches, const ModelConfig& mcfg,
                             const TrainConfig& tcfg, std::ostream* log = nullptr);

TrainResult fit(const std::vector<ImagePair>& images, const ModelConfig& mcfg,
                const TrainConfig& tcfg, std::ostream* log = nullptr);

}  // namespace tednet
