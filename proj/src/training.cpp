#include "tednet/training.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

namespace tednet {

void adam_step_list(const std::vector<Tensor*>& order, const std::vector<Tensor>& grads,
                    AdamState& state, const TrainConfig& cfg) {
    if (grads.size() != order.size() || state.m.size() != order.size())
        throw ShapeError("adam: gradient/state list length does not match parameter count");

    state.step += 1;
    const float b1 = static_cast<float>(cfg.beta1);
    const float b2 = static_cast<float>(cfg.beta2);
    const float corr1 = 1.0f - static_cast<float>(std::pow(cfg.beta1, state.step));
    const float corr2 = 1.0f - static_cast<float>(std::pow(cfg.beta2, state.step));
    const float lr = static_cast<float>(cfg.learning_rate);
    const float eps = static_cast<float>(cfg.eps_adam);

    for (std::size_t p = 0; p < order.size(); ++p) {
        Tensor& w = *order[p];
        const Tensor& g = grads[p];
        require_same_shape(w, g, "adam");
        Tensor& m = state.m[p];
        Tensor& v = state.v[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (1.0f - b1) * g[i];
            v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
            const float mhat = m[i] / corr1;
            const float vhat = v[i] / corr2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void adam_step(TedNetParams<float>& params, const std::vector<Tensor>& grads, AdamState& state,
               const TrainConfig& cfg) {
    std::vector<Tensor*> order;
    params.visit([&order](const std::string&, Tensor& t) { order.push_back(&t); });
    adam_step_list(order, grads, state, cfg);
}

Tensor apply_dihedral(const Tensor& img, Dihedral t) {
    if (img.rank() != 2 || img.dim(0) != img.dim(1))
        throw ShapeError("augment: expected a square patch, got " + shape_str(img.shape()));
    const std::size_t n = img.dim(0);
    Tensor out(img.shape());
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            float v;
            switch (t) {
                case Dihedral::kIdentity: v = img.at2(r, c); break;
                case Dihedral::kRot90: v = img.at2(n - 1 - c, r); break;
                case Dihedral::kRot180: v = img.at2(n - 1 - r, n - 1 - c); break;
                case Dihedral::kRot270: v = img.at2(c, n - 1 - r); break;
                case Dihedral::kFlipVertical: v = img.at2(n - 1 - r, c); break;
                case Dihedral::kFlipHorizontal: v = img.at2(r, n - 1 - c); break;
                case Dihedral::kTranspose: v = img.at2(c, r); break;
                case Dihedral::kAntiTranspose: v = img.at2(n - 1 - c, n - 1 - r); break;
                default: v = img.at2(r, c); break;
            }
            out.at2(r, c) = v;
        }
    }
    return out;
}

Dihedral inverse_dihedral(Dihedral t) {
    switch (t) {
        case Dihedral::kRot90: return Dihedral::kRot270;
        case Dihedral::kRot270: return Dihedral::kRot90;
        default: return t;  // the rest are involutions
    }
}

std::vector<PatchPair> sample_patches(const Tensor& noisy, const Tensor& clean, int count,
                                      int side, Rng& rng) {
    require_same_shape(noisy, clean, "sample_patches");
    if (noisy.rank() != 2) throw ShapeError("sample_patches: expected 2-d images");
    const int h = static_cast<int>(noisy.dim(0));
    const int w = static_cast<int>(noisy.dim(1));
    if (side > h || side > w)
        throw ShapeError("sample_patches: patch side " + std::to_string(side) +
                         " exceeds image " + shape_str(noisy.shape()));
    std::vector<PatchPair> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - side + 1)));
        const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - side + 1)));
        PatchPair p{Tensor(Shape{static_cast<std::size_t>(side), static_cast<std::size_t>(side)}),
                    Tensor(Shape{static_cast<std::size_t>(side), static_cast<std::size_t>(side)})};
        for (int r = 0; r < side; ++r)
            for (int c = 0; c < side; ++c) {
                p.noisy.at2(r, c) = noisy.at2(oy + r, ox + c);
                p.clean.at2(r, c) = clean.at2(oy + r, ox + c);
            }
        out.push_back(std::move(p));
    }
    return out;
}

PatchPair augment(const PatchPair& pair, Rng& rng) {
    const Dihedral t = static_cast<Dihedral>(rng.below(6));
    return PatchPair{apply_dihedral(pair.noisy, t), apply_dihedral(pair.clean, t)};
}

double training_step(TedNetParams<float>& params, std::span<const PatchPair> batch,
                     AdamState& state, const ModelConfig& mcfg, const ShapePlan& plan,
                     const TrainConfig& tcfg, long step_index) {
    if (batch.empty()) throw ConfigError("train: empty batch");
    std::vector<Tensor> grads;
    params.visit([&grads](const std::string&, const Tensor& t) {
        grads.push_back(Tensor::zeros(t.shape()));
    });

    double loss_sum = 0.0;
    const std::size_t side = static_cast<std::size_t>(tcfg.patch_side);
    try {
        for (const PatchPair& pair : batch) {
            Tape<float> tape;
            TapeCtx<float> cx{tape};
            auto lifted = lift_params(cx, params);
            const auto x = tape.leaf(pair.noisy.reshaped({1, side, side}));
            const auto out = forward_op(cx, x, lifted, mcfg, plan);
            const auto loss = mse(tape, out, pair.clean.reshaped({1, side, side}));
            loss_sum += tape.value(loss)[0];
            const std::vector<Tape<float>::Id> wrt = handle_list(lifted);
            std::vector<Tensor> g = tape.grad(loss, wrt);
            for (std::size_t i = 0; i < grads.size(); ++i) add_inplace(grads[i], g[i]);
        }
    } catch (const NumericError& e) {
        throw NumericError("train: aborted at step " + std::to_string(step_index) + ": " +
                           e.what());
    }
    const float inv = 1.0f / static_cast<float>(batch.size());
    for (Tensor& g : grads)
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= inv;

    const double loss = loss_sum / static_cast<double>(batch.size());
    if (!std::isfinite(loss))
        throw NumericError("train: non-finite loss at step " + std::to_string(step_index));
    adam_step(params, grads, state, tcfg);
    return loss;
}

namespace {

bool reached_cap(long steps, const TrainConfig& tcfg) {
    return tcfg.max_steps > 0 && steps >= tcfg.max_steps;
}

}  // namespace

TrainResult train_on_patches(const std::vector<PatchPair>& patches, const ModelConfig& mcfg,
                             const TrainConfig& tcfg, std::ostream* log) {
    tcfg.validate();
    if (patches.empty()) throw ConfigError("train: empty patch set");
    const ShapePlan plan = plan_shapes(mcfg);

    TrainResult res;
    res.params = init_params<float>(mcfg, tcfg.seed);
    AdamState state = AdamState::like(res.params);

    const std::size_t n = patches.size();
    const std::size_t bs = std::min<std::size_t>(tcfg.batch_size, n);
    double initial = -1.0;
    std::size_t cursor = 0;
    const auto t0 = std::chrono::steady_clock::now();
    while (!reached_cap(res.steps_run, tcfg)) {
        std::vector<PatchPair> batch;
        batch.reserve(bs);
        for (std::size_t i = 0; i < bs; ++i) {
            batch.push_back(patches[cursor]);
            cursor = (cursor + 1) % n;
        }
        const double loss =
            training_step(res.params, batch, state, mcfg, plan, tcfg, res.steps_run);
        res.losses.push_back(loss);
        res.steps_run += 1;
        if (initial < 0) initial = loss;
        if (log) {
            const double sec =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            (*log) << res.steps_run - 1 << " " << loss << " " << sec << "\n";
        }
        if (tcfg.early_stop_fraction > 0 && loss <= tcfg.early_stop_fraction * initial) break;
        if (tcfg.max_steps == 0 && res.steps_run >= static_cast<long>(tcfg.epochs) *
                                                        static_cast<long>((n + bs - 1) / bs))
            break;
    }
    return res;
}

TrainResult fit(const std::vector<ImagePair>& images, const ModelConfig& mcfg,
                const TrainConfig& tcfg, std::ostream* log) {
    tcfg.validate();
    if (images.empty()) throw ConfigError("train: empty dataset");
    const ShapePlan plan = plan_shapes(mcfg);

    TrainResult res;
    res.params = init_params<float>(mcfg, tcfg.seed);
    AdamState state = AdamState::like(res.params);
    Rng rng(tcfg.seed + 0x5eedULL);

    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();

        std::vector<PatchPair> pool;
        for (const ImagePair& img : images) {
            std::vector<PatchPair> ps =
                sample_patches(img.noisy, img.clean, tcfg.patches_per_image, tcfg.patch_side, rng);
            for (PatchPair& p : ps) {
                if (tcfg.augment && tcfg.augment_duplicate) {
                    pool.push_back(p);
                    pool.push_back(augment(p, rng));
                } else if (tcfg.augment) {
                    pool.push_back(augment(p, rng));
                } else {
                    pool.push_back(std::move(p));
                }
            }
        }

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < pool.size(); b += tcfg.batch_size) {
            const std::size_t e = std::min(pool.size(), b + tcfg.batch_size);
            epoch_loss += training_step(res.params,
                                        std::span<const PatchPair>(pool.data() + b, e - b), state,
                                        mcfg, plan, tcfg, res.steps_run);
            res.steps_run += 1;
            ++batches;
            if (reached_cap(res.steps_run, tcfg)) break;
        }
        epoch_loss /= static_cast<double>(batches);
        res.losses.push_back(epoch_loss);
        if (log) {
            const double sec =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            (*log) << epoch << " " << epoch_loss << " " << sec << "\n";
        }
        if (reached_cap(res.steps_run, tcfg)) break;
        if (tcfg.early_stop_fraction > 0 && !res.losses.empty() &&
            epoch_loss <= tcfg.early_stop_fraction * res.losses.front())
            break;
    }
    return res;
}

}  // namespace tednet
