#pragma once

// Full network assembly: tokenize -> [transformer block -> reshape -> cyclic
// shift -> soft split] x2 -> bottleneck block -> mirrored decoder with folds
// and inverse shifts -> detokenize -> global residual around the input.
//
// Five independent transformer blocks in total: two in the encoder, one
// bottleneck, two in the decoder. Affine projections sit after every soft
// split (raw token dim -> embed_dim) and before every fold (embed_dim -> raw
// token dim); the spatial side and channel chain is computed once as a
// ShapePlan and the decoder consumes it in reverse.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tednet/context.hpp"
#include "tednet/rng.hpp"
#include "tednet/tokenization.hpp"
#include "tednet/transformer.hpp"

namespace tednet {

struct ModelConfig {
    int patch_side = 64;
    std::array<StageGeometry, 3> stages{{{7, 2, 1, 3}, {3, 1, 2, 2}, {3, 1, 1, 1}}};
    int embed_dim = 256;
    int shift_pixels = 2;
    int heads = 8;
    int mlp_ratio = 2;
    Activation activation = Activation::kGelu;
    bool use_positional = false;     // learned additive embedding on stage-1 tokens
    bool literal_eq3 = false;        // plain MLP(MSA(T)) block form
    bool token_skips = false;        // additive encoder->decoder token skips
    int residual_sign = +1;          // output = x + sign * predicted residual

    TransformerOptions transformer_options() const {
        return TransformerOptions{activation, literal_eq3, 1e-5};
    }

    void validate() const {
        if (patch_side < 1) throw ConfigError("config: patch_side must be positive");
        if (embed_dim < 1) throw ConfigError("config: embed_dim must be positive");
        if (heads < 1 || embed_dim % heads != 0)
            throw ConfigError("config: heads (" + std::to_string(heads) +
                              ") must divide embed_dim (" + std::to_string(embed_dim) + ")");
        if (mlp_ratio < 1) throw ConfigError("config: mlp_ratio must be positive");
        if (residual_sign != 1 && residual_sign != -1)
            throw ConfigError("config: residual_sign must be +1 or -1");
    }
};

inline ModelConfig default_config() { return ModelConfig{}; }

// Small configuration for CPU-budget training runs.
inline ModelConfig desk_config() {
    ModelConfig cfg;
    cfg.patch_side = 32;
    cfg.embed_dim = 64;
    cfg.heads = 4;
    return cfg;
}

struct StagePlan {
    int input_side = 0;      // spatial side entering this soft split
    int input_channels = 0;  // channels entering this soft split
    int grid = 0;            // token grid side after the split
    int raw_dim = 0;         // input_channels * kernel^2
    int proj_dim = 0;        // embed dim after projection
};

struct ShapePlan {
    std::array<StagePlan, 3> stages;
    int output_side = 0;

    std::string table() const {
        std::string s = "stage  in_side  in_ch  grid  raw_dim  proj_dim\n";
        for (std::size_t i = 0; i < stages.size(); ++i) {
            const StagePlan& p = stages[i];
            s += "  " + std::to_string(i + 1) + "     " + std::to_string(p.input_side) +
                 "       " + std::to_string(p.input_channels) + "     " + std::to_string(p.grid) +
                 "    " + std::to_string(p.raw_dim) + "     " + std::to_string(p.proj_dim) + "\n";
        }
        s += "output side " + std::to_string(output_side) + "\n";
        return s;
    }
};

// Walks the soft-split chain, validating each stage against the side it will
// actually see (including the decoder-side fold, which needs full coverage).
inline ShapePlan plan_shapes(const ModelConfig& cfg) {
    cfg.validate();
    ShapePlan plan;
    int side = cfg.patch_side;
    int channels = 1;
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        const StageGeometry& g = cfg.stages[i];
        g.validate_covering(side);
        StagePlan& sp = plan.stages[i];
        sp.input_side = side;
        sp.input_channels = channels;
        sp.grid = g.tokens_per_axis(side);
        sp.raw_dim = channels * g.kernel * g.kernel;
        sp.proj_dim = cfg.embed_dim;
        side = sp.grid;
        channels = cfg.embed_dim;
    }
    plan.output_side = cfg.patch_side;
    return plan;
}

template <typename Elem>
struct ProjectionG {
    Elem w, b;
};

// All learnable state. The element type is a tensor for storage and a
// context handle during a forward pass; visit() fixes the canonical
// parameter order used by initialization, serialization, Adam and grads.
template <typename Elem>
struct TedNetParamsG {
    std::array<ProjectionG<Elem>, 3> enc;             // raw_dim -> embed
    std::array<ProjectionG<Elem>, 3> dec;             // embed -> raw_dim
    std::array<TransformerBlockParamsG<Elem>, 5> blocks;  // enc0 enc1 mid dec1 dec0
    std::optional<Elem> pos;                          // stage-1 token embedding

    template <typename Fn>
    void visit(Fn&& fn) {
        for (std::size_t i = 0; i < 3; ++i) {
            fn("enc" + std::to_string(i) + ".w", enc[i].w);
            fn("enc" + std::to_string(i) + ".b", enc[i].b);
        }
        for (std::size_t i = 0; i < 5; ++i)
            blocks[i].visit(("tb" + std::to_string(i)).c_str(), fn);
        for (std::size_t i = 0; i < 3; ++i) {
            fn("dec" + std::to_string(i) + ".w", dec[i].w);
            fn("dec" + std::to_string(i) + ".b", dec[i].b);
        }
        if (pos.has_value()) fn(std::string("pos"), *pos);
    }

    template <typename Fn>
    void visit(Fn&& fn) const {
        const_cast<TedNetParamsG*>(this)->visit(
            [&fn](const std::string& name, Elem& e) { fn(name, const_cast<const Elem&>(e)); });
    }
};

template <typename T>
using TedNetParams = TedNetParamsG<TensorT<T>>;

template <typename T>
std::size_t param_count(const TedNetParams<T>& p) {
    std::size_t n = 0;
    p.visit([&n](const std::string&, const TensorT<T>& t) { n += t.size(); });
    return n;
}

// Closed-form count from the shape chain alone; tests hold the constructed
// parameters to this.
inline std::size_t expected_param_count(const ModelConfig& cfg) {
    const ShapePlan plan = plan_shapes(cfg);
    const std::size_t e = static_cast<std::size_t>(cfg.embed_dim);
    const std::size_t hidden = e * static_cast<std::size_t>(cfg.mlp_ratio);
    std::size_t n = 0;
    for (const StagePlan& sp : plan.stages) {
        const std::size_t raw = static_cast<std::size_t>(sp.raw_dim);
        n += raw * e + e;  // encoder projection
        n += e * raw + raw;  // decoder projection
    }
    n += 5 * (4 * e * e + e * hidden + hidden + hidden * e + e + 4 * e);
    if (cfg.use_positional) {
        const std::size_t g = static_cast<std::size_t>(plan.stages[0].grid);
        n += g * g * e;
    }
    return n;
}

template <typename T>
TedNetParams<T> zero_params(const ModelConfig& cfg) {
    const ShapePlan plan = plan_shapes(cfg);
    TedNetParams<T> p;
    const std::size_t e = static_cast<std::size_t>(cfg.embed_dim);
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t raw = static_cast<std::size_t>(plan.stages[i].raw_dim);
        p.enc[i].w = TensorT<T>::zeros({raw, e});
        p.enc[i].b = TensorT<T>::zeros({e});
        p.dec[i].w = TensorT<T>::zeros({e, raw});
        p.dec[i].b = TensorT<T>::zeros({raw});
    }
    for (auto& b : p.blocks) b = make_zero_block<T>(cfg.embed_dim, cfg.heads, cfg.mlp_ratio);
    if (cfg.use_positional) {
        const std::size_t g = static_cast<std::size_t>(plan.stages[0].grid);
        p.pos = TensorT<T>::zeros({g * g, e});
    }
    return p;
}

// Weights ~ N(0, 1/fan_in) with fan_in = first matrix dimension; biases and
// the positional table start at zero, layer-norm gains at one.
template <typename T>
TedNetParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    TedNetParams<T> p = zero_params<T>(cfg);
    Rng rng(seed);
    p.visit([&rng](const std::string& name, TensorT<T>& t) {
        if (t.rank() != 2) return;  // biases and layer-norm vectors keep init
        if (name == "pos") return;
        const double sigma = 1.0 / std::sqrt(static_cast<double>(t.dim(0)));
        for (std::size_t i = 0; i < t.size(); ++i)
            t[i] = static_cast<T>(rng.normal() * sigma);
    });
    return p;
}

template <class Ctx, typename T>
TedNetParamsG<typename Ctx::Handle> lift_params(Ctx& cx, const TedNetParams<T>& p) {
    TedNetParamsG<typename Ctx::Handle> out;
    for (std::size_t i = 0; i < 3; ++i) {
        out.enc[i] = {cx.lift(p.enc[i].w), cx.lift(p.enc[i].b)};
        out.dec[i] = {cx.lift(p.dec[i].w), cx.lift(p.dec[i].b)};
    }
    for (std::size_t i = 0; i < 5; ++i) out.blocks[i] = lift_block(cx, p.blocks[i]);
    if (p.pos.has_value()) out.pos = cx.lift(*p.pos);
    return out;
}

// x is a 1 x side x side spatial map; returns the same shape.
template <class Ctx, typename H = typename Ctx::Handle>
H forward_op(Ctx& cx, H x, const TedNetParamsG<H>& p, const ModelConfig& cfg,
             const ShapePlan& plan) {
    using T = typename Ctx::Scalar;
    const TransformerOptions opt = cfg.transformer_options();

    std::array<H, 2> skips{};
    H spatial = x;
    H tok{};
    for (std::size_t k = 0; k < 3; ++k) {
        tok = cx.soft_split(spatial, cfg.stages[k]);
        tok = cx.linear(tok, p.enc[k].w, p.enc[k].b);
        if (k == 0 && p.pos.has_value()) tok = cx.add(tok, *p.pos);
        tok = transformer_block_op(cx, tok, p.blocks[k], opt);
        if (k < 2) {
            skips[k] = tok;
            const int grid = plan.stages[k].grid;
            spatial = cx.cyclic_shift(cx.tokens_to_spatial(tok, grid, grid), cfg.shift_pixels);
        }
    }

    for (std::size_t k = 3; k-- > 0;) {
        H pre = cx.linear(tok, p.dec[k].w, p.dec[k].b);
        H folded = cx.fold(pre, plan.stages[k].input_channels, plan.stages[k].input_side,
                           cfg.stages[k], true);
        if (k == 0) {
            spatial = folded;
            break;
        }
        H unshifted = cx.cyclic_shift(folded, -cfg.shift_pixels);
        tok = cx.spatial_to_tokens(unshifted);
        if (cfg.token_skips) tok = cx.add(tok, skips[k - 1]);
        tok = transformer_block_op(cx, tok, p.blocks[k == 2 ? 3 : 4], opt);
    }

    return cx.add(x, cx.scale(spatial, static_cast<T>(cfg.residual_sign)));
}

// ---- value-level API ----

template <typename T>
TensorT<T> forward(const TensorT<T>& x, const TedNetParams<T>& params, const ModelConfig& cfg,
                   const ShapePlan& plan) {
    if (x.rank() != 3 || x.dim(0) != 1 ||
        x.dim(1) != static_cast<std::size_t>(cfg.patch_side) || x.dim(1) != x.dim(2))
        throw ShapeError("forward: expected 1 x " + std::to_string(cfg.patch_side) + " x " +
                         std::to_string(cfg.patch_side) + ", got " + shape_str(x.shape()));
    ValCtx<T> cx;
    auto lifted = lift_params(cx, params);
    return cx.get(forward_op(cx, cx.lift(x), lifted, cfg, plan));
}

template <typename T>
TensorT<T> forward(const TensorT<T>& x, const TedNetParams<T>& params, const ModelConfig& cfg) {
    return forward(x, params, cfg, plan_shapes(cfg));
}

// Handles of all learnable leaves in canonical visit order (for grad calls).
template <typename H>
std::vector<H> handle_list(const TedNetParamsG<H>& p) {
    std::vector<H> out;
    p.visit([&out](const std::string&, const H& h) { out.push_back(h); });
    return out;
}

}  // namespace tednet
