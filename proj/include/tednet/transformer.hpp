#pragma once

// Transformer block over token matrices: multi-head self-attention, MLP,
// layer norm and residual wiring. Default form is pre-norm residual
//     u   = tokens + msa(ln(tokens))
//     out = u + mlp(ln(u))
// with an opt-in plain composition out = mlp(msa(tokens)) kept behind
// `literal_composition` for comparisons.

#include <cmath>
#include <vector>

#include "tednet/context.hpp"
#include "tednet/tensor.hpp"

namespace tednet {

enum class Activation { kGelu, kRelu };

struct TransformerOptions {
    Activation activation = Activation::kGelu;
    bool literal_composition = false;  // skip norms and residuals
    double ln_eps = 1e-5;
};

// Element type is TensorT<T> for stored parameters and a context handle
// during a generic forward pass.
template <typename Elem>
struct TransformerBlockParamsG {
    int heads = 1;
    Elem wq, wk, wv, wo;      // d x d projections, no bias
    Elem w1, b1, w2, b2;      // MLP: d -> hidden -> d
    Elem ln1_g, ln1_b, ln2_g, ln2_b;

    template <typename Fn>
    void visit(const char* prefix, Fn&& fn) {
        fn(std::string(prefix) + ".wq", wq);
        fn(std::string(prefix) + ".wk", wk);
        fn(std::string(prefix) + ".wv", wv);
        fn(std::string(prefix) + ".wo", wo);
        fn(std::string(prefix) + ".w1", w1);
        fn(std::string(prefix) + ".b1", b1);
        fn(std::string(prefix) + ".w2", w2);
        fn(std::string(prefix) + ".b2", b2);
        fn(std::string(prefix) + ".ln1_g", ln1_g);
        fn(std::string(prefix) + ".ln1_b", ln1_b);
        fn(std::string(prefix) + ".ln2_g", ln2_g);
        fn(std::string(prefix) + ".ln2_b", ln2_b);
    }
};

template <typename T>
using TransformerBlockParams = TransformerBlockParamsG<TensorT<T>>;

template <typename T>
TransformerBlockParams<T> make_zero_block(int d, int heads, int mlp_ratio) {
    if (heads < 1 || d % heads != 0)
        throw ConfigError("transformer: heads (" + std::to_string(heads) +
                          ") must divide token dim (" + std::to_string(d) + ")");
    const std::size_t dd = static_cast<std::size_t>(d);
    const std::size_t dh = dd * static_cast<std::size_t>(mlp_ratio);
    TransformerBlockParams<T> p;
    p.heads = heads;
    p.wq = TensorT<T>::zeros({dd, dd});
    p.wk = TensorT<T>::zeros({dd, dd});
    p.wv = TensorT<T>::zeros({dd, dd});
    p.wo = TensorT<T>::zeros({dd, dd});
    p.w1 = TensorT<T>::zeros({dd, dh});
    p.b1 = TensorT<T>::zeros({dh});
    p.w2 = TensorT<T>::zeros({dh, dd});
    p.b2 = TensorT<T>::zeros({dd});
    p.ln1_g = TensorT<T>::ones({dd});
    p.ln1_b = TensorT<T>::zeros({dd});
    p.ln2_g = TensorT<T>::ones({dd});
    p.ln2_b = TensorT<T>::zeros({dd});
    return p;
}

template <class Ctx, typename H = typename Ctx::Handle>
H activation_op(Ctx& cx, H x, Activation act) {
    return act == Activation::kGelu ? cx.gelu(x) : cx.relu(x);
}

// Scaled dot-product attention per head on combined d x d projections;
// heads are column slices, concatenated back and output-projected.
template <class Ctx, typename H = typename Ctx::Handle>
H msa_op(Ctx& cx, H tokens, const TransformerBlockParamsG<H>& p, int heads) {
    using T = typename Ctx::Scalar;
    const std::size_t d = cx.get(tokens).dim(1);
    if (heads < 1 || d % static_cast<std::size_t>(heads) != 0)
        throw ShapeError("msa: heads (" + std::to_string(heads) + ") must divide token dim (" +
                         std::to_string(d) + ")");
    const std::size_t hd = d / static_cast<std::size_t>(heads);
    H q = cx.matmul(tokens, p.wq);
    H k = cx.matmul(tokens, p.wk);
    H v = cx.matmul(tokens, p.wv);
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(hd));
    std::vector<H> head_outs;
    head_outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * hd;
        H qh = cx.slice_cols(q, c0, c0 + hd);
        H kh = cx.slice_cols(k, c0, c0 + hd);
        H vh = cx.slice_cols(v, c0, c0 + hd);
        H att = cx.softmax_rows(cx.scale(cx.matmul_nt(qh, kh), inv_sqrt));
        head_outs.push_back(cx.matmul(att, vh));
    }
    return cx.matmul(cx.concat_cols(head_outs), p.wo);
}

template <class Ctx, typename H = typename Ctx::Handle>
H mlp_op(Ctx& cx, H x, const TransformerBlockParamsG<H>& p, const TransformerOptions& opt) {
    return cx.linear(activation_op(cx, cx.linear(x, p.w1, p.b1), opt.activation), p.w2, p.b2);
}

template <class Ctx, typename H = typename Ctx::Handle>
H transformer_block_op(Ctx& cx, H tokens, const TransformerBlockParamsG<H>& p,
                       const TransformerOptions& opt) {
    using T = typename Ctx::Scalar;
    if (opt.literal_composition) return mlp_op(cx, msa_op(cx, tokens, p, p.heads), p, opt);
    const T eps = static_cast<T>(opt.ln_eps);
    H u = cx.add(tokens, msa_op(cx, cx.layer_norm(tokens, p.ln1_g, p.ln1_b, eps), p, p.heads));
    return cx.add(u, mlp_op(cx, cx.layer_norm(u, p.ln2_g, p.ln2_b, eps), p, opt));
}

// Lift stored parameters into context handles (tape leaves or views).
template <class Ctx, typename T>
TransformerBlockParamsG<typename Ctx::Handle> lift_block(
    Ctx& cx, const TransformerBlockParams<T>& p) {
    TransformerBlockParamsG<typename Ctx::Handle> out;
    out.heads = p.heads;
    out.wq = cx.lift(p.wq);
    out.wk = cx.lift(p.wk);
    out.wv = cx.lift(p.wv);
    out.wo = cx.lift(p.wo);
    out.w1 = cx.lift(p.w1);
    out.b1 = cx.lift(p.b1);
    out.w2 = cx.lift(p.w2);
    out.b2 = cx.lift(p.b2);
    out.ln1_g = cx.lift(p.ln1_g);
    out.ln1_b = cx.lift(p.ln1_b);
    out.ln2_g = cx.lift(p.ln2_g);
    out.ln2_b = cx.lift(p.ln2_b);
    return out;
}

// ---- value-level API ----

template <typename T>
TensorT<T> msa(const TensorT<T>& tokens, const TransformerBlockParams<T>& p) {
    ValCtx<T> cx;
    auto lifted = lift_block(cx, p);
    return cx.get(msa_op(cx, cx.lift(tokens), lifted, p.heads));
}

template <typename T>
TensorT<T> transformer_block(const TensorT<T>& tokens, const TransformerBlockParams<T>& p,
                             const TransformerOptions& opt = {}) {
    ValCtx<T> cx;
    auto lifted = lift_block(cx, p);
    return cx.get(transformer_block_op(cx, cx.lift(tokens), lifted, opt));
}

}  // namespace tednet
