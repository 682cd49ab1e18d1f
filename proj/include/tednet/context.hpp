#pragma once

// Two interchangeable evaluation contexts so the network wiring is written
// once: ValCtx computes values directly (inference), TapeCtx records the same
// kernels on a gradient tape (training and gradient checks). Both run the
// identical kernels in the identical order, so their outputs are bit-equal.

#include <memory>
#include <vector>

#include "tednet/tape.hpp"
#include "tednet/tensor.hpp"
#include "tednet/tokenization.hpp"

namespace tednet {

template <typename T>
struct ValCtx {
    using Scalar = T;
    using Handle = std::shared_ptr<const TensorT<T>>;

    static Handle own(TensorT<T> v) { return std::make_shared<const TensorT<T>>(std::move(v)); }
    // Non-owning view; the referenced tensor must outlive the forward pass.
    Handle lift(const TensorT<T>& v) { return Handle(Handle{}, &v); }
    const TensorT<T>& get(const Handle& h) const { return *h; }

    Handle add(Handle a, Handle b) { return own(tednet::add(*a, *b)); }
    Handle scale(Handle a, T s) { return own(tednet::scale(*a, s)); }
    Handle matmul(Handle a, Handle b) { return own(tednet::matmul(*a, *b)); }
    Handle matmul_nt(Handle a, Handle b) { return own(tednet::matmul_nt(*a, *b)); }
    Handle linear(Handle a, Handle w, Handle b) { return own(tednet::linear(*a, *w, *b)); }
    Handle softmax_rows(Handle a) { return own(tednet::softmax_rows(*a)); }
    Handle layer_norm(Handle a, Handle g, Handle b, T eps) {
        return own(tednet::layer_norm(*a, *g, *b, eps));
    }
    Handle gelu(Handle a) { return own(tednet::gelu(*a)); }
    Handle relu(Handle a) { return own(tednet::relu(*a)); }
    Handle slice_cols(Handle a, std::size_t c0, std::size_t c1) {
        return own(tednet::slice_cols(*a, c0, c1));
    }
    Handle concat_cols(const std::vector<Handle>& parts) {
        std::vector<TensorT<T>> vals;
        vals.reserve(parts.size());
        for (const auto& p : parts) vals.push_back(*p);
        return own(tednet::concat_cols(vals));
    }
    Handle soft_split(Handle img, const StageGeometry& g) {
        return own(detail::unfold_kernel(*img, g));
    }
    Handle fold(Handle tokens, int c, int side, const StageGeometry& g, bool normalize) {
        return own(detail::fold_kernel(*tokens, c, side, g, normalize));
    }
    Handle cyclic_shift(Handle img, int pixels) {
        return own(detail::cyclic_shift_kernel(*img, pixels));
    }
    Handle tokens_to_spatial(Handle tokens, int gh, int gw) {
        return own(detail::tokens_to_spatial_kernel(*tokens, gh, gw));
    }
    Handle spatial_to_tokens(Handle img) {
        return own(detail::spatial_to_tokens_kernel(*img));
    }
};

template <typename T>
struct TapeCtx {
    using Scalar = T;
    using Handle = typename Tape<T>::Id;

    Tape<T>& tape;

    Handle lift(const TensorT<T>& v) { return tape.leaf(v); }
    const TensorT<T>& get(Handle h) const { return tape.value(h); }

    Handle add(Handle a, Handle b) { return tednet::add(tape, a, b); }
    Handle scale(Handle a, T s) { return tednet::scale(tape, a, s); }
    Handle matmul(Handle a, Handle b) { return tednet::matmul(tape, a, b); }
    Handle matmul_nt(Handle a, Handle b) { return tednet::matmul_nt(tape, a, b); }
    Handle linear(Handle a, Handle w, Handle b) { return tednet::linear(tape, a, w, b); }
    Handle softmax_rows(Handle a) { return tednet::softmax_rows(tape, a); }
    Handle layer_norm(Handle a, Handle g, Handle b, T eps) {
        return tednet::layer_norm(tape, a, g, b, eps);
    }
    Handle gelu(Handle a) { return tednet::gelu(tape, a); }
    Handle relu(Handle a) { return tednet::relu(tape, a); }
    Handle slice_cols(Handle a, std::size_t c0, std::size_t c1) {
        return tednet::slice_cols(tape, a, c0, c1);
    }
    Handle concat_cols(const std::vector<Handle>& parts) {
        return tednet::concat_cols(tape, parts);
    }
    Handle soft_split(Handle img, const StageGeometry& g) {
        return tednet::soft_split(tape, img, g);
    }
    Handle fold(Handle tokens, int c, int side, const StageGeometry& g, bool normalize) {
        return tednet::fold(tape, tokens, c, side, g, normalize);
    }
    Handle cyclic_shift(Handle img, int pixels) { return tednet::cyclic_shift(tape, img, pixels); }
    Handle tokens_to_spatial(Handle tokens, int gh, int gw) {
        return tednet::tokens_to_spatial(tape, tokens, gh, gw);
    }
    Handle spatial_to_tokens(Handle img) { return tednet::spatial_to_tokens(tape, img); }
};

}  // namespace tednet
