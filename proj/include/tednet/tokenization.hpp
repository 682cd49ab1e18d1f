#pragma once

// Soft split (dilated unfold), fold (its scatter-add inverse), the cyclic
// shift pair, and the token<->spatial reshapes.
//
// Window indexing convention, shared by soft_split and fold: the token at
// grid position (i, j) reads pixel (i*stride - padding + dilation*r,
//                                   j*stride - padding + dilation*s)
// for r, s in [0, kernel), laid out channel-major then window-row-major, so
// entry index = ch*kernel^2 + r*kernel + s. Out-of-bounds reads are zero and
// out-of-bounds writes are dropped.

#include <string>
#include <vector>

#include "tednet/tape.hpp"
#include "tednet/tensor.hpp"

namespace tednet {

struct StageGeometry {
    int kernel = 1;
    int stride = 1;
    int dilation = 1;
    int padding = 0;

    int span() const { return dilation * (kernel - 1) + 1; }

    std::string str() const {
        return "kernel=" + std::to_string(kernel) + " stride=" + std::to_string(stride) +
               " dilation=" + std::to_string(dilation) + " padding=" + std::to_string(padding);
    }

    // Basic arithmetic validity for one spatial side. Does not imply every
    // pixel is covered by a window (see covers()).
    void validate(int side) const {
        if (kernel < 1 || stride < 1 || dilation < 1 || padding < 0)
            throw GeometryError("geometry: kernel/stride/dilation must be >= 1 and padding >= 0 (" +
                                str() + ")");
        if (span() > side + 2 * padding)
            throw GeometryError("geometry: effective span " + std::to_string(span()) +
                                " exceeds padded side " + std::to_string(side + 2 * padding) +
                                " (" + str() + ")");
        if (stride > span())
            throw GeometryError("geometry: stride " + std::to_string(stride) +
                                " exceeds effective span " + std::to_string(span()) +
                                ", coverage would have gaps (" + str() + ")");
    }

    // Number of window positions along one axis of length `side`.
    int tokens_per_axis(int side) const {
        validate(side);
        return (side + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
    }

    // How many window entries land on each pixel of one axis.
    std::vector<int> axis_counts(int side) const {
        const int t = tokens_per_axis(side);
        std::vector<int> counts(side, 0);
        for (int w = 0; w < t; ++w) {
            const int start = w * stride - padding;
            for (int r = 0; r < kernel; ++r) {
                const int p = start + dilation * r;
                if (p >= 0 && p < side) ++counts[p];
            }
        }
        return counts;
    }

    // True when every pixel of the axis is read by at least one window, which
    // is what makes fold(normalize=true) an exact inverse of soft_split.
    bool covers(int side) const {
        for (int c : axis_counts(side))
            if (c == 0) return false;
        return true;
    }

    void validate_covering(int side) const {
        validate(side);
        if (!covers(side))
            throw GeometryError("geometry: windows leave uncovered pixels on side " +
                                std::to_string(side) + " (" + str() + ")");
    }
};

// Per-axis window count (total tokens = square of this for square inputs).
inline int token_count(int side, const StageGeometry& g) { return g.tokens_per_axis(side); }

template <typename T>
struct TokenGridT {
    TensorT<T> tokens;  // n x d
    int grid_h = 0;
    int grid_w = 0;
};

using TokenGrid = TokenGridT<float>;

namespace detail {

template <typename T>
TensorT<T> unfold_kernel(const TensorT<T>& img, const StageGeometry& g) {
    const int c = static_cast<int>(img.dim(0));
    const int side = static_cast<int>(img.dim(1));
    const int tpa = g.tokens_per_axis(side);
    const int k = g.kernel;
    const std::size_t d = static_cast<std::size_t>(c) * k * k;
    TensorT<T> tokens(Shape{static_cast<std::size_t>(tpa) * tpa, d});
    for (int ti = 0; ti < tpa; ++ti) {
        for (int tj = 0; tj < tpa; ++tj) {
            T* row = tokens.data() + (static_cast<std::size_t>(ti) * tpa + tj) * d;
            const int y0 = ti * g.stride - g.padding;
            const int x0 = tj * g.stride - g.padding;
            for (int ch = 0; ch < c; ++ch) {
                const T* plane = img.data() + static_cast<std::size_t>(ch) * side * side;
                for (int r = 0; r < k; ++r) {
                    const int y = y0 + g.dilation * r;
                    for (int s = 0; s < k; ++s) {
                        const int x = x0 + g.dilation * s;
                        const bool in = y >= 0 && y < side && x >= 0 && x < side;
                        row[(static_cast<std::size_t>(ch) * k + r) * k + s] =
                            in ? plane[static_cast<std::size_t>(y) * side + x] : T(0);
                    }
                }
            }
        }
    }
    return tokens;
}

// Scatter-add of token entries back to their source pixels; padding
// contributions fall outside [0, side) and are dropped.
template <typename T>
TensorT<T> fold_kernel(const TensorT<T>& tokens, int c, int side, const StageGeometry& g,
                       bool normalize) {
    const int tpa = g.tokens_per_axis(side);
    const int k = g.kernel;
    const std::size_t d = static_cast<std::size_t>(c) * k * k;
    if (tokens.rank() != 2 || tokens.dim(0) != static_cast<std::size_t>(tpa) * tpa ||
        tokens.dim(1) != d)
        throw ShapeError("fold: tokens " + shape_str(tokens.shape()) + " inconsistent with " +
                         std::to_string(tpa * tpa) + "x" + std::to_string(d) + " for side " +
                         std::to_string(side) + " (" + g.str() + ")");
    if (normalize) g.validate_covering(side);
    // accumulate in double: overlap sums can stack kernel^2 contributions
    std::vector<double> acc(static_cast<std::size_t>(c) * side * side, 0.0);
    for (int ti = 0; ti < tpa; ++ti) {
        for (int tj = 0; tj < tpa; ++tj) {
            const T* row = tokens.data() + (static_cast<std::size_t>(ti) * tpa + tj) * d;
            const int y0 = ti * g.stride - g.padding;
            const int x0 = tj * g.stride - g.padding;
            for (int ch = 0; ch < c; ++ch) {
                double* plane = acc.data() + static_cast<std::size_t>(ch) * side * side;
                for (int r = 0; r < k; ++r) {
                    const int y = y0 + g.dilation * r;
                    if (y < 0 || y >= side) continue;
                    for (int s = 0; s < k; ++s) {
                        const int x = x0 + g.dilation * s;
                        if (x < 0 || x >= side) continue;
                        plane[static_cast<std::size_t>(y) * side + x] +=
                            row[(static_cast<std::size_t>(ch) * k + r) * k + s];
                    }
                }
            }
        }
    }
    TensorT<T> out(Shape{static_cast<std::size_t>(c), static_cast<std::size_t>(side),
                         static_cast<std::size_t>(side)});
    const std::vector<int> counts = normalize ? g.axis_counts(side) : std::vector<int>();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) {
                const std::size_t i = (static_cast<std::size_t>(ch) * side + y) * side + x;
                out[i] = static_cast<T>(normalize ? acc[i] / (counts[y] * counts[x]) : acc[i]);
            }
    ensure_finite(out, "fold");
    return out;
}

template <typename T>
TensorT<T> cyclic_shift_kernel(const TensorT<T>& img, int pixels) {
    if (img.rank() != 3)
        throw ShapeError("cyclic_shift: expected c x h x w, got " + shape_str(img.shape()));
    const int c = static_cast<int>(img.dim(0));
    const int h = static_cast<int>(img.dim(1));
    const int w = static_cast<int>(img.dim(2));
    auto wrap = [](int v, int n) {
        int m = v % n;
        return m < 0 ? m + n : m;
    };
    const int dy = wrap(pixels, h);
    const int dx = wrap(pixels, w);
    TensorT<T> out(img.shape());
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y) {
            const int oy = wrap(y + dy, h);
            for (int x = 0; x < w; ++x)
                out.at3(ch, oy, wrap(x + dx, w)) = img.at3(ch, y, x);
        }
    return out;
}

// tokens[n x d] with grid (h, w) -> spatial[d x h x w]; exact permutation.
template <typename T>
TensorT<T> tokens_to_spatial_kernel(const TensorT<T>& tokens, int grid_h, int grid_w) {
    if (tokens.rank() != 2 ||
        tokens.dim(0) != static_cast<std::size_t>(grid_h) * static_cast<std::size_t>(grid_w))
        throw ShapeError("tokens_to_spatial: " + shape_str(tokens.shape()) +
                         " does not match grid " + std::to_string(grid_h) + "x" +
                         std::to_string(grid_w));
    const std::size_t d = tokens.dim(1);
    TensorT<T> out(Shape{d, static_cast<std::size_t>(grid_h), static_cast<std::size_t>(grid_w)});
    for (int i = 0; i < grid_h; ++i)
        for (int j = 0; j < grid_w; ++j) {
            const T* row = tokens.data() + (static_cast<std::size_t>(i) * grid_w + j) * d;
            for (std::size_t ch = 0; ch < d; ++ch) out.at3(ch, i, j) = row[ch];
        }
    return out;
}

template <typename T>
TensorT<T> spatial_to_tokens_kernel(const TensorT<T>& img) {
    if (img.rank() != 3)
        throw ShapeError("spatial_to_tokens: expected c x h x w, got " + shape_str(img.shape()));
    const std::size_t d = img.dim(0);
    const std::size_t h = img.dim(1), w = img.dim(2);
    TensorT<T> out(Shape{h * w, d});
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            T* row = out.data() + (i * w + j) * d;
            for (std::size_t ch = 0; ch < d; ++ch) row[ch] = img.at3(ch, i, j);
        }
    return out;
}

}  // namespace detail

// ---- value-level API ----

template <typename T>
TokenGridT<T> soft_split(const TensorT<T>& img, const StageGeometry& g) {
    if (img.rank() != 3)
        throw ShapeError("soft_split: expected c x h x w, got " + shape_str(img.shape()));
    if (img.dim(1) != img.dim(2))
        throw ShapeError("soft_split: spatial map must be square, got " + shape_str(img.shape()));
    const int tpa = g.tokens_per_axis(static_cast<int>(img.dim(1)));
    return TokenGridT<T>{detail::unfold_kernel(img, g), tpa, tpa};
}

template <typename T>
TensorT<T> fold(const TokenGridT<T>& tg, int c, int side, const StageGeometry& g,
                bool normalize) {
    return detail::fold_kernel(tg.tokens, c, side, g, normalize);
}

template <typename T>
TensorT<T> cyclic_shift(const TensorT<T>& img, int pixels) {
    return detail::cyclic_shift_kernel(img, pixels);
}

template <typename T>
TensorT<T> inverse_cyclic_shift(const TensorT<T>& img, int pixels) {
    return detail::cyclic_shift_kernel(img, -pixels);
}

template <typename T>
TensorT<T> tokens_to_spatial(const TokenGridT<T>& tg) {
    return detail::tokens_to_spatial_kernel(tg.tokens, tg.grid_h, tg.grid_w);
}

template <typename T>
TokenGridT<T> spatial_to_tokens(const TensorT<T>& img) {
    return TokenGridT<T>{detail::spatial_to_tokens_kernel(img), static_cast<int>(img.dim(1)),
                         static_cast<int>(img.dim(2))};
}

// ---- recorded primitives ----
// All four maps are linear, so each backward is the transpose map.

template <typename T>
typename Tape<T>::Id soft_split(Tape<T>& tp, typename Tape<T>::Id img, const StageGeometry& g) {
    using Node = typename Tape<T>::Node;
    const TensorT<T>& v = tp.value(img);
    if (v.rank() != 3 || v.dim(1) != v.dim(2))
        throw ShapeError("soft_split: expected square c x h x w, got " + shape_str(v.shape()));
    const int c = static_cast<int>(v.dim(0));
    const int side = static_cast<int>(v.dim(1));
    return tp.push({img}, detail::unfold_kernel(v, g),
                   [g, c, side](const Tape<T>&, const Node&, const TensorT<T>& gout,
                                std::vector<TensorT<T>>& gin) {
                       gin[0] = detail::fold_kernel(gout, c, side, g, false);
                   });
}

template <typename T>
typename Tape<T>::Id fold(Tape<T>& tp, typename Tape<T>::Id tokens, int c, int side,
                          const StageGeometry& g, bool normalize) {
    using Node = typename Tape<T>::Node;
    return tp.push({tokens}, detail::fold_kernel(tp.value(tokens), c, side, g, normalize),
                   [g, side, normalize](const Tape<T>&, const Node&, const TensorT<T>& gout,
                                        std::vector<TensorT<T>>& gin) {
                       if (!normalize) {
                           gin[0] = detail::unfold_kernel(gout, g);
                           return;
                       }
                       TensorT<T> scaled(gout.shape());
                       const std::vector<int> counts = g.axis_counts(side);
                       const int ch = static_cast<int>(gout.dim(0));
                       for (int cc = 0; cc < ch; ++cc)
                           for (int y = 0; y < side; ++y)
                               for (int x = 0; x < side; ++x)
                                   scaled.at3(cc, y, x) =
                                       gout.at3(cc, y, x) / static_cast<T>(counts[y] * counts[x]);
                       gin[0] = detail::unfold_kernel(scaled, g);
                   });
}

template <typename T>
typename Tape<T>::Id cyclic_shift(Tape<T>& tp, typename Tape<T>::Id img, int pixels) {
    using Node = typename Tape<T>::Node;
    return tp.push({img}, detail::cyclic_shift_kernel(tp.value(img), pixels),
                   [pixels](const Tape<T>&, const Node&, const TensorT<T>& gout,
                            std::vector<TensorT<T>>& gin) {
                       gin[0] = detail::cyclic_shift_kernel(gout, -pixels);
                   });
}

template <typename T>
typename Tape<T>::Id tokens_to_spatial(Tape<T>& tp, typename Tape<T>::Id tokens, int grid_h,
                                       int grid_w) {
    using Node = typename Tape<T>::Node;
    return tp.push({tokens}, detail::tokens_to_spatial_kernel(tp.value(tokens), grid_h, grid_w),
                   [](const Tape<T>&, const Node&, const TensorT<T>& gout,
                      std::vector<TensorT<T>>& gin) {
                       gin[0] = detail::spatial_to_tokens_kernel(gout);
                   });
}

template <typename T>
typename Tape<T>::Id spatial_to_tokens(Tape<T>& tp, typename Tape<T>::Id img) {
    using Node = typename Tape<T>::Node;
    const TensorT<T>& v = tp.value(img);
    const int h = static_cast<int>(v.dim(1));
    const int w = static_cast<int>(v.dim(2));
    return tp.push({img}, detail::spatial_to_tokens_kernel(v),
                   [h, w](const Tape<T>&, const Node&, const TensorT<T>& gout,
                          std::vector<TensorT<T>>& gin) {
                       gin[0] = detail::tokens_to_spatial_kernel(gout, h, w);
                   });
}

}  // namespace tednet
