#pragma once

// Reverse-mode gradient tape over a fixed primitive set. Every operation that
// participates in a gradient is recorded as one node holding its forward value
// and a backward closure; grad() replays the tape once, strictly in reverse
// recording order, accumulating into each node's slot. One tape per training
// step, never shared across threads.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "tednet/tensor.hpp"

namespace tednet {

template <typename T>
class Tape {
public:
    using Id = std::uint32_t;

    struct Node {
        std::vector<Id> inputs;
        TensorT<T> value;
        // Fills one gradient per input, given the gradient of the output.
        std::function<void(const Tape&, const Node&, const TensorT<T>&, std::vector<TensorT<T>>&)>
            back;
    };

    Id leaf(TensorT<T> v) {
        nodes_.push_back(Node{{}, std::move(v), nullptr});
        return static_cast<Id>(nodes_.size() - 1);
    }

    template <typename Fn>
    Id push(std::vector<Id> inputs, TensorT<T> value, Fn&& back) {
        for (Id in : inputs) check_id(in);
        nodes_.push_back(Node{std::move(inputs), std::move(value), std::forward<Fn>(back)});
        return static_cast<Id>(nodes_.size() - 1);
    }

    const TensorT<T>& value(Id id) const {
        check_id(id);
        return nodes_[id].value;
    }

    const TensorT<T>& input_value(const Node& n, std::size_t i) const {
        return nodes_[n.inputs[i]].value;
    }

    std::size_t size() const { return nodes_.size(); }

    // Gradient of a scalar loss with respect to each requested node, in order.
    // Nodes the loss does not depend on get a zero gradient of their shape.
    std::vector<TensorT<T>> grad(Id loss, std::span<const Id> wrt) const {
        check_id(loss);
        for (Id w : wrt) check_id(w);
        if (nodes_[loss].value.size() != 1)
            throw ShapeError("grad: loss must be scalar, got " +
                             shape_str(nodes_[loss].value.shape()));

        std::vector<TensorT<T>> acc(nodes_.size());
        acc[loss] = TensorT<T>::ones(nodes_[loss].value.shape());
        std::vector<TensorT<T>> gins;
        for (Id id = loss + 1; id-- > 0;) {
            const Node& node = nodes_[id];
            if (acc[id].empty() || !node.back) continue;
            gins.clear();
            gins.resize(node.inputs.size());
            node.back(*this, node, acc[id], gins);
            for (std::size_t i = 0; i < node.inputs.size(); ++i) {
                if (gins[i].empty()) continue;
                TensorT<T>& slot = acc[node.inputs[i]];
                if (slot.empty())
                    slot = std::move(gins[i]);
                else
                    add_inplace(slot, gins[i]);
            }
        }

        std::vector<TensorT<T>> out;
        out.reserve(wrt.size());
        for (Id w : wrt) {
            if (acc[w].empty())
                out.push_back(TensorT<T>::zeros(nodes_[w].value.shape()));
            else
                out.push_back(std::move(acc[w]));
        }
        return out;
    }

private:
    void check_id(Id id) const {
        if (id >= nodes_.size())
            throw ShapeError("tape: id " + std::to_string(id) + " is not on this tape");
    }

    std::vector<Node> nodes_;
};

// ---- recorded primitives ----

template <typename T>
typename Tape<T>::Id add(Tape<T>& tp, typename Tape<T>::Id a, typename Tape<T>::Id b) {
    using Node = typename Tape<T>::Node;
    return tp.push({a, b}, add(tp.value(a), tp.value(b)),
                   [](const Tape<T>&, const Node&, const TensorT<T>& g,
                      std::vector<TensorT<T>>& gin) {
                       gin[0] = g;
                       gin[1] = g;
                   });
}

template <typename T>
typename Tape<T>::Id scale(Tape<T>& tp, typename Tape<T>::Id a, T s) {
    using Node = typename Tape<T>::Node;
    return tp.push({a}, scale(tp.value(a), s),
                   [s](const Tape<T>&, const Node&, const TensorT<T>& g,
                       std::vector<TensorT<T>>& gin) { gin[0] = scale(g, s); });
}

template <typename T>
typename Tape<T>::Id mul(Tape<T>& tp, typename Tape<T>::Id a, typename Tape<T>::Id b) {
    using Node = typename Tape<T>::Node;
    return tp.push({a, b}, mul(tp.value(a), tp.value(b)),
                   [](const Tape<T>& t, const Node& n, const TensorT<T>& g,
                      std::vector<TensorT<T>>& gin) {
                       gin[0] = mul(g, t.input_value(n, 1));
                       gin[1] = mul(g, t.input_value(n, 0));
                   });
}

template <typename T>
typename Tape<T>::Id matmul(Tape<T>& tp, typename Tape<T>::Id a, typename Tape<T>::Id b) {
    using Node = typename Tape<T>::Node;
    return tp.push({a, b}, matmul(tp.value(a), tp.value(b)),
                   [](const Tape<T>& t, const Node& n, const TensorT<T>& g,
                      std::vector<TensorT<T>>& gin) {
                       gin[0] = matmul_nt(g, t.input_value(n, 1));
                       gin[1] = matmul_tn(t.input_value(n, 0), g);
                   });
}

// a[m x k] . b[n x k]^T
template <typename T>
typename Tape<T>::Id matmul_nt(Tape<T>& tp, typename Tape<T>::Id a, typename Tape<T>::Id b) {
    using Node = typename Tape<T>::Node;
    return tp.push({a, b}, matmul_nt(tp.value(a), tp.value(b)),
                   [](const Tape<T>& t, const Node& n, const TensorT<T>& g,
                      std::vector<TensorT<T>>& gin) {
                       gin[0] = matmul(g, t.input_value(n, 1));
                       gin[1] = matmul_tn(g, t.input_value(n, 0));
                   });
}

template <typename T>
typename Tape<T>::Id linear(Tape<T>& tp, typename Tape<T>::Id a, typename Tape<T>::Id w,
                            typename Tape<T>::Id b) {
    using Node = typename Tape<T>::Node;
    return tp.push({a, w, b}, linear(tp.value(a), tp.value(w), tp.value(b)),
                   [](const Tape<T>& t, const Node& n, const TensorT<T>& g,
                      std::vector<TensorT<T>>& gin) {
                       gin[0] = matmul_nt(g, t.input_value(n, 1));
                       gin[1] = matmul_tn(t.input_value(n, 0), g);
                       gin[2] = colsum(g);
                   });
}

template <typename T>
typename Tape<T>::Id softmax_rows(Tape<T>& tp, typename Tape<T>::Id a) {
    using Node = typename Tape<T>::Node;
    return tp.push({a}, softmax_rows(tp.value(a)),
                   [](const Tape<T>&, const Node& n, const TensorT<T>& g,
                      std::vector<TensorT<T>>& gin) {
                       const TensorT<T>& s = n.value;
                       TensorT<T> out(s.shape());
                       const std::size_t m = s.dim(0), d = s.dim(1);
                       for (std::size_t i = 0; i < m; ++i) {
                           T dot = 0;
                           for (std::size_t j = 0; j < d; ++j) dot += g.at2(i, j) * s.at2(i, j);
                           for (std::size_t j = 0; j < d; ++j)
                               out.at2(i, j) = s.at2(i, j) * (g.at2(i, j) - dot);
                       }
                       gin[0] = std::move(out);
                   });
}

template <typename T>
typename Tape<T>::Id layer_norm(Tape<T>& tp, typename Tape<T>::Id a, typename Tape<T>::Id gamma,
                                typename Tape<T>::Id beta, T eps) {
    using Node = typename Tape<T>::Node;
    return tp.push(
        {a, gamma, beta}, layer_norm(tp.value(a), tp.value(gamma), tp.value(beta), eps),
        [eps](const Tape<T>& t, const Node& n, const TensorT<T>& g,
              std::vector<TensorT<T>>& gin) {
            const TensorT<T>& x = t.input_value(n, 0);
            const TensorT<T>& gam = t.input_value(n, 1);
            const std::size_t d = x.dim(x.rank() - 1);
            const std::size_t rows = x.size() / d;
            TensorT<T> gx(x.shape());
            TensorT<T> ggamma(Shape{d});
            TensorT<T> gbeta(Shape{d});
            for (std::size_t r = 0; r < rows; ++r) {
                const T* xr = x.data() + r * d;
                const T* gr = g.data() + r * d;
                T* outr = gx.data() + r * d;
                T mean = 0;
                for (std::size_t j = 0; j < d; ++j) mean += xr[j];
                mean /= T(d);
                T var = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    T dv = xr[j] - mean;
                    var += dv * dv;
                }
                var /= T(d);
                const T inv = T(1) / std::sqrt(var + eps);
                // dxhat = g * gamma; dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
                T m1 = 0, m2 = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    const T xhat = (xr[j] - mean) * inv;
                    const T dxh = gr[j] * gam[j];
                    m1 += dxh;
                    m2 += dxh * xhat;
                    ggamma[j] += gr[j] * xhat;
                    gbeta[j] += gr[j];
                }
                m1 /= T(d);
                m2 /= T(d);
                for (std::size_t j = 0; j < d; ++j) {
                    const T xhat = (xr[j] - mean) * inv;
                    outr[j] = inv * (gr[j] * gam[j] - m1 - xhat * m2);
                }
            }
            gin[0] = std::move(gx);
            gin[1] = std::move(ggamma);
            gin[2] = std::move(gbeta);
        });
}

template <typename T>
typename Tape<T>::Id gelu(Tape<T>& tp, typename Tape<T>::Id a) {
    using Node = typename Tape<T>::Node;
    return tp.push({a}, gelu(tp.value(a)),
                   [](const Tape<T>& t, const Node& n, const TensorT<T>& g,
                      std::vector<TensorT<T>>& gin) {
                       const TensorT<T>& x = t.input_value(n, 0);
                       TensorT<T> out(x.shape());
                       for (std::size_t i = 0; i < x.size(); ++i)
                           out[i] = g[i] * gelu_grad_scalar(x[i]);
                       gin[0] = std::move(out);
                   });
}

template <typename T>
typename Tape<T>::Id relu(Tape<T>& tp, typename Tape<T>::Id a) {
    using Node = typename Tape<T>::Node;
    return tp.push({a}, relu(tp.value(a)),
                   [](const Tape<T>& t, const Node& n, const TensorT<T>& g,
                      std::vector<TensorT<T>>& gin) {
                       const TensorT<T>& x = t.input_value(n, 0);
                       TensorT<T> out(x.shape());
                       for (std::size_t i = 0; i < x.size(); ++i)
                           out[i] = x[i] > T(0) ? g[i] : T(0);
                       gin[0] = std::move(out);
                   });
}

template <typename T>
typename Tape<T>::Id reshape(Tape<T>& tp, typename Tape<T>::Id a, Shape s) {
    using Node = typename Tape<T>::Node;
    return tp.push({a}, tp.value(a).reshaped(std::move(s)),
                   [](const Tape<T>& t, const Node& n, const TensorT<T>& g,
                      std::vector<TensorT<T>>& gin) {
                       gin[0] = g.reshaped(t.input_value(n, 0).shape());
                   });
}

template <typename T>
typename Tape<T>::Id transpose2d(Tape<T>& tp, typename Tape<T>::Id a) {
    using Node = typename Tape<T>::Node;
    return tp.push({a}, transpose2d(tp.value(a)),
                   [](const Tape<T>&, const Node&, const TensorT<T>& g,
                      std::vector<TensorT<T>>& gin) { gin[0] = transpose2d(g); });
}

template <typename T>
typename Tape<T>::Id slice_cols(Tape<T>& tp, typename Tape<T>::Id a, std::size_t c0,
                                std::size_t c1) {
    using Node = typename Tape<T>::Node;
    return tp.push({a}, slice_cols(tp.value(a), c0, c1),
                   [c0, c1](const Tape<T>& t, const Node& n, const TensorT<T>& g,
                            std::vector<TensorT<T>>& gin) {
                       const TensorT<T>& x = t.input_value(n, 0);
                       TensorT<T> out(x.shape());
                       for (std::size_t i = 0; i < x.dim(0); ++i)
                           for (std::size_t j = c0; j < c1; ++j)
                               out.at2(i, j) = g.at2(i, j - c0);
                       gin[0] = std::move(out);
                   });
}

template <typename T>
typename Tape<T>::Id concat_cols(Tape<T>& tp, const std::vector<typename Tape<T>::Id>& parts) {
    using Node = typename Tape<T>::Node;
    std::vector<TensorT<T>> vals;
    vals.reserve(parts.size());
    for (auto id : parts) vals.push_back(tp.value(id));
    return tp.push(std::vector<typename Tape<T>::Id>(parts.begin(), parts.end()),
                   concat_cols(vals),
                   [](const Tape<T>& t, const Node& n, const TensorT<T>& g,
                      std::vector<TensorT<T>>& gin) {
                       std::size_t base = 0;
                       for (std::size_t p = 0; p < n.inputs.size(); ++p) {
                           const std::size_t w = t.input_value(n, p).dim(1);
                           gin[p] = slice_cols(g, base, base + w);
                           base += w;
                       }
                   });
}

template <typename T>
typename Tape<T>::Id sum_all(Tape<T>& tp, typename Tape<T>::Id a) {
    using Node = typename Tape<T>::Node;
    TensorT<T> v(Shape{1});
    v[0] = sum_all(tp.value(a));
    return tp.push({a}, std::move(v),
                   [](const Tape<T>& t, const Node& n, const TensorT<T>& g,
                      std::vector<TensorT<T>>& gin) {
                       gin[0] = TensorT<T>::full(t.input_value(n, 0).shape(), g[0]);
                   });
}

// Mean squared error against a constant target (the target is not a tape
// node; gradients flow to the prediction only).
template <typename T>
typename Tape<T>::Id mse(Tape<T>& tp, typename Tape<T>::Id pred, TensorT<T> target) {
    using Node = typename Tape<T>::Node;
    TensorT<T> v(Shape{1});
    v[0] = mse_value(tp.value(pred), target);
    auto tgt = std::make_shared<const TensorT<T>>(std::move(target));
    return tp.push({pred}, std::move(v),
                   [tgt](const Tape<T>& t, const Node& n, const TensorT<T>& g,
                         std::vector<TensorT<T>>& gin) {
                       const TensorT<T>& p = t.input_value(n, 0);
                       TensorT<T> out(p.shape());
                       const T c = g[0] * T(2) / T(p.size());
                       for (std::size_t i = 0; i < p.size(); ++i)
                           out[i] = c * (p[i] - (*tgt)[i]);
                       gin[0] = std::move(out);
                   });
}

}  // namespace tednet
