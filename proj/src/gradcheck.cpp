#include "tednet/gradcheck.hpp"

#include <cmath>

#include "tednet/model.hpp"
#include "tednet/rng.hpp"

namespace tednet {

namespace {

using D = double;
using Td = TensorT<D>;
using TapeD = Tape<D>;
using Id = TapeD::Id;

Td random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Td t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Scalar probe: fixed random weights keep every output element visible to
// the loss (a plain sum would zero the softmax gradient, for instance).
double weighted(const Td& out, const Td& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
    return s;
}

Id weighted(TapeD& tape, Id out, const Td& w) {
    return sum_all(tape, mul(tape, out, tape.leaf(w)));
}

struct Check {
    std::string name;
    double err = 0.0;
    void take(double e) { err = std::max(err, e); }
};

// One input of a multi-input primitive: analytic tape gradient vs the
// finite-difference oracle run through the value-level kernel.
template <typename ValueFn, typename TapeFn>
double check_input(ValueFn value_fn, TapeFn tape_fn, const std::vector<Td>& inputs,
                   std::size_t which, const Td& w) {
    TapeD tape;
    std::vector<Id> ids;
    ids.reserve(inputs.size());
    for (const Td& in : inputs) ids.push_back(tape.leaf(in));
    const Id out = tape_fn(tape, ids);
    const Id loss = weighted(tape, out, w);
    const std::vector<Td> analytic = tape.grad(loss, std::vector<Id>{ids[which]});

    std::vector<Td> probe = inputs;
    const Td numeric = fd_gradient(
        [&](const Td& x) {
            probe[which] = x;
            return weighted(value_fn(probe), w);
        },
        inputs[which]);
    return max_rel_error(analytic[0], numeric);
}

template <typename ValueFn, typename TapeFn>
void check_all_inputs(Check& c, ValueFn value_fn, TapeFn tape_fn, const std::vector<Td>& inputs,
                      const Td& w) {
    for (std::size_t i = 0; i < inputs.size(); ++i)
        c.take(check_input(value_fn, tape_fn, inputs, i, w));
}

StageGeometry random_geometry(Rng& rng, int side, bool need_cover) {
    for (;;) {
        StageGeometry g{rng.range_int(1, 4), rng.range_int(1, 3), rng.range_int(1, 2),
                        rng.range_int(0, 2)};
        if (g.span() > side + 2 * g.padding) continue;
        if (g.stride > g.span()) continue;
        if (need_cover && !g.covers(side)) continue;
        return g;
    }
}

}  // namespace

std::vector<GradCheckEntry> run_gradient_checks(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<GradCheckEntry> report;
    auto finish = [&report](Check& c) { report.push_back({c.name, c.err}); };

    const int reps = 3;

    {
        Check c{"add"};
        for (int r = 0; r < reps; ++r) {
            Shape s{rng.below(7) + 1, rng.below(7) + 1};
            std::vector<Td> in{random_tensor(rng, s), random_tensor(rng, s)};
            const Td w = random_tensor(rng, s);
            check_all_inputs(
                c, [](const std::vector<Td>& v) { return add(v[0], v[1]); },
                [](TapeD& tp, const std::vector<Id>& v) { return add(tp, v[0], v[1]); }, in, w);
        }
        finish(c);
    }
    {
        Check c{"mul"};
        for (int r = 0; r < reps; ++r) {
            Shape s{rng.below(7) + 1, rng.below(7) + 1};
            std::vector<Td> in{random_tensor(rng, s), random_tensor(rng, s)};
            const Td w = random_tensor(rng, s);
            check_all_inputs(
                c, [](const std::vector<Td>& v) { return mul(v[0], v[1]); },
                [](TapeD& tp, const std::vector<Id>& v) { return mul(tp, v[0], v[1]); }, in, w);
        }
        finish(c);
    }
    {
        Check c{"scale"};
        for (int r = 0; r < reps; ++r) {
            Shape s{rng.below(7) + 1, rng.below(7) + 1};
            std::vector<Td> in{random_tensor(rng, s)};
            const Td w = random_tensor(rng, s);
            const D f = rng.uniform(-2.0, 2.0);
            check_all_inputs(
                c, [f](const std::vector<Td>& v) { return scale(v[0], f); },
                [f](TapeD& tp, const std::vector<Id>& v) { return scale(tp, v[0], f); }, in, w);
        }
        finish(c);
    }
    {
        Check c{"matmul"};
        for (int r = 0; r < reps; ++r) {
            const std::size_t m = rng.below(6) + 1, k = rng.below(6) + 1, n = rng.below(6) + 1;
            std::vector<Td> in{random_tensor(rng, {m, k}), random_tensor(rng, {k, n})};
            const Td w = random_tensor(rng, {m, n});
            check_all_inputs(
                c, [](const std::vector<Td>& v) { return matmul(v[0], v[1]); },
                [](TapeD& tp, const std::vector<Id>& v) { return matmul(tp, v[0], v[1]); }, in, w);
        }
        finish(c);
    }
    {
        Check c{"matmul_nt"};
        for (int r = 0; r < reps; ++r) {
            const std::size_t m = rng.below(6) + 1, k = rng.below(6) + 1, n = rng.below(6) + 1;
            std::vector<Td> in{random_tensor(rng, {m, k}), random_tensor(rng, {n, k})};
            const Td w = random_tensor(rng, {m, n});
            check_all_inputs(
                c, [](const std::vector<Td>& v) { return matmul_nt(v[0], v[1]); },
                [](TapeD& tp, const std::vector<Id>& v) { return matmul_nt(tp, v[0], v[1]); }, in,
                w);
        }
        finish(c);
    }
    {
        Check c{"linear"};
        for (int r = 0; r < reps; ++r) {
            const std::size_t n = rng.below(6) + 1, din = rng.below(6) + 1,
                              dout = rng.below(6) + 1;
            std::vector<Td> in{random_tensor(rng, {n, din}), random_tensor(rng, {din, dout}),
                               random_tensor(rng, {dout})};
            const Td w = random_tensor(rng, {n, dout});
            check_all_inputs(
                c, [](const std::vector<Td>& v) { return linear(v[0], v[1], v[2]); },
                [](TapeD& tp, const std::vector<Id>& v) { return linear(tp, v[0], v[1], v[2]); },
                in, w);
        }
        finish(c);
    }
    {
        Check c{"softmax_rows"};
        for (int r = 0; r < reps; ++r) {
            Shape s{rng.below(7) + 1, rng.below(7) + 1};
            std::vector<Td> in{random_tensor(rng, s, -3.0, 3.0)};
            const Td w = random_tensor(rng, s);
            check_all_inputs(
                c, [](const std::vector<Td>& v) { return softmax_rows(v[0]); },
                [](TapeD& tp, const std::vector<Id>& v) { return softmax_rows(tp, v[0]); }, in, w);
        }
        finish(c);
    }
    {
        Check c{"layer_norm"};
        const D eps = 1e-5;
        for (int r = 0; r < reps; ++r) {
            const std::size_t n = rng.below(7) + 1, d = rng.below(6) + 2;
            std::vector<Td> in{random_tensor(rng, {n, d}), random_tensor(rng, {d}, 0.5, 1.5),
                               random_tensor(rng, {d})};
            const Td w = random_tensor(rng, {n, d});
            check_all_inputs(
                c, [eps](const std::vector<Td>& v) { return layer_norm(v[0], v[1], v[2], eps); },
                [eps](TapeD& tp, const std::vector<Id>& v) {
                    return layer_norm(tp, v[0], v[1], v[2], eps);
                },
                in, w);
        }
        finish(c);
    }
    {
        Check c{"gelu"};
        for (int r = 0; r < reps; ++r) {
            Shape s{rng.below(7) + 1, rng.below(7) + 1};
            std::vector<Td> in{random_tensor(rng, s, -3.0, 3.0)};
            const Td w = random_tensor(rng, s);
            check_all_inputs(
                c, [](const std::vector<Td>& v) { return gelu(v[0]); },
                [](TapeD& tp, const std::vector<Id>& v) { return gelu(tp, v[0]); }, in, w);
        }
        finish(c);
    }
    {
        // kink at zero: sample magnitudes bounded away from it
        Check c{"relu"};
        for (int r = 0; r < reps; ++r) {
            Shape s{rng.below(7) + 1, rng.below(7) + 1};
            Td x(s);
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double m = rng.uniform(0.2, 2.0);
                x[i] = rng.uniform() < 0.5 ? -m : m;
            }
            std::vector<Td> in{std::move(x)};
            const Td w = random_tensor(rng, s);
            check_all_inputs(
                c, [](const std::vector<Td>& v) { return relu(v[0]); },
                [](TapeD& tp, const std::vector<Id>& v) { return relu(tp, v[0]); }, in, w);
        }
        finish(c);
    }
    {
        Check c{"reshape"};
        for (int r = 0; r < reps; ++r) {
            const std::size_t a = rng.below(6) + 1, b = rng.below(6) + 1;
            std::vector<Td> in{random_tensor(rng, {a, b})};
            const Td w = random_tensor(rng, {a * b});
            check_all_inputs(
                c, [](const std::vector<Td>& v) { return v[0].reshaped({v[0].size()}); },
                [](TapeD& tp, const std::vector<Id>& v) {
                    return reshape(tp, v[0], {tp.value(v[0]).size()});
                },
                in, w);
        }
        finish(c);
    }
    {
        Check c{"transpose"};
        for (int r = 0; r < reps; ++r) {
            const std::size_t a = rng.below(6) + 1, b = rng.below(6) + 1;
            std::vector<Td> in{random_tensor(rng, {a, b})};
            const Td w = random_tensor(rng, {b, a});
            check_all_inputs(
                c, [](const std::vector<Td>& v) { return transpose2d(v[0]); },
                [](TapeD& tp, const std::vector<Id>& v) { return transpose2d(tp, v[0]); }, in, w);
        }
        finish(c);
    }
    {
        Check c{"slice_cols"};
        for (int r = 0; r < reps; ++r) {
            const std::size_t n = rng.below(6) + 1, d = rng.below(6) + 2;
            const std::size_t c0 = rng.below(d - 1), c1 = c0 + 1 + rng.below(d - c0 - 1) + 0;
            std::vector<Td> in{random_tensor(rng, {n, d})};
            const Td w = random_tensor(rng, {n, c1 - c0});
            check_all_inputs(
                c, [c0, c1](const std::vector<Td>& v) { return slice_cols(v[0], c0, c1); },
                [c0, c1](TapeD& tp, const std::vector<Id>& v) {
                    return slice_cols(tp, v[0], c0, c1);
                },
                in, w);
        }
        finish(c);
    }
    {
        Check c{"concat_cols"};
        for (int r = 0; r < reps; ++r) {
            const std::size_t n = rng.below(6) + 1, d0 = rng.below(5) + 1, d1 = rng.below(5) + 1;
            std::vector<Td> in{random_tensor(rng, {n, d0}), random_tensor(rng, {n, d1})};
            const Td w = random_tensor(rng, {n, d0 + d1});
            check_all_inputs(
                c,
                [](const std::vector<Td>& v) {
                    return concat_cols(std::vector<Td>{v[0], v[1]});
                },
                [](TapeD& tp, const std::vector<Id>& v) {
                    return concat_cols(tp, std::vector<Id>{v[0], v[1]});
                },
                in, w);
        }
        finish(c);
    }
    {
        Check c{"sum"};
        for (int r = 0; r < reps; ++r) {
            Shape s{rng.below(7) + 1, rng.below(7) + 1};
            std::vector<Td> in{random_tensor(rng, s)};
            const Td w = random_tensor(rng, {1});
            check_all_inputs(
                c,
                [](const std::vector<Td>& v) {
                    Td out(Shape{1});
                    out[0] = sum_all(v[0]);
                    return out;
                },
                [](TapeD& tp, const std::vector<Id>& v) { return sum_all(tp, v[0]); }, in, w);
        }
        finish(c);
    }
    {
        Check c{"mse"};
        for (int r = 0; r < reps; ++r) {
            Shape s{rng.below(7) + 1, rng.below(7) + 1};
            const Td target = random_tensor(rng, s);
            std::vector<Td> in{random_tensor(rng, s)};
            const Td w = random_tensor(rng, {1});
            check_all_inputs(
                c,
                [&target](const std::vector<Td>& v) {
                    Td out(Shape{1});
                    out[0] = mse_value(v[0], target);
                    return out;
                },
                [&target](TapeD& tp, const std::vector<Id>& v) {
                    return mse(tp, v[0], target);
                },
                in, w);
        }
        finish(c);
    }
    {
        Check c{"soft_split"};
        for (int r = 0; r < reps; ++r) {
            const int side = rng.range_int(4, 8);
            const std::size_t ch = rng.below(2) + 1;
            const StageGeometry g = random_geometry(rng, side, false);
            std::vector<Td> in{random_tensor(
                rng, {ch, static_cast<std::size_t>(side), static_cast<std::size_t>(side)})};
            const int tpa = g.tokens_per_axis(side);
            const Td w = random_tensor(rng, {static_cast<std::size_t>(tpa) * tpa,
                                             ch * static_cast<std::size_t>(g.kernel) * g.kernel});
            check_all_inputs(
                c, [g](const std::vector<Td>& v) { return soft_split(v[0], g).tokens; },
                [g](TapeD& tp, const std::vector<Id>& v) { return soft_split(tp, v[0], g); }, in,
                w);
        }
        finish(c);
    }
    for (const bool normalize : {false, true}) {
        Check c{normalize ? "fold_normalized" : "fold"};
        for (int r = 0; r < reps; ++r) {
            const int side = rng.range_int(4, 8);
            const int ch = rng.range_int(1, 2);
            const StageGeometry g = random_geometry(rng, side, normalize);
            const int tpa = g.tokens_per_axis(side);
            std::vector<Td> in{random_tensor(rng, {static_cast<std::size_t>(tpa) * tpa,
                                                   static_cast<std::size_t>(ch) * g.kernel *
                                                       g.kernel})};
            const Td w = random_tensor(rng, {static_cast<std::size_t>(ch),
                                             static_cast<std::size_t>(side),
                                             static_cast<std::size_t>(side)});
            check_all_inputs(
                c,
                [g, ch, side, normalize](const std::vector<Td>& v) {
                    return detail::fold_kernel(v[0], ch, side, g, normalize);
                },
                [g, ch, side, normalize](TapeD& tp, const std::vector<Id>& v) {
                    return fold(tp, v[0], ch, side, g, normalize);
                },
                in, w);
        }
        finish(c);
    }
    {
        Check c{"cyclic_shift"};
        for (int r = 0; r < reps; ++r) {
            const std::size_t side = rng.below(5) + 2;
            const int px = rng.range_int(-3, 7);
            std::vector<Td> in{random_tensor(rng, {rng.below(2) + 1, side, side})};
            const Td w = random_tensor(rng, in[0].shape());
            check_all_inputs(
                c, [px](const std::vector<Td>& v) { return cyclic_shift(v[0], px); },
                [px](TapeD& tp, const std::vector<Id>& v) { return cyclic_shift(tp, v[0], px); },
                in, w);
        }
        finish(c);
    }
    {
        Check c{"tokens_to_spatial"};
        for (int r = 0; r < reps; ++r) {
            const int gh = rng.range_int(1, 3), gw = rng.range_int(1, 3);
            const std::size_t d = rng.below(6) + 1;
            std::vector<Td> in{
                random_tensor(rng, {static_cast<std::size_t>(gh) * gw, d})};
            const Td w = random_tensor(rng, {d, static_cast<std::size_t>(gh),
                                             static_cast<std::size_t>(gw)});
            check_all_inputs(
                c,
                [gh, gw](const std::vector<Td>& v) {
                    return detail::tokens_to_spatial_kernel(v[0], gh, gw);
                },
                [gh, gw](TapeD& tp, const std::vector<Id>& v) {
                    return tokens_to_spatial(tp, v[0], gh, gw);
                },
                in, w);
        }
        finish(c);
    }
    {
        Check c{"spatial_to_tokens"};
        for (int r = 0; r < reps; ++r) {
            const std::size_t d = rng.below(6) + 1, gh = rng.below(3) + 1, gw = rng.below(3) + 1;
            std::vector<Td> in{random_tensor(rng, {d, gh, gw})};
            const Td w = random_tensor(rng, {gh * gw, d});
            check_all_inputs(
                c,
                [](const std::vector<Td>& v) { return detail::spatial_to_tokens_kernel(v[0]); },
                [](TapeD& tp, const std::vector<Id>& v) { return spatial_to_tokens(tp, v[0]); },
                in, w);
        }
        finish(c);
    }
    {
        Check c{"transformer_block"};
        const int n = 4, d = 8, heads = 2, mlp_ratio = 2;
        TransformerBlockParams<D> p = make_zero_block<D>(d, heads, mlp_ratio);
        p.visit("tb", [&rng](const std::string&, Td& t) {
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-0.5, 0.5);
        });
        const Td tokens = random_tensor(rng, {n, d});
        const Td w = random_tensor(rng, {n, d});
        const TransformerOptions opt;

        // analytic: tokens and every parameter via one tape
        TapeD tape;
        TapeCtx<D> cx{tape};
        auto lifted = lift_block(cx, p);
        const Id tid = tape.leaf(tokens);
        const Id out = transformer_block_op(cx, tid, lifted, opt);
        const Id loss = weighted(tape, out, w);
        std::vector<Id> wrt{tid};
        lifted.visit("tb", [&wrt](const std::string&, Id& id) { wrt.push_back(id); });
        const std::vector<Td> analytic = tape.grad(loss, wrt);

        // numeric: displace tokens, then each parameter tensor in turn
        c.take(max_rel_error(analytic[0], fd_gradient(
                                              [&](const Td& x) {
                                                  return weighted(
                                                      transformer_block(x, p, opt), w);
                                              },
                                              tokens)));
        std::size_t slot = 1;
        std::vector<Td*> tensors;
        p.visit("tb", [&tensors](const std::string&, Td& t) { tensors.push_back(&t); });
        for (Td* t : tensors) {
            const Td numeric = fd_gradient(
                [&](const Td& x) {
                    const Td keep = *t;
                    *t = x;
                    const double v = weighted(transformer_block(tokens, p, opt), w);
                    *t = keep;
                    return v;
                },
                *t);
            c.take(max_rel_error(analytic[slot++], numeric));
        }
        finish(c);
    }
    {
        // reduced-configuration end-to-end pass; numeric probes hit a few
        // entries of every distinct parameter tensor
        Check c{"model_forward"};
        ModelConfig cfg;
        cfg.patch_side = 16;
        cfg.embed_dim = 16;
        cfg.heads = 2;
        cfg.mlp_ratio = 2;
        const ShapePlan plan = plan_shapes(cfg);
        TedNetParams<D> params = init_params<D>(cfg, seed + 7);
        const Td x = random_tensor(rng, {1, 16, 16}, 0.0, 1.0);
        const Td w = random_tensor(rng, {1, 16, 16});

        TapeD tape;
        TapeCtx<D> cx{tape};
        auto lifted = lift_params(cx, params);
        const Id xid = tape.leaf(x);
        const Id out = forward_op(cx, xid, lifted, cfg, plan);
        const Id loss = weighted(tape, out, w);
        std::vector<Id> wrt{xid};
        for (Id id : handle_list(lifted)) wrt.push_back(id);
        const std::vector<Td> analytic = tape.grad(loss, wrt);

        auto eval = [&]() {
            return weighted(forward(x, params, cfg, plan), w);
        };
        // input image: probe a handful of pixels
        {
            Td xp = x;
            for (const std::size_t i : {std::size_t{0}, x.size() / 2, x.size() - 1}) {
                const double keep = xp[i];
                const double h = 1e-5;
                xp[i] = keep + h;
                const double up = weighted(forward(xp, params, cfg, plan), w);
                xp[i] = keep - h;
                const double dn = weighted(forward(xp, params, cfg, plan), w);
                xp[i] = keep;
                c.take(rel_error(analytic[0][i], (up - dn) / (2 * h)));
            }
        }
        std::vector<Td*> tensors;
        params.visit([&tensors](const std::string&, Td& t) { tensors.push_back(&t); });
        for (std::size_t p = 0; p < tensors.size(); ++p) {
            Td& t = *tensors[p];
            for (const std::size_t i :
                 {std::size_t{0}, t.size() / 2, t.size() - 1}) {
                const double keep = t[i];
                const double h = 1e-5;
                t[i] = keep + h;
                const double up = eval();
                t[i] = keep - h;
                const double dn = eval();
                t[i] = keep;
                c.take(rel_error(analytic[p + 1][i], (up - dn) / (2 * h)));
            }
        }
        finish(c);
    }

    return report;
}

}  // namespace tednet
