#pragma once

// Central finite-difference gradient oracle. The numeric side evaluates
// forward kernels only, so it stays independent of the tape backward
// implementations it is used to check. 64-bit precision is required for the
// h = 1e-5 step to resolve anything.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tednet/tensor.hpp"

namespace tednet {

// f is any scalar functional of the tensor; each element is displaced by
// +/- h in turn.
inline TensorT<double> fd_gradient(const std::function<double(const TensorT<double>&)>& f,
                                   const TensorT<double>& x, double h = 1e-5) {
    TensorT<double> grad(x.shape());
    TensorT<double> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = probe[i];
        probe[i] = keep + h;
        const double up = f(probe);
        probe[i] = keep - h;
        const double down = f(probe);
        probe[i] = keep;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

inline double rel_error(double a, double n) {
    const double denom = std::max({std::fabs(a), std::fabs(n), 1e-3});
    return std::fabs(a - n) / denom;
}

inline double max_rel_error(const TensorT<double>& analytic, const TensorT<double>& numeric) {
    require_same_shape(analytic, numeric, "gradcheck");
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, rel_error(analytic[i], numeric[i]));
    return worst;
}

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

// Checks every differentiable primitive at randomized small shapes, one full
// transformer block, and a reduced-configuration model forward pass.
std::vector<GradCheckEntry> run_gradient_checks(std::uint64_t seed);

constexpr double kGradCheckTolerance = 1e-4;

}  // namespace tednet
