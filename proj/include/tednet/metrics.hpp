#pragma once

// SSIM and RMSE on full single-channel images. SSIM follows the reference
// formulation: 11x11 Gaussian window (sigma 1.5), C1 = (0.01*range)^2,
// C2 = (0.03*range)^2, windows fully inside the image, plain mean over
// window scores. All accumulation in double.

#include <array>
#include <cmath>

#include "tednet/tensor.hpp"

namespace tednet {

struct MetricReport {
    double ssim = 0.0;
    double rmse = 0.0;
    double data_range = 0.0;
};

template <typename T>
double rmse(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "rmse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(a.size()));
}

namespace detail {

inline const std::array<double, 11>& ssim_window_1d() {
    static const std::array<double, 11> w = [] {
        std::array<double, 11> v{};
        double sum = 0.0;
        for (int i = 0; i < 11; ++i) {
            const double d = i - 5.0;
            v[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            sum += v[i];
        }
        for (double& x : v) x /= sum;
        return v;
    }();
    return w;
}

}  // namespace detail

template <typename T>
double ssim(const TensorT<T>& a, const TensorT<T>& b, double data_range) {
    require_same_shape(a, b, "ssim");
    if (a.rank() != 2) throw ShapeError("ssim: expected 2-d images, got " + shape_str(a.shape()));
    if (data_range <= 0.0) throw NumericError("ssim: data_range must be positive");
    const int h = static_cast<int>(a.dim(0));
    const int w = static_cast<int>(a.dim(1));
    constexpr int K = 11;
    if (h < K || w < K)
        throw ShapeError("ssim: image " + shape_str(a.shape()) + " smaller than the " +
                         std::to_string(K) + "x" + std::to_string(K) + " window");

    const auto& win = detail::ssim_window_1d();
    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);

    double total = 0.0;
    std::size_t windows = 0;
    for (int y0 = 0; y0 + K <= h; ++y0) {
        for (int x0 = 0; x0 + K <= w; ++x0) {
            double ma = 0, mb = 0;
            for (int r = 0; r < K; ++r)
                for (int c = 0; c < K; ++c) {
                    const double wt = win[r] * win[c];
                    ma += wt * a.at2(y0 + r, x0 + c);
                    mb += wt * b.at2(y0 + r, x0 + c);
                }
            double va = 0, vb = 0, cov = 0;
            for (int r = 0; r < K; ++r)
                for (int c = 0; c < K; ++c) {
                    const double wt = win[r] * win[c];
                    const double da = a.at2(y0 + r, x0 + c) - ma;
                    const double db = b.at2(y0 + r, x0 + c) - mb;
                    va += wt * da * da;
                    vb += wt * db * db;
                    cov += wt * da * db;
                }
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++windows;
        }
    }
    return total / static_cast<double>(windows);
}

template <typename T>
MetricReport evaluate_pair(const TensorT<T>& out, const TensorT<T>& reference,
                           double data_range) {
    return MetricReport{ssim(out, reference, data_range), rmse(out, reference), data_range};
}

}  // namespace tednet
