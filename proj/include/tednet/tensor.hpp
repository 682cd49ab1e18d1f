#pragma once

// Dense row-major tensor plus the handful of numeric kernels everything else
// is built from. All kernels are pure, check shapes up front and reject
// non-finite results: a NaN or Inf anywhere is an error, never a silent value.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace tednet {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct GeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

// Global cap on worker threads used by the large matmul kernels. Results are
// bit-identical for any setting: each output row is computed by exactly one
// thread with a fixed accumulation order.
inline std::atomic<int>& max_threads_ref() {
    static std::atomic<int> v{0};  // 0 = use hardware_concurrency
    return v;
}
inline void set_max_threads(int n) { max_threads_ref().store(n); }
inline int effective_threads() {
    int n = max_threads_ref().load();
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, std::min(n, 16));
}

template <typename Fn>
void parallel_rows(std::size_t rows, std::size_t work_per_row, Fn fn) {
    const std::size_t kMinWork = 1u << 22;
    int nt = effective_threads();
    if (nt <= 1 || rows < 2 || rows * work_per_row < kMinWork) {
        fn(std::size_t{0}, rows);
        return;
    }
    nt = static_cast<int>(std::min<std::size_t>(nt, rows));
    std::vector<std::thread> pool;
    pool.reserve(nt - 1);
    std::size_t chunk = (rows + nt - 1) / nt;
    for (int t = 1; t < nt; ++t) {
        std::size_t b = t * chunk;
        std::size_t e = std::min(rows, b + chunk);
        if (b >= e) break;
        pool.emplace_back(fn, b, e);
    }
    fn(std::size_t{0}, std::min(rows, chunk));
    for (auto& th : pool) th.join();
}

template <typename T>
class TensorT {
    static_assert(std::is_floating_point_v<T>);

public:
    TensorT() = default;
    explicit TensorT(Shape shape)
        : shape_(std::move(shape)), data_(shape_numel(shape_), T(0)) {}
    TensorT(Shape shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_numel(shape_) != data_.size())
            throw ShapeError("tensor: shape " + shape_str(shape_) + " does not match " +
                             std::to_string(data_.size()) + " values");
    }

    static TensorT zeros(Shape s) { return TensorT(std::move(s)); }
    static TensorT full(Shape s, T v) {
        TensorT t(std::move(s));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }
    static TensorT ones(Shape s) { return full(std::move(s), T(1)); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }

    T& at2(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    T at2(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    T& at3(std::size_t ch, std::size_t y, std::size_t x) {
        return data_[(ch * shape_[1] + y) * shape_[2] + x];
    }
    T at3(std::size_t ch, std::size_t y, std::size_t x) const {
        return data_[(ch * shape_[1] + y) * shape_[2] + x];
    }

    // Same data, new shape; element count must match.
    TensorT reshaped(Shape s) const {
        if (shape_numel(s) != data_.size())
            throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(s));
        return TensorT(std::move(s), data_);
    }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    friend bool operator==(const TensorT& a, const TensorT& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;

template <typename T>
void ensure_finite(const TensorT<T>& t, const char* op) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i]))
            throw NumericError(std::string(op) + ": non-finite value at flat index " +
                               std::to_string(i));
    }
}

template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
}

// ---- elementwise ----

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "add");
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    ensure_finite(out, "add");
    return out;
}

template <typename T>
void add_inplace(TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "add");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "sub");
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    ensure_finite(out, "sub");
    return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "mul");
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    ensure_finite(out, "mul");
    return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T s) {
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    ensure_finite(out, "scale");
    return out;
}

// ---- matmul family ----

template <typename T>
void require_matrix(const TensorT<T>& a, const char* op) {
    if (a.rank() != 2)
        throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

// c[m x n] = a[m x k] . b[k x n]
template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " . " +
                         shape_str(b.shape()));
    TensorT<T> c(Shape{m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    parallel_rows(m, k * n, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            T* crow = pc + i * n;
            for (std::size_t t = 0; t < k; ++t) {
                const T av = pa[i * k + t];
                const T* brow = pb + t * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
    ensure_finite(c, "matmul");
    return c;
}

// c[m x n] = a[m x k] . b[n x k]^T   (rows of b are contiguous)
template <typename T>
TensorT<T> matmul_nt(const TensorT<T>& a, const TensorT<T>& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k)
        throw ShapeError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) +
                         " . " + shape_str(b.shape()) + "^T");
    TensorT<T> c(Shape{m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    parallel_rows(m, k * n, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            const T* arow = pa + i * k;
            for (std::size_t j = 0; j < n; ++j) {
                const T* brow = pb + j * k;
                // four independent accumulators; fixed summation order
                T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
                std::size_t t = 0;
                for (; t + 4 <= k; t += 4) {
                    s0 += arow[t] * brow[t];
                    s1 += arow[t + 1] * brow[t + 1];
                    s2 += arow[t + 2] * brow[t + 2];
                    s3 += arow[t + 3] * brow[t + 3];
                }
                for (; t < k; ++t) s0 += arow[t] * brow[t];
                pc[i * n + j] = (s0 + s1) + (s2 + s3);
            }
        }
    });
    ensure_finite(c, "matmul_nt");
    return c;
}

// c[m x n] = a[k x m]^T . b[k x n]
template <typename T>
TensorT<T> matmul_tn(const TensorT<T>& a, const TensorT<T>& b) {
    require_matrix(a, "matmul_tn");
    require_matrix(b, "matmul_tn");
    const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw ShapeError("matmul_tn: inner dimensions disagree, " + shape_str(a.shape()) +
                         "^T . " + shape_str(b.shape()));
    TensorT<T> c(Shape{m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    // split output columns across threads; each (i, j) keeps one owner
    parallel_rows(n, k * m, [&](std::size_t c0, std::size_t c1) {
        if (c0 >= c1) return;
        for (std::size_t t = 0; t < k; ++t) {
            const T* arow = pa + t * m;
            const T* brow = pb + t * n;
            for (std::size_t i = 0; i < m; ++i) {
                const T av = arow[i];
                T* crow = pc + i * n;
                for (std::size_t j = c0; j < c1; ++j) crow[j] += av * brow[j];
            }
        }
    });
    ensure_finite(c, "matmul_tn");
    return c;
}

template <typename T>
TensorT<T> transpose2d(const TensorT<T>& a) {
    require_matrix(a, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    TensorT<T> out(Shape{n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at2(j, i) = a.at2(i, j);
    return out;
}

// ---- projections and normalization ----

// a[n x d_in] . w[d_in x d_out] + b[d_out] broadcast over rows
template <typename T>
TensorT<T> linear(const TensorT<T>& a, const TensorT<T>& w, const TensorT<T>& b) {
    if (b.rank() != 1 || b.dim(0) != w.dim(1))
        throw ShapeError("linear: bias " + shape_str(b.shape()) + " does not match weight " +
                         shape_str(w.shape()));
    TensorT<T> out = matmul(a, w);
    const std::size_t n = out.dim(0), d = out.dim(1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out.at2(i, j) += b[j];
    ensure_finite(out, "linear");
    return out;
}

template <typename T>
TensorT<T> colsum(const TensorT<T>& a) {
    require_matrix(a, "colsum");
    TensorT<T> out(Shape{a.dim(1)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < a.dim(1); ++j) out[j] += a.at2(i, j);
    return out;
}

template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& a) {
    require_matrix(a, "softmax_rows");
    const std::size_t m = a.dim(0), n = a.dim(1);
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < m; ++i) {
        T mx = a.at2(i, 0);
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, a.at2(i, j));
        T sum = 0;
        for (std::size_t j = 0; j < n; ++j) {
            T e = std::exp(a.at2(i, j) - mx);
            out.at2(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < n; ++j) out.at2(i, j) /= sum;
    }
    ensure_finite(out, "softmax_rows");
    return out;
}

// Normalizes each slice along the last axis to mean 0 / variance 1, then
// applies the affine pair: out = normalized * gamma + beta.
template <typename T>
TensorT<T> layer_norm(const TensorT<T>& a, const TensorT<T>& gamma, const TensorT<T>& beta,
                      T eps) {
    if (a.rank() < 1) throw ShapeError("layer_norm: input must have at least one axis");
    if (eps <= T(0)) throw NumericError("layer_norm: eps must be positive");
    const std::size_t d = a.dim(a.rank() - 1);
    if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d)
        throw ShapeError("layer_norm: affine params must be [" + std::to_string(d) + "], got " +
                         shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
    const std::size_t rows = a.size() / d;
    TensorT<T> out(a.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = a.data() + r * d;
        T* y = out.data() + r * d;
        T mean = 0;
        for (std::size_t j = 0; j < d; ++j) mean += x[j];
        mean /= T(d);
        T var = 0;
        for (std::size_t j = 0; j < d; ++j) {
            T dv = x[j] - mean;
            var += dv * dv;
        }
        var /= T(d);
        const T inv = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) y[j] = (x[j] - mean) * inv * gamma[j] + beta[j];
    }
    ensure_finite(out, "layer_norm");
    return out;
}

// ---- activations ----

template <typename T>
T gelu_scalar(T x) {
    return T(0.5) * x * (T(1) + std::erf(x / std::sqrt(T(2))));
}

template <typename T>
T gelu_grad_scalar(T x) {
    const T inv_sqrt2pi = T(0.3989422804014327);
    return T(0.5) * (T(1) + std::erf(x / std::sqrt(T(2)))) +
           x * inv_sqrt2pi * std::exp(T(-0.5) * x * x);
}

template <typename T>
TensorT<T> gelu(const TensorT<T>& a) {
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = gelu_scalar(a[i]);
    ensure_finite(out, "gelu");
    return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
    return out;
}

// ---- column structure (multi-head splits) ----

template <typename T>
TensorT<T> slice_cols(const TensorT<T>& a, std::size_t c0, std::size_t c1) {
    require_matrix(a, "slice_cols");
    if (c0 >= c1 || c1 > a.dim(1))
        throw ShapeError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") invalid for " + shape_str(a.shape()));
    const std::size_t m = a.dim(0), w = c1 - c0;
    TensorT<T> out(Shape{m, w});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out.at2(i, j) = a.at2(i, c0 + j);
    return out;
}

template <typename T>
TensorT<T> concat_cols(const std::vector<TensorT<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
    const std::size_t m = parts[0].dim(0);
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_matrix(p, "concat_cols");
        if (p.dim(0) != m) throw ShapeError("concat_cols: row counts differ");
        total += p.dim(1);
    }
    TensorT<T> out(Shape{m, total});
    std::size_t base = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < p.dim(1); ++j) out.at2(i, base + j) = p.at2(i, j);
        base += p.dim(1);
    }
    return out;
}

// ---- reductions ----

template <typename T>
T sum_all(const TensorT<T>& a) {
    T s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
    return s;
}

template <typename T>
T mse_value(const TensorT<T>& pred, const TensorT<T>& target) {
    require_same_shape(pred, target, "mse");
    T s = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        T d = pred[i] - target[i];
        s += d * d;
    }
    s /= T(pred.size());
    if (!std::isfinite(s)) throw NumericError("mse: non-finite loss");
    return s;
}

}  // namespace tednet
