#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctb {

/// Dense row-major array of doubles with a dynamic shape.
///
/// Images are [H,W], sinograms [num_angles,num_detectors], scalars [1].
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != data.size())
            throw std::invalid_argument("Tensor: shape/data size mismatch");
    }

    static Tensor zeros(std::vector<std::size_t> s) {
        std::size_t n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }

    static Tensor full(std::vector<std::size_t> s, double v) {
        std::size_t n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(n, v));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // 2-D access, shape [rows, cols]
    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    // 3-D access, shape [c, h, w]
    double& at(std::size_t c, std::size_t i, std::size_t j) {
        return data[(c * shape[1] + i) * shape[2] + j];
    }
    double at(std::size_t c, std::size_t i, std::size_t j) const {
        return data[(c * shape[1] + i) * shape[2] + j];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline double dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel())
        throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
    return s;
}

inline double sq_norm(const Tensor& a) { return dot(a, a); }
inline double norm2(const Tensor& a) { return std::sqrt(sq_norm(a)); }

inline double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double v : a.data) m = std::max(m, std::fabs(v));
    return m;
}

inline double min_value(const Tensor& a) {
    double m = a.data.empty() ? 0.0 : a.data[0];
    for (double v : a.data) m = std::min(m, v);
    return m;
}

inline double max_value(const Tensor& a) {
    double m = a.data.empty() ? 0.0 : a.data[0];
    for (double v : a.data) m = std::max(m, v);
    return m;
}

inline Tensor operator+(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("tensor add: shape mismatch");
    Tensor r = a;
    for (std::size_t i = 0; i < r.numel(); ++i) r.data[i] += b.data[i];
    return r;
}

inline Tensor operator-(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("tensor sub: shape mismatch");
    Tensor r = a;
    for (std::size_t i = 0; i < r.numel(); ++i) r.data[i] -= b.data[i];
    return r;
}

inline Tensor operator*(double c, const Tensor& a) {
    Tensor r = a;
    for (double& v : r.data) v *= c;
    return r;
}

using Image = Tensor;     // [H, W]
using Sinogram = Tensor;  // [num_angles, num_detectors]

}  // namespace ctb
