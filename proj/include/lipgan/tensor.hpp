#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "lipgan/errors.hpp"

namespace lipgan {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major tensor of 64-bit floats. Rank 0 (scalar), 1 and 2 are the
// only ranks the rest of the library produces.
struct Tensor {
    Shape shape;
    std::vector<double> values;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
        if (numel(shape) != values.size())
            throw ConfigError("tensor value count " + std::to_string(values.size()) +
                              " does not match shape " + shape_str(shape));
    }

    static Tensor zeros(Shape s) {
        std::size_t n = numel(s);
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }
    static Tensor full(Shape s, double v) {
        std::size_t n = numel(s);
        return Tensor(std::move(s), std::vector<double>(n, v));
    }
    static Tensor scalar(double v) { return Tensor({}, {v}); }
    static Tensor row(std::initializer_list<double> v) {
        return Tensor({v.size()}, std::vector<double>(v));
    }
    static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> v) {
        return Tensor({r, c}, std::move(v));
    }
    static Tensor identity(std::size_t n) {
        Tensor t = zeros({n, n});
        for (std::size_t i = 0; i < n; ++i) t.values[i * n + i] = 1.0;
        return t;
    }

    std::size_t size() const { return values.size(); }
    bool is_scalar() const { return values.size() == 1 && shape.empty(); }

    double item() const {
        if (values.size() != 1) throw UsageError("item() on non-scalar tensor " + shape_str(shape));
        return values[0];
    }

    std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
    std::size_t cols() const {
        if (shape.size() == 2) return shape[1];
        if (shape.size() == 1) return shape[0];
        return 1;
    }
    double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace lipgan
