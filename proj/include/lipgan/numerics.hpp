#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "lipgan/errors.hpp"
#include "lipgan/tensor.hpp"

namespace lipgan {

struct EigenSym {
    std::vector<double> eigenvalues;  // unordered
    Tensor eigenvectors;              // columns, same order as eigenvalues
};

// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Dense and exact to
// machine precision; intended for the small matrices this project deals in
// (layer Grams, 2-D sample covariances).
inline EigenSym jacobi_eigen_sym(const Tensor& m, int max_sweeps = 64) {
    if (m.shape.size() != 2 || m.shape[0] != m.shape[1])
        throw ConfigError("jacobi_eigen_sym wants a square matrix, got " + shape_str(m.shape));
    const std::size_t n = m.shape[0];
    std::vector<double> a = m.values;
    Tensor v = Tensor::identity(n);

    auto off_diag = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += a[i * n + j] * a[i * n + j];
        return s;
    };

    double scale = 0.0;
    for (double x : a) scale = std::max(scale, std::abs(x));
    const double tol = scale > 0 ? 1e-30 * scale * scale * static_cast<double>(n * n) : 0.0;

    for (int sweep = 0; sweep < max_sweeps && off_diag() > tol; ++sweep) {
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = a[p * n + q];
                if (apq == 0.0) continue;
                double app = a[p * n + p], aqq = a[q * n + q];
                double tau = (aqq - app) / (2.0 * apq);
                double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double vkp = v.values[k * n + p], vkq = v.values[k * n + q];
                    v.values[k * n + p] = c * vkp - s * vkq;
                    v.values[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a[i * n + i];
    return {std::move(eig), std::move(v)};
}

inline double max_eigenvalue_sym(const Tensor& m) {
    EigenSym e = jacobi_eigen_sym(m);
    return *std::max_element(e.eigenvalues.begin(), e.eigenvalues.end());
}

// Square root of a (near-)PSD symmetric matrix; negative eigenvalues from
// sampling noise are clamped to zero.
inline Tensor sqrtm_psd(const Tensor& m) {
    EigenSym e = jacobi_eigen_sym(m);
    const std::size_t n = m.shape[0];
    Tensor out = Tensor::zeros({n, n});
    for (std::size_t k = 0; k < n; ++k) {
        double lam = std::sqrt(std::max(0.0, e.eigenvalues[k]));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                out.values[i * n + j] += lam * e.eigenvectors.values[i * n + k] * e.eigenvectors.values[j * n + k];
    }
    return out;
}

inline Tensor matmul_plain(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0])
        throw ConfigError("matmul_plain shape mismatch " + shape_str(a.shape) + " x " + shape_str(b.shape));
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor c = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
            double av = a.values[i * k + l];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) c.values[i * n + j] += av * b.values[l * n + j];
        }
    return c;
}

inline double trace(const Tensor& m) {
    double t = 0.0;
    for (std::size_t i = 0; i < m.shape[0]; ++i) t += m.values[i * m.shape[0] + i];
    return t;
}

}  // namespace lipgan
