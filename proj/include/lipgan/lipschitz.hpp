#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "lipgan/autodiff.hpp"
#include "lipgan/errors.hpp"
#include "lipgan/nn.hpp"
#include "lipgan/numerics.hpp"
#include "lipgan/rng.hpp"
#include "lipgan/tensor.hpp"

namespace lipgan {

// Exact largest singular value via Jacobi eigen-decomposition of the smaller
// Gram matrix. This is the oracle the power-iteration estimate is checked
// against; keep the two routes independent.
inline double spectral_norm_exact(const Tensor& w) {
    if (w.shape.size() != 2) throw ConfigError("spectral_norm_exact wants a matrix, got " + shape_str(w.shape));
    const std::size_t m = w.shape[0], n = w.shape[1];
    const bool use_cols = n <= m;
    const std::size_t k = use_cols ? n : m;
    Tensor gram = Tensor::zeros({k, k});
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i; j < k; ++j) {
            double s = 0.0;
            if (use_cols) {
                for (std::size_t l = 0; l < m; ++l) s += w.values[l * n + i] * w.values[l * n + j];
            } else {
                for (std::size_t l = 0; l < n; ++l) s += w.values[i * n + l] * w.values[j * n + l];
            }
            gram.values[i * k + j] = gram.values[j * k + i] = s;
        }
    return std::sqrt(std::max(0.0, max_eigenvalue_sym(gram)));
}

// Persistent power-iteration state for one layer. `u` estimates the dominant
// right singular vector (length = weight columns).
struct SnState {
    double k_sn = 1.0;
    std::vector<double> u;
    int power_iters_per_step = 1;
    bool flagged_zero = false;

    static SnState init(double k_sn, std::size_t cols, Rng& rng, int iters_per_step = 1) {
        SnState st;
        st.k_sn = k_sn;
        st.power_iters_per_step = iters_per_step;
        st.u.resize(cols);
        for (double& v : st.u) v = rng.normal();
        double norm = l2_norm(st.u);
        if (norm == 0.0) st.u[0] = norm = 1.0;
        for (double& v : st.u) v /= norm;
        return st;
    }
};

namespace detail {

struct PowerStep {
    double sigma = 0.0;          // Rayleigh estimate, never above sigma(W)
    std::vector<double> left;    // unit y
    std::vector<double> right;   // unit u'
    bool zero = false;
};

inline PowerStep power_step(const Tensor& w, const std::vector<double>& u) {
    const std::size_t m = w.shape[0], n = w.shape[1];
    PowerStep out;
    out.left.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += w.values[i * n + j] * u[j];
        out.left[i] = s;
    }
    double zn = l2_norm(out.left);
    if (zn == 0.0) {
        out.zero = true;
        return out;
    }
    for (double& v : out.left) v /= zn;
    out.right.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double yi = out.left[i];
        for (std::size_t j = 0; j < n; ++j) out.right[j] += w.values[i * n + j] * yi;
    }
    out.sigma = l2_norm(out.right);
    if (out.sigma > 0.0)
        for (double& v : out.right) v /= out.sigma;
    return out;
}

}  // namespace detail

// Runs state.power_iters_per_step warm-start iterations and returns the
// Rayleigh estimate sigma_hat = ||W^T y||, a lower bound on sigma(W).
// An all-zero matrix yields 0 and flags the state.
inline double power_iteration(const Tensor& w, SnState& state) {
    if (w.shape.size() != 2) throw ConfigError("power_iteration wants a matrix");
    if (state.u.size() != w.shape[1]) throw ConfigError("power-iteration state has wrong width");
    double sigma = 0.0;
    for (int it = 0; it < state.power_iters_per_step; ++it) {
        detail::PowerStep step = detail::power_step(w, state.u);
        if (step.zero) {
            state.flagged_zero = true;
            return 0.0;
        }
        sigma = step.sigma;
        state.u = step.right;
    }
    return sigma;
}

// Iterate until the estimate stabilizes; used at cold start and by the
// exactness checks.
inline double power_iteration_converged(const Tensor& w, SnState& state, double rel_tol = 1e-13,
                                        int max_iters = 20000) {
    double prev = -1.0, sigma = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        detail::PowerStep step = detail::power_step(w, state.u);
        if (step.zero) {
            state.flagged_zero = true;
            return 0.0;
        }
        sigma = step.sigma;
        state.u = step.right;
        if (prev >= 0.0 && std::abs(sigma - prev) <= rel_tol * sigma) break;
        prev = sigma;
    }
    return sigma;
}

// Normalized weight views on the tape: W_bar = k_sn * W / sigma_hat(W), with
// the gradient flowing through sigma_hat via the final Rayleigh quotient
// (left/right vectors held constant). Biases are untouched.
inline MlpVars spectral_normalize(Tape& tape, const MlpVars& raw, std::vector<SnState>& states, bool update_u) {
    if (states.size() != raw.weights.size())
        throw ConfigError("one SnState per layer required");
    MlpVars out;
    out.biases = raw.biases;
    for (std::size_t l = 0; l < raw.weights.size(); ++l) {
        Var wv = raw.weights[l];
        const Tensor& w = wv.value();
        SnState& st = states[l];
        detail::PowerStep step{};
        std::vector<double> u = st.u;
        for (int it = 0; it < st.power_iters_per_step; ++it) {
            step = detail::power_step(w, u);
            if (step.zero) break;
            u = step.right;
        }
        if (step.zero) {
            st.flagged_zero = true;
            out.weights.push_back(wv);  // zero matrix: identity passthrough
            continue;
        }
        if (update_u) st.u = u;
        // sigma_hat = y^T W u' realized as sum(W . (y u'^T)); value equals the
        // Rayleigh estimate exactly and d sigma/dW = y u'^T.
        const std::size_t m = w.shape[0], n = w.shape[1];
        Tensor outer = Tensor::zeros({m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) outer.values[i * n + j] = step.left[i] * step.right[j];
        Var sigma = tape.sum(tape.mul(wv, tape.constant(std::move(outer))));
        Var gain = tape.div(tape.constant(Tensor::scalar(st.k_sn)), sigma);
        out.weights.push_back(tape.mul(wv, tape.broadcast_full(gain, w.shape)));
    }
    return out;
}

// Raw-tensor variant for inspection and tests: returns normalized copies.
inline ParamStore spectral_normalize_raw(const ParamStore& store, std::vector<SnState>& states, bool update_u) {
    ParamStore out;
    out.biases = store.biases;
    for (std::size_t l = 0; l < store.weights.size(); ++l) {
        SnState& st = states[l];
        std::vector<double> u = st.u;
        detail::PowerStep step{};
        for (int it = 0; it < st.power_iters_per_step; ++it) {
            step = detail::power_step(store.weights[l], u);
            if (step.zero) break;
            u = step.right;
        }
        if (step.zero) {
            st.flagged_zero = true;
            out.weights.push_back(store.weights[l]);
            continue;
        }
        if (update_u) st.u = u;
        Tensor w = store.weights[l];
        const double gain = st.k_sn / step.sigma;
        for (double& v : w.values) v *= gain;
        out.weights.push_back(std::move(w));
    }
    return out;
}

struct GpConfig {
    double lambda = 10.0;
    double k_gp = 1.0;

    void validate() const {
        if (lambda < 0.0) throw ConfigError("gradient-penalty lambda must be nonnegative");
        if (k_gp < 0.0) throw ConfigError("gradient-penalty target norm must be nonnegative");
    }
};

// lambda * mean((||grad_xhat D(xhat)|| - k_gp)^2) over straight-line
// interpolates between the real and fake batches, as a tape node trainable
// w.r.t. the discriminator parameters captured by `disc`.
inline Var gradient_penalty(Tape& tape, const std::function<Var(Tape&, Var)>& disc, const Tensor& x_real,
                            const Tensor& x_fake, const GpConfig& cfg, Rng& rng) {
    cfg.validate();
    if (!same_shape(x_real, x_fake))
        throw UsageError("gradient_penalty batch shapes differ: " + shape_str(x_real.shape) + " vs " +
                         shape_str(x_fake.shape));
    if (x_real.shape.size() != 2) throw UsageError("gradient_penalty wants [B,d] batches");
    const std::size_t rows = x_real.shape[0], cols = x_real.shape[1];
    Tensor mix = Tensor::zeros({rows, cols});
    for (std::size_t i = 0; i < rows; ++i) {
        const double eps = rng.uniform();
        for (std::size_t j = 0; j < cols; ++j)
            mix.values[i * cols + j] = eps * x_real.values[i * cols + j] + (1.0 - eps) * x_fake.values[i * cols + j];
    }
    Var xhat = tape.input(std::move(mix));
    Var scores = disc(tape, xhat);
    Var total = tape.sum(scores);  // rows are independent, so d total/d xhat row i is grad of score i
    Var gx = tape.backward_differentiable(total, {xhat})[0];
    Var norms = tape.row_l2norm(gx);
    return tape.scale(tape.mean(tape.square(tape.add_const(norms, -cfg.k_gp))), cfg.lambda);
}

// k * (hi - lo) * sqrt(#elements): the Lipschitz bound on |max f - min f|
// over a value box. For [-1,1]^{m x n x 3} this is the k*sqrt(12mn) constant.
inline double domain_bound(double k, std::size_t input_elems, double lo, double hi) {
    if (k < 0.0) throw UsageError("negative Lipschitz constant");
    if (hi < lo) throw UsageError("inverted value range");
    return k * (hi - lo) * std::sqrt(static_cast<double>(input_elems));
}

inline double domain_bound(double k, const Shape& input_shape, double lo, double hi) {
    return domain_bound(k, numel(input_shape), lo, hi);
}

// M * K * diameter: the attainable-gradient interval bound.
inline double gradient_interval_bound(double m_max, double k, std::size_t input_elems, double lo, double hi) {
    if (m_max < 0.0) throw UsageError("negative curvature bound");
    return m_max * domain_bound(k, input_elems, lo, hi);
}

struct EmpiricalLipschitz {
    double ratio = 0.0;
    bool all_coincident = false;
};

// Max |f(x1)-f(x2)| / ||x1-x2|| over sampled pairs; a lower bound on the true
// constant. `f` maps [N,d] to one score per row.
inline EmpiricalLipschitz empirical_lipschitz(const std::function<Tensor(const Tensor&)>& f,
                                              const Tensor& samples, std::size_t pairs, Rng& rng) {
    if (samples.shape.size() != 2 || samples.shape[0] < 2)
        throw UsageError("empirical_lipschitz needs at least two samples");
    const std::size_t n = samples.shape[0], d = samples.shape[1];
    Tensor scores = f(samples);
    if (scores.size() != n) throw ConfigError("network closure must return one score per row");
    EmpiricalLipschitz out;
    std::size_t used = 0;
    for (std::size_t p = 0; p < pairs; ++p) {
        std::size_t i = rng.next_u64() % n, j = rng.next_u64() % n;
        if (i == j) continue;
        double dist2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            double diff = samples.values[i * d + c] - samples.values[j * d + c];
            dist2 += diff * diff;
        }
        if (dist2 == 0.0) continue;
        ++used;
        double ratio = std::abs(scores.values[i] - scores.values[j]) / std::sqrt(dist2);
        out.ratio = std::max(out.ratio, ratio);
    }
    out.all_coincident = used == 0;
    return out;
}

// Product upper bound: prod_l sigma(W^l) times the activation constants
// (leaky-relu, relu and tanh are all 1-Lipschitz).
inline double lipschitz_upper_bound(const ParamStore& store, double activation_constant = 1.0) {
    double k = 1.0;
    for (std::size_t l = 0; l < store.layer_count(); ++l) {
        k *= spectral_norm_exact(store.weights[l]);
        if (l + 1 < store.layer_count()) k *= activation_constant;
    }
    return k;
}

}  // namespace lipgan
