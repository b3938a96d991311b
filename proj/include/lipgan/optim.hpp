#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lipgan/errors.hpp"
#include "lipgan/nn.hpp"
#include "lipgan/tensor.hpp"

namespace lipgan {

struct RmsPropConfig {
    double lr = 5e-5;  // the training protocol's 0.00005
    double rho = 0.9;
    double eps = 1e-8;

    void validate() const {
        if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
        if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0,1)");
        if (!(eps > 0.0)) throw ConfigError("eps must be positive");
    }
};

// Per-parameter mean-square accumulators, weights first then biases, matching
// all_vars() ordering.
struct RmsPropState {
    std::vector<Tensor> ms;

    static RmsPropState init(const ParamStore& store) {
        RmsPropState st;
        for (const Tensor& w : store.weights) st.ms.push_back(Tensor::zeros(w.shape));
        for (const Tensor& b : store.biases) st.ms.push_back(Tensor::zeros(b.shape));
        return st;
    }
};

// ms <- rho*ms + (1-rho)*g^2 ; theta <- theta - lr*g/(sqrt(ms)+eps).
// A non-finite gradient aborts before any parameter is touched.
inline void rmsprop_step(ParamStore& store, const std::vector<Tensor>& grads, RmsPropState& state,
                         const RmsPropConfig& cfg, std::int64_t iteration = -1) {
    cfg.validate();
    const std::size_t n_w = store.weights.size();
    if (grads.size() != n_w + store.biases.size() || state.ms.size() != grads.size())
        throw ConfigError("gradient/state count does not match parameter count");
    for (const Tensor& g : grads)
        if (!g.all_finite())
            throw DomainError("non-finite gradient at iteration " + std::to_string(iteration) + "; step aborted");

    auto update = [&](Tensor& theta, const Tensor& g, Tensor& ms) {
        if (!same_shape(theta, g)) throw ConfigError("gradient shape mismatch");
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = g.values[i];
            ms.values[i] = cfg.rho * ms.values[i] + (1.0 - cfg.rho) * gi * gi;
            theta.values[i] -= cfg.lr * gi / (std::sqrt(ms.values[i]) + cfg.eps);
        }
    };
    for (std::size_t l = 0; l < n_w; ++l) update(store.weights[l], grads[l], state.ms[l]);
    for (std::size_t l = 0; l < store.biases.size(); ++l)
        update(store.biases[l], grads[n_w + l], state.ms[n_w + l]);
}

}  // namespace lipgan
