#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <string>

#include "lipgan/autodiff.hpp"
#include "lipgan/errors.hpp"

namespace lipgan {

// The six discriminator/generator loss pairs under study. LS# is the
// zero-centered least-squares variant.
enum class LossKind { ns, ls, ls_sharp, wgan, cos, exp };

inline std::string loss_kind_name(LossKind k) {
    switch (k) {
        case LossKind::ns: return "NS";
        case LossKind::ls: return "LS";
        case LossKind::ls_sharp: return "LS#";
        case LossKind::wgan: return "WGAN";
        case LossKind::cos: return "COS";
        case LossKind::exp: return "EXP";
    }
    return "NS";
}

inline LossKind loss_kind_from_name(const std::string& s) {
    if (s == "NS") return LossKind::ns;
    if (s == "LS") return LossKind::ls;
    if (s == "LS#" || s == "LS_SHARP" || s == "LSS") return LossKind::ls_sharp;
    if (s == "WGAN") return LossKind::wgan;
    if (s == "COS") return LossKind::cos;
    if (s == "EXP") return LossKind::exp;
    throw ConfigError("unknown loss kind '" + s + "'");
}

constexpr double kMinAlpha = 1e-25;  // smaller scales underflow to NaN

// Loss kind plus the domain-scaling factor: L_alpha(t) = L(alpha * t) / alpha.
struct LossSpec {
    LossKind kind = LossKind::ns;
    double alpha = 1.0;

    void validate() const {
        if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
        if (alpha < kMinAlpha) throw ConfigError("alpha below the 1e-25 floor");
    }
};

// Which per-sample term of the game a value feeds.
enum class LossTerm { real, fake, gen };

namespace lossdetail {

inline double sigma(double t) { return detail::sigmoid_scalar(t); }

// Base (alpha = 1) per-sample loss, first and second derivatives.
inline double base_value(LossKind k, LossTerm term, double t) {
    const bool fake = term == LossTerm::fake;
    switch (k) {
        case LossKind::ns: return fake ? detail::softplus_scalar(t) : detail::softplus_scalar(-t);
        case LossKind::ls: return fake ? t * t : (t - 1.0) * (t - 1.0);
        case LossKind::ls_sharp: return fake ? (t + 1.0) * (t + 1.0) : (t - 1.0) * (t - 1.0);
        case LossKind::wgan: return fake ? -t : t;
        case LossKind::cos: return fake ? -std::cos(t + 1.0) : -std::cos(t - 1.0);
        case LossKind::exp: return fake ? std::exp(-t) : std::exp(t);
    }
    return 0.0;
}

inline double base_grad(LossKind k, LossTerm term, double t) {
    const bool fake = term == LossTerm::fake;
    switch (k) {
        // sigma(t)-1 written as -sigma(-t) keeps the saturated tail
        case LossKind::ns: return fake ? sigma(t) : -sigma(-t);
        case LossKind::ls: return fake ? 2.0 * t : 2.0 * (t - 1.0);
        case LossKind::ls_sharp: return fake ? 2.0 * (t + 1.0) : 2.0 * (t - 1.0);
        case LossKind::wgan: return fake ? -1.0 : 1.0;
        case LossKind::cos: return fake ? std::sin(t + 1.0) : std::sin(t - 1.0);
        case LossKind::exp: return fake ? -std::exp(-t) : std::exp(t);
    }
    return 0.0;
}

inline double base_second(LossKind k, LossTerm term, double t) {
    const bool fake = term == LossTerm::fake;
    switch (k) {
        case LossKind::ns: return sigma(t) * sigma(-t);
        case LossKind::ls:
        case LossKind::ls_sharp: return 2.0;
        case LossKind::wgan: return 0.0;
        case LossKind::cos: return fake ? std::cos(t + 1.0) : std::cos(t - 1.0);
        case LossKind::exp: return fake ? std::exp(-t) : std::exp(t);
    }
    return 0.0;
}

// Does [lo, hi] contain a point congruent to `target` mod `period`?
inline bool interval_contains_mod(double lo, double hi, double target, double period) {
    double k = std::ceil((lo - target) / period);
    return target + k * period <= hi;
}

}  // namespace lossdetail

// ---- tape builders ----

// Mean of the per-sample term over a batch of raw scores, with the domain
// scaling t -> L(alpha*t)/alpha applied to the scores first.
inline Var loss_term_mean(Tape& tape, const LossSpec& spec, LossTerm term, Var scores) {
    spec.validate();
    if (scores.value().size() == 0) throw UsageError("loss on an empty batch");
    Var t = tape.scale(scores, spec.alpha);
    Var per_sample{};
    const bool fake = term == LossTerm::fake;
    switch (spec.kind) {
        case LossKind::ns:
            // -log sigma(t) stabilized as softplus(-t); -log(1-sigma(t)) as softplus(t)
            per_sample = fake ? tape.softplus(t) : tape.softplus(tape.neg(t));
            break;
        case LossKind::ls:
            per_sample = fake ? tape.square(t) : tape.square(tape.add_const(t, -1.0));
            break;
        case LossKind::ls_sharp:
            per_sample = fake ? tape.square(tape.add_const(t, 1.0)) : tape.square(tape.add_const(t, -1.0));
            break;
        case LossKind::wgan:
            per_sample = fake ? tape.neg(t) : t;
            break;
        case LossKind::cos:
            per_sample = fake ? tape.neg(tape.cos(tape.add_const(t, 1.0)))
                              : tape.neg(tape.cos(tape.add_const(t, -1.0)));
            break;
        case LossKind::exp:
            per_sample = fake ? tape.exp(tape.neg(t)) : tape.exp(t);
            break;
    }
    return tape.scale(tape.mean(per_sample), 1.0 / spec.alpha);
}

// Discriminator loss exactly as tabulated: real term plus fake term.
inline Var disc_loss(Tape& tape, const LossSpec& spec, Var f_real, Var f_fake) {
    return tape.add(loss_term_mean(tape, spec, LossTerm::real, f_real),
                    loss_term_mean(tape, spec, LossTerm::fake, f_fake));
}

inline Var gen_loss(Tape& tape, const LossSpec& spec, Var f_fake) {
    return loss_term_mean(tape, spec, LossTerm::gen, f_fake);
}

// ---- closed-form pointwise analysis ----

inline double loss_value(const LossSpec& spec, LossTerm term, double omega) {
    return lossdetail::base_value(spec.kind, term, spec.alpha * omega) / spec.alpha;
}

// d L_alpha / d omega == (grad L)(alpha * omega), the chain-rule identity of
// the scaling transform.
inline double pointwise_grad(const LossSpec& spec, LossTerm term, double omega) {
    return lossdetail::base_grad(spec.kind, term, spec.alpha * omega);
}

inline double second_derivative(const LossSpec& spec, LossTerm term, double omega) {
    return spec.alpha * lossdetail::base_second(spec.kind, term, spec.alpha * omega);
}

// Gradient of the term at a degenerate (alpha -> 0) domain: (grad L)(0).
inline double degenerate_limit_grad(LossKind kind, LossTerm term) {
    return lossdetail::base_grad(kind, term, 0.0);
}

// Max |L_alpha''| over [lo, hi], from the closed forms.
inline double second_derivative_max(const LossSpec& spec, LossTerm term, double lo, double hi) {
    if (hi < lo) throw UsageError("inverted interval");
    const double a = spec.alpha * lo, b = spec.alpha * hi;
    const bool fake = term == LossTerm::fake;
    double base = 0.0;
    switch (spec.kind) {
        case LossKind::ns: {
            if (a <= 0.0 && 0.0 <= b)
                base = 0.25;
            else {
                double t = std::abs(a) < std::abs(b) ? a : b;
                base = lossdetail::base_second(LossKind::ns, term, t);
            }
            break;
        }
        case LossKind::ls:
        case LossKind::ls_sharp: base = 2.0; break;
        case LossKind::wgan: base = 0.0; break;
        case LossKind::cos: {
            const double c = fake ? 1.0 : -1.0;
            const double pi = 3.141592653589793238462643;
            if (lossdetail::interval_contains_mod(a + c, b + c, 0.0, pi))
                base = 1.0;  // |cos| peaks at multiples of pi
            else
                base = std::max(std::abs(std::cos(a + c)), std::abs(std::cos(b + c)));
            break;
        }
        case LossKind::exp: base = fake ? std::exp(-a) : std::exp(b); break;
    }
    return spec.alpha * base;
}

// Grid-scan cross-check for second_derivative_max: 4096 cells plus a
// golden-section refinement of the best cell.
inline double second_derivative_max_scan(const LossSpec& spec, LossTerm term, double lo, double hi,
                                         int cells = 4096) {
    if (hi < lo) throw UsageError("inverted interval");
    if (hi == lo) return std::abs(second_derivative(spec, term, lo));
    auto f = [&](double w) { return std::abs(second_derivative(spec, term, w)); };
    double best = 0.0, best_w = lo;
    for (int i = 0; i <= cells; ++i) {
        double w = lo + (hi - lo) * static_cast<double>(i) / cells;
        double v = f(w);
        if (v > best) {
            best = v;
            best_w = w;
        }
    }
    const double cell = (hi - lo) / cells;
    double a = std::max(lo, best_w - cell), b = std::min(hi, best_w + cell);
    const double ratio = 0.6180339887498949;
    double x1 = b - ratio * (b - a), x2 = a + ratio * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 80; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = f(x1);
        }
    }
    return std::max(best, std::max(f1, f2));
}

// Analytic [min, max] of the term's gradient over the interval [lo, hi];
// interior sine extremes are included for the COS loss.
inline std::array<double, 2> gradient_range_over(const LossSpec& spec, LossTerm term, double lo, double hi) {
    if (hi < lo) throw UsageError("inverted interval");
    double glo = pointwise_grad(spec, term, lo);
    double ghi = pointwise_grad(spec, term, hi);
    double mn = std::min(glo, ghi), mx = std::max(glo, ghi);
    if (spec.kind == LossKind::cos) {
        const double c = term == LossTerm::fake ? 1.0 : -1.0;
        const double a = spec.alpha * lo + c, b = spec.alpha * hi + c;
        const double pi = 3.141592653589793238462643;
        if (lossdetail::interval_contains_mod(a, b, pi / 2.0, 2.0 * pi)) mx = 1.0;
        if (lossdetail::interval_contains_mod(a, b, -pi / 2.0, 2.0 * pi)) mn = -1.0;
    }
    return {mn, mx};
}

// Worst normalized gap between the scaled loss and its tangent at the
// interval midpoint; the normalizer is the largest |L| seen on the grid.
inline double linearity_deviation_fn(const std::function<double(double)>& fn, double slope_at_mid, double lo,
                                     double hi, int grid = 4096) {
    if (hi < lo) throw UsageError("inverted interval");
    const double mid = 0.5 * (lo + hi);
    const double f0 = fn(mid);
    double worst = 0.0, scale = 0.0;
    for (int i = 0; i <= grid; ++i) {
        double w = lo + (hi - lo) * static_cast<double>(i) / grid;
        double fv = fn(w);
        scale = std::max(scale, std::abs(fv));
        worst = std::max(worst, std::abs(fv - (f0 + slope_at_mid * (w - mid))));
    }
    return worst / std::max(scale, 1e-12);
}

inline double linearity_deviation(const LossSpec& spec, LossTerm term, double lo, double hi, int grid = 4096) {
    const double mid = 0.5 * (lo + hi);
    return linearity_deviation_fn([&](double w) { return loss_value(spec, term, w); },
                                  pointwise_grad(spec, term, mid), lo, hi, grid);
}

}  // namespace lipgan
