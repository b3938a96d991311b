#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lipgan/errors.hpp"
#include "lipgan/losses.hpp"
#include "lipgan/numerics.hpp"
#include "lipgan/tensor.hpp"

namespace lipgan {

inline std::array<double, 2> record_interval(const Tensor& scores) {
    if (scores.size() == 0) throw UsageError("record_interval on an empty batch");
    auto [mn, mx] = std::minmax_element(scores.values.begin(), scores.values.end());
    return {*mn, *mx};
}

// Min/max of the term's pointwise gradient over a finite score batch.
inline std::array<double, 2> attained_gradient_interval(const LossSpec& spec, LossTerm term,
                                                        const Tensor& scores) {
    if (scores.size() == 0) throw UsageError("attained_gradient_interval on an empty batch");
    double mn = 0.0, mx = 0.0;
    bool first = true;
    for (double s : scores.values) {
        double g = pointwise_grad(spec, term, s);
        if (first) {
            mn = mx = g;
            first = false;
        } else {
            mn = std::min(mn, g);
            mx = std::max(mx, g);
        }
    }
    return {mn, mx};
}

// The loss term whose gradient interval is reported per iteration; the
// least-squares variants are tracked on their quadratic fake term, everything
// else on the real term (matching how the reference tables are computed on
// one of the two symmetric terms).
inline LossTerm canonical_trace_term(LossKind kind) {
    return (kind == LossKind::ls || kind == LossKind::ls_sharp) ? LossTerm::fake : LossTerm::real;
}

// One per-iteration record of domain and attained-gradient intervals.
struct IterRecord {
    std::int64_t iter = 0;
    std::array<double, 2> omega{0.0, 0.0};       // over real and fake scores together
    std::array<double, 2> omega_fake{0.0, 0.0};  // fake split
    std::array<double, 2> psi{0.0, 0.0};         // canonical-term gradient range over omega
    double loss_d = 0.0, loss_g = 0.0;
};

struct DomainTrace {
    std::vector<IterRecord> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }

    // Cumulative hull of all per-iteration domains.
    std::array<double, 2> omega_union() const {
        if (records.empty()) throw UsageError("omega_union of an empty trace");
        std::array<double, 2> hull = records.front().omega;
        for (const IterRecord& r : records) {
            hull[0] = std::min(hull[0], r.omega[0]);
            hull[1] = std::max(hull[1], r.omega[1]);
        }
        return hull;
    }
};

// Builds the per-iteration record from raw score batches. The psi interval is
// the analytic gradient range of the canonical term over the observed score
// hull, so it can be reproduced exactly from the logged omega alone.
inline IterRecord make_record(std::int64_t iter, const LossSpec& spec, const Tensor& f_real,
                              const Tensor& f_fake, double loss_d, double loss_g) {
    IterRecord rec;
    rec.iter = iter;
    auto real_iv = record_interval(f_real);
    rec.omega_fake = record_interval(f_fake);
    rec.omega = {std::min(real_iv[0], rec.omega_fake[0]), std::max(real_iv[1], rec.omega_fake[1])};
    rec.psi = gradient_range_over(spec, canonical_trace_term(spec.kind), rec.omega[0], rec.omega[1]);
    rec.loss_d = loss_d;
    rec.loss_g = loss_g;
    return rec;
}

// Midpoint drift: |m_i - m_{i-window}| for each i >= window. A window larger
// than the trace collapses to the single full-span drift.
inline std::vector<double> domain_drift(const DomainTrace& trace, std::size_t window) {
    if (trace.empty()) throw UsageError("domain_drift of an empty trace");
    auto mid = [&](std::size_t i) { return 0.5 * (trace.records[i].omega[0] + trace.records[i].omega[1]); };
    const std::size_t n = trace.size();
    if (window >= n) return {std::abs(mid(n - 1) - mid(0))};
    std::vector<double> out;
    out.reserve(n - window);
    for (std::size_t i = window; i < n; ++i) out.push_back(std::abs(mid(i) - mid(i - window)));
    return out;
}

// ---- Frechet distance between fitted Gaussians ----

struct GaussianMoments {
    Tensor mean;  // [d]
    Tensor cov;   // [d,d]
    bool regularized = false;
};

inline GaussianMoments fit_gaussian(const Tensor& samples) {
    if (samples.shape.size() != 2) throw UsageError("fit_gaussian wants [N,d] samples");
    const std::size_t n = samples.shape[0], d = samples.shape[1];
    if (n < d + 1) throw UsageError("need at least d+1 samples to fit a covariance");
    GaussianMoments m;
    m.mean = Tensor::zeros({d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m.mean.values[j] += samples.values[i * d + j];
    for (double& v : m.mean.values) v /= static_cast<double>(n);
    m.cov = Tensor::zeros({d, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a) {
            double da = samples.values[i * d + a] - m.mean.values[a];
            for (std::size_t b = 0; b < d; ++b)
                m.cov.values[a * d + b] += da * (samples.values[i * d + b] - m.mean.values[b]);
        }
    for (double& v : m.cov.values) v /= static_cast<double>(n - 1);

    EigenSym e = jacobi_eigen_sym(m.cov);
    double min_eig = *std::min_element(e.eigenvalues.begin(), e.eigenvalues.end());
    if (!(min_eig > 1e-12)) {
        for (std::size_t i = 0; i < d; ++i) m.cov.values[i * d + i] += 1e-9;
        m.regularized = true;
    }
    return m;
}

// sqrt(||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2})), with the product root
// computed as sqrtm(sqrtm(S1) S2 sqrtm(S1)) to stay in symmetric territory.
inline double frechet_from_moments(const GaussianMoments& a, const GaussianMoments& b) {
    const std::size_t d = a.mean.size();
    if (b.mean.size() != d) throw UsageError("dimension mismatch between moment sets");
    double mean_term = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double diff = a.mean.values[i] - b.mean.values[i];
        mean_term += diff * diff;
    }
    Tensor root_a = sqrtm_psd(a.cov);
    Tensor inner = matmul_plain(matmul_plain(root_a, b.cov), root_a);
    // Symmetrize away the eigensolver's round-off before the second root.
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) {
            double s = 0.5 * (inner.values[i * d + j] + inner.values[j * d + i]);
            inner.values[i * d + j] = inner.values[j * d + i] = s;
        }
    double tr = trace(a.cov) + trace(b.cov) - 2.0 * trace(sqrtm_psd(inner));
    return std::sqrt(std::max(0.0, mean_term + tr));
}

inline double frechet_gaussian(const Tensor& samples_a, const Tensor& samples_b) {
    return frechet_from_moments(fit_gaussian(samples_a), fit_gaussian(samples_b));
}

// ---- mode coverage ----

struct ModeCoverage {
    int covered = 0;
    double hq_fraction = 0.0;  // share of samples within `radius` of any center
};

// A center counts as covered once it attracts max(1, N/(10K)) samples.
inline ModeCoverage mode_coverage(const Tensor& samples, const std::vector<std::array<double, 2>>& centers,
                                  double radius) {
    if (centers.empty()) throw UsageError("mode_coverage needs at least one center");
    if (!(radius > 0.0)) throw UsageError("mode_coverage radius must be positive");
    if (samples.shape.size() != 2 || samples.shape[1] != 2) throw UsageError("mode_coverage wants [N,2] samples");
    const std::size_t n = samples.shape[0];
    std::vector<std::size_t> counts(centers.size(), 0);
    std::size_t hq = 0;
    const double r2 = radius * radius;
    for (std::size_t i = 0; i < n; ++i) {
        double best = r2;
        std::ptrdiff_t best_k = -1;
        for (std::size_t k = 0; k < centers.size(); ++k) {
            double dx = samples.values[i * 2] - centers[k][0];
            double dy = samples.values[i * 2 + 1] - centers[k][1];
            double d2 = dx * dx + dy * dy;
            if (d2 <= best) {
                best = d2;
                best_k = static_cast<std::ptrdiff_t>(k);
            }
        }
        if (best_k >= 0) {
            ++hq;
            ++counts[static_cast<std::size_t>(best_k)];
        }
    }
    const double threshold = std::max(1.0, static_cast<double>(n) / (10.0 * static_cast<double>(centers.size())));
    ModeCoverage out;
    for (std::size_t c : counts)
        if (static_cast<double>(c) >= threshold) ++out.covered;
    out.hq_fraction = n == 0 ? 0.0 : static_cast<double>(hq) / static_cast<double>(n);
    return out;
}

// ---- trace export: JSON Lines, one record per iteration ----

inline void write_trace_jsonl(std::ostream& os, const DomainTrace& trace) {
    for (const IterRecord& r : trace.records) {
        nlohmann::json j;
        j["iter"] = r.iter;
        j["omega"] = {r.omega[0], r.omega[1]};
        j["omega_fake"] = {r.omega_fake[0], r.omega_fake[1]};
        j["psi"] = {r.psi[0], r.psi[1]};
        j["loss_d"] = r.loss_d;
        j["loss_g"] = r.loss_g;
        os << j.dump() << "\n";
    }
}

inline DomainTrace read_trace_jsonl(std::istream& is) {
    DomainTrace trace;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("trace line " + std::to_string(line_no) + " is not valid JSON: " + e.what());
        }
        IterRecord r;
        r.iter = j.at("iter").get<std::int64_t>();
        r.omega = {j.at("omega")[0].get<double>(), j.at("omega")[1].get<double>()};
        r.omega_fake = {j.at("omega_fake")[0].get<double>(), j.at("omega_fake")[1].get<double>()};
        r.psi = {j.at("psi")[0].get<double>(), j.at("psi")[1].get<double>()};
        r.loss_d = j.at("loss_d").get<double>();
        r.loss_g = j.at("loss_g").get<double>();
        trace.records.push_back(r);
    }
    return trace;
}

}  // namespace lipgan
