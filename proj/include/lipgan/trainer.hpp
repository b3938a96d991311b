#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "lipgan/autodiff.hpp"
#include "lipgan/data.hpp"
#include "lipgan/errors.hpp"
#include "lipgan/lipschitz.hpp"
#include "lipgan/losses.hpp"
#include "lipgan/metrics.hpp"
#include "lipgan/nn.hpp"
#include "lipgan/optim.hpp"
#include "lipgan/rng.hpp"

namespace lipgan {

struct RegularizerSpec {
    enum class Kind { none, sn, gp };
    Kind kind = Kind::none;
    double k_sn = 1.0;
    int power_iters = 1;
    GpConfig gp;

    void validate() const {
        if (kind == Kind::sn) {
            if (!(k_sn > 0.0)) throw ConfigError("k_sn must be positive");
            if (power_iters < 1) throw ConfigError("power_iters must be >= 1");
        }
        if (kind == Kind::gp) gp.validate();
    }
};

struct DataSource {
    enum class Kind { toy, mnist };
    Kind kind = Kind::toy;
    ToyDistribution toy = ToyDistribution::ring(8, 0.7, 0.05);
    std::string mnist_images, mnist_labels;

    std::size_t input_dim(const ImageDataset* loaded = nullptr) const {
        if (kind == Kind::toy) return 2;
        return loaded ? loaded->images.shape[1] : 0;
    }
};

struct ExperimentConfig {
    LossSpec loss;
    RegularizerSpec reg;
    MlpConfig gen, disc;
    RmsPropConfig opt;
    DataSource data;
    std::size_t batch = 64;  // the protocol's batch size
    int n_dis = 1;           // discriminator updates per iteration
    std::int64_t iterations = 20000;
    std::uint64_t seed = 1;
    std::int64_t eval_every = 1000;
    std::size_t eval_samples = 2048;
    bool live_checks = true;  // per-iteration domain/gradient bound assertions

    ExperimentConfig() {
        gen.widths = {4, 32, 32, 2};
        gen.output = Activation::tanh;
        disc.widths = {2, 32, 32, 1};
        disc.output = Activation::identity;
    }

    void validate() const {
        loss.validate();
        reg.validate();
        gen.validate();
        disc.validate();
        opt.validate();
        if (batch < 1) throw ConfigError("batch must be >= 1");
        if (n_dis < 1) throw ConfigError("n_dis must be >= 1");
        if (iterations < 1) throw ConfigError("iterations must be >= 1");
        if (disc.widths.back() != 1) throw ConfigError("discriminator must end in a scalar score");
        if (gen.widths.back() != (data.kind == DataSource::Kind::toy ? 2u : gen.widths.back()))
            throw ConfigError("generator output width must match the data dimension");
        if (data.kind == DataSource::Kind::toy && disc.widths.front() != 2)
            throw ConfigError("discriminator input width must match the data dimension");
        if (data.kind == DataSource::Kind::toy) data.toy.validate();
    }
};

struct EvalRow {
    std::int64_t iter = 0;
    double frechet = 0.0;
    int covered = 0;
    double hq_fraction = 0.0;
};

struct RunArtifacts {
    ExperimentConfig config;
    ParamStore gen_params, disc_params;
    DomainTrace trace;
    std::vector<EvalRow> metrics;
    double wall_seconds = 0.0;
    bool failed = false;
    std::int64_t failed_iteration = -1;
    std::size_t theorem_violations = 0;    // live |Omega| <= K*diam failures
    std::size_t corollary_violations = 0;  // live |Psi| <= M*|Omega| failures
};

namespace detail {

// One training step's worth of sampling, shared by real runs and tests.
struct BatchDraw {
    Tensor x_real, z, x_fake;
};

inline BatchDraw draw_batches(const ExperimentConfig& cfg, const ImageDataset* mnist, const ParamStore& gen,
                              Rng& rng) {
    BatchDraw d;
    if (cfg.data.kind == DataSource::Kind::toy) {
        d.x_real = sample_real(cfg.data.toy, cfg.batch, rng);
    } else {
        const std::size_t n = mnist->images.shape[0], w = mnist->images.shape[1];
        d.x_real = Tensor::zeros({cfg.batch, w});
        for (std::size_t i = 0; i < cfg.batch; ++i) {
            std::size_t row = rng.next_u64() % n;
            std::copy_n(mnist->images.values.begin() + static_cast<long>(row * w), w,
                        d.x_real.values.begin() + static_cast<long>(i * w));
        }
    }
    d.z = sample_noise(cfg.gen.widths.front(), cfg.batch, rng);
    d.x_fake = forward_raw(gen, cfg.gen, d.z);
    return d;
}

}  // namespace detail

// One full training run. Deterministic in cfg.seed: identical configs give
// bit-identical artifacts.
inline RunArtifacts train(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    RunArtifacts art;
    art.config = cfg;

    std::optional<ImageDataset> mnist;
    double range_lo = -1.0, range_hi = 1.0;
    std::size_t input_dim = 2;
    if (cfg.data.kind == DataSource::Kind::mnist) {
        mnist = load_mnist_idx(cfg.data.mnist_images,
                               cfg.data.mnist_labels.empty()
                                   ? std::nullopt
                                   : std::optional<std::string>(cfg.data.mnist_labels));
        input_dim = mnist->images.shape[1];
        if (cfg.disc.widths.front() != input_dim)
            throw ConfigError("discriminator input width " + std::to_string(cfg.disc.widths.front()) +
                              " does not match image dimension " + std::to_string(input_dim));
    } else {
        range_lo = cfg.data.toy.clip_lo;
        range_hi = cfg.data.toy.clip_hi;
    }

    Rng rng(cfg.seed);
    ParamStore gen = init_params(cfg.gen, Rng::derive_seed(cfg.seed, 1));
    ParamStore disc = init_params(cfg.disc, Rng::derive_seed(cfg.seed, 2));

    const bool use_sn = cfg.reg.kind == RegularizerSpec::Kind::sn;
    const bool use_gp = cfg.reg.kind == RegularizerSpec::Kind::gp;
    std::vector<SnState> sn_states;
    if (use_sn) {
        Rng sn_rng(Rng::derive_seed(cfg.seed, 3));
        for (const Tensor& w : disc.weights) {
            SnState st = SnState::init(cfg.reg.k_sn, w.shape[1], sn_rng, cfg.reg.power_iters);
            // cold start before training so the warm 1-step/iter estimates track
            SnState warm = st;
            warm.power_iters_per_step = 50;
            power_iteration(w, warm);
            st.u = warm.u;
            sn_states.push_back(std::move(st));
        }
    }

    RmsPropState opt_d = RmsPropState::init(disc);
    RmsPropState opt_g = RmsPropState::init(gen);

    auto eval_metrics = [&](std::int64_t iter) {
        EvalRow row;
        row.iter = iter;
        Tensor real_eval;
        if (cfg.data.kind == DataSource::Kind::toy) {
            real_eval = sample_real(cfg.data.toy, cfg.eval_samples, rng);
        } else {
            const std::size_t n = mnist->images.shape[0], w = mnist->images.shape[1];
            real_eval = Tensor::zeros({cfg.eval_samples, w});
            for (std::size_t i = 0; i < cfg.eval_samples; ++i) {
                std::size_t r = rng.next_u64() % n;
                std::copy_n(mnist->images.values.begin() + static_cast<long>(r * w), w,
                            real_eval.values.begin() + static_cast<long>(i * w));
            }
        }
        Tensor z_eval = sample_noise(cfg.gen.widths.front(), cfg.eval_samples, rng);
        Tensor fake_eval = forward_raw(gen, cfg.gen, z_eval);
        row.frechet = frechet_gaussian(real_eval, fake_eval);
        if (cfg.data.kind == DataSource::Kind::toy && cfg.data.toy.kind != ToyDistribution::Kind::point_mass) {
            ModeCoverage cov =
                mode_coverage(fake_eval, cfg.data.toy.mode_centers(), 3.0 * cfg.data.toy.stddev);
            row.covered = cov.covered;
            row.hq_fraction = cov.hq_fraction;
        }
        art.metrics.push_back(row);
    };

    for (std::int64_t iter = 0; iter < cfg.iterations; ++iter) {
        Tensor f_real_vals, f_fake_vals;
        double loss_d_val = 0.0;
        Tensor last_z;
        std::vector<Tensor> effective_weights;

        bool halted = false;
        for (int d = 0; d < cfg.n_dis && !halted; ++d) {
            detail::BatchDraw batch = detail::draw_batches(cfg, mnist ? &*mnist : nullptr, gen, rng);
            last_z = batch.z;

            Tape tape;
            MlpVars raw = register_params(tape, disc);
            MlpVars eff = use_sn ? spectral_normalize(tape, raw, sn_states, true) : raw;
            Var f_real = forward(tape, eff, cfg.disc, tape.input(batch.x_real));
            Var f_fake = forward(tape, eff, cfg.disc, tape.input(batch.x_fake));
            Var loss = disc_loss(tape, cfg.loss, f_real, f_fake);
            if (use_gp) {
                auto d_closure = [&](Tape& t, Var x) { return forward(t, eff, cfg.disc, x); };
                loss = tape.add(loss, gradient_penalty(tape, d_closure, batch.x_real, batch.x_fake,
                                                       cfg.reg.gp, rng));
            }
            loss_d_val = loss.value().item();
            f_real_vals = f_real.value();
            f_fake_vals = f_fake.value();
            if (use_sn && cfg.live_checks) {
                effective_weights.clear();
                for (const Var& w : eff.weights) effective_weights.push_back(w.value());
            }
            if (!std::isfinite(loss_d_val)) {
                halted = true;
                break;
            }
            std::vector<Var> wrt = all_vars(raw);
            std::vector<Tensor> grads = tape.backward(loss, std::span<const Var>(wrt));
            try {
                rmsprop_step(disc, grads, opt_d, cfg.opt, iter);
            } catch (const DomainError&) {
                halted = true;
            }
        }
        if (halted) {
            art.failed = true;
            art.failed_iteration = iter;
            break;
        }

        // live Theorem-1 / Corollary-1 checks against the exact layer norms
        if (use_sn && cfg.live_checks) {
            double k_hat = 1.0;
            for (const Tensor& w : effective_weights) k_hat *= spectral_norm_exact(w);
            const double bound = domain_bound(k_hat, input_dim, range_lo, range_hi);
            auto r_iv = record_interval(f_real_vals);
            auto f_iv = record_interval(f_fake_vals);
            const double omega_lo = std::min(r_iv[0], f_iv[0]), omega_hi = std::max(r_iv[1], f_iv[1]);
            if (omega_hi - omega_lo > bound + 1e-6) ++art.theorem_violations;
            auto psi = gradient_range_over(cfg.loss, canonical_trace_term(cfg.loss.kind), omega_lo, omega_hi);
            double m_max =
                second_derivative_max(cfg.loss, canonical_trace_term(cfg.loss.kind), omega_lo, omega_hi);
            if (psi[1] - psi[0] > m_max * (omega_hi - omega_lo) + 1e-9) ++art.corollary_violations;
        }

        // generator step: rebuild fake scores against the freshly-updated D;
        // power-iteration state is not advanced here.
        double loss_g_val = 0.0;
        {
            Tape tape;
            MlpVars gvars = register_params(tape, gen);
            MlpVars dconst = register_params(tape, disc);
            MlpVars deff = use_sn ? spectral_normalize(tape, dconst, sn_states, false) : dconst;
            Var fake = forward(tape, gvars, cfg.gen, tape.input(last_z));
            Var f_fake2 = forward(tape, deff, cfg.disc, fake);
            Var loss = gen_loss(tape, cfg.loss, f_fake2);
            loss_g_val = loss.value().item();
            if (!std::isfinite(loss_g_val)) {
                art.failed = true;
                art.failed_iteration = iter;
                break;
            }
            std::vector<Var> wrt = all_vars(gvars);
            std::vector<Tensor> grads = tape.backward(loss, std::span<const Var>(wrt));
            try {
                rmsprop_step(gen, grads, opt_g, cfg.opt, iter);
            } catch (const DomainError&) {
                art.failed = true;
                art.failed_iteration = iter;
                break;
            }
        }

        art.trace.records.push_back(
            make_record(iter, cfg.loss, f_real_vals, f_fake_vals, loss_d_val, loss_g_val));

        if (cfg.eval_every > 0 && ((iter + 1) % cfg.eval_every == 0 || iter + 1 == cfg.iterations))
            eval_metrics(iter + 1);
    }

    art.gen_params = std::move(gen);
    art.disc_params = std::move(disc);
    art.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return art;
}

// ---- sweep harness ----

struct SweepGrid {
    std::vector<LossKind> losses;
    std::vector<double> alphas;
    std::vector<double> k_sns;
    std::vector<std::uint64_t> seeds;

    void validate() const {
        if (losses.empty() || alphas.empty() || k_sns.empty() || seeds.empty())
            throw ConfigError("sweep grid must be nonempty in every dimension");
    }
};

struct SweepRow {
    LossKind loss = LossKind::ns;
    double alpha = 1.0, k_sn = 1.0;
    std::uint64_t seed = 0;
    double frechet = std::numeric_limits<double>::quiet_NaN();
    int coverage = 0;
    double hq_fraction = 0.0;
    std::string status = "ok";
};

struct CellSummary {
    LossKind loss = LossKind::ns;
    double alpha = 1.0, k_sn = 1.0;
    double median_frechet = std::numeric_limits<double>::quiet_NaN();
    double median_coverage = 0.0;
    double median_hq = 0.0;
    int ok_runs = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<CellSummary> cells;
};

inline std::size_t sweep_thread_cap() {
    if (const char* env = std::getenv("LIPGAN_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

namespace detail {
inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

// Runs every (loss, alpha, k_sn, seed) cell; cells fail independently without
// stopping the sweep. Results are ordered by cell regardless of scheduling.
inline SweepResult sweep(const ExperimentConfig& base, const SweepGrid& grid,
                         const std::function<void(const SweepRow&)>& on_row = nullptr) {
    grid.validate();
    struct Cell {
        LossKind loss;
        double alpha, k_sn;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (LossKind loss : grid.losses)
        for (double alpha : grid.alphas)
            for (double k_sn : grid.k_sns)
                for (std::uint64_t seed : grid.seeds) cells.push_back({loss, alpha, k_sn, seed});

    SweepResult result;
    result.rows.resize(cells.size());
    std::mutex mu;
    std::size_t next = 0;

    auto worker = [&]() {
        for (;;) {
            std::size_t idx;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= cells.size()) return;
                idx = next++;
            }
            const Cell& c = cells[idx];
            SweepRow row;
            row.loss = c.loss;
            row.alpha = c.alpha;
            row.k_sn = c.k_sn;
            row.seed = c.seed;
            try {
                ExperimentConfig cfg = base;
                cfg.loss.kind = c.loss;
                cfg.loss.alpha = c.alpha;
                cfg.reg.k_sn = c.k_sn;
                cfg.seed = c.seed;
                RunArtifacts art = train(cfg);
                if (!art.metrics.empty()) {
                    const EvalRow& last = art.metrics.back();
                    row.frechet = last.frechet;
                    row.coverage = last.covered;
                    row.hq_fraction = last.hq_fraction;
                }
                row.status = art.failed ? "nan_halt:" + std::to_string(art.failed_iteration) : "ok";
            } catch (const Error& e) {
                row.status = std::string("failed:") + e.what();
            }
            {
                std::lock_guard<std::mutex> lock(mu);
                result.rows[idx] = row;
                if (on_row) on_row(row);
            }
        }
    };

    const std::size_t n_threads = std::min(sweep_thread_cap(), cells.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    // per-cell medians over seeds, ok runs only
    for (LossKind loss : grid.losses)
        for (double alpha : grid.alphas)
            for (double k_sn : grid.k_sns) {
                CellSummary cell;
                cell.loss = loss;
                cell.alpha = alpha;
                cell.k_sn = k_sn;
                std::vector<double> fr, cov, hq;
                for (const SweepRow& row : result.rows)
                    if (row.loss == loss && row.alpha == alpha && row.k_sn == k_sn && row.status == "ok") {
                        fr.push_back(row.frechet);
                        cov.push_back(row.coverage);
                        hq.push_back(row.hq_fraction);
                    }
                cell.ok_runs = static_cast<int>(fr.size());
                cell.median_frechet = detail::median(fr);
                cell.median_coverage = detail::median(cov);
                cell.median_hq = detail::median(hq);
                result.cells.push_back(cell);
            }
    return result;
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& result) {
    os << "loss,alpha,k_sn,seed,frechet,coverage,hq_fraction,status\n";
    char buf[256];
    for (const SweepRow& r : result.rows) {
        std::snprintf(buf, sizeof(buf), "%s,%g,%g,%llu,%.10g,%d,%.10g,%s\n", loss_kind_name(r.loss).c_str(),
                      r.alpha, r.k_sn, static_cast<unsigned long long>(r.seed), r.frechet, r.coverage,
                      r.hq_fraction, r.status.c_str());
        os << buf;
    }
}

inline void write_sweep_summary_csv(std::ostream& os, const SweepResult& result) {
    os << "loss,alpha,k_sn,median_frechet,median_coverage,median_hq,ok_runs\n";
    char buf[256];
    for (const CellSummary& c : result.cells) {
        std::snprintf(buf, sizeof(buf), "%s,%g,%g,%.10g,%.10g,%.10g,%d\n", loss_kind_name(c.loss).c_str(),
                      c.alpha, c.k_sn, c.median_frechet, c.median_coverage, c.median_hq, c.ok_runs);
        os << buf;
    }
}

// ---- config (de)serialization ----

inline nlohmann::json mlp_to_json(const MlpConfig& cfg) {
    nlohmann::json j;
    j["widths"] = cfg.widths;
    j["hidden"] = activation_name(cfg.hidden);
    j["slope"] = cfg.slope;
    j["output"] = activation_name(cfg.output);
    return j;
}

inline MlpConfig mlp_from_json(const nlohmann::json& j) {
    MlpConfig cfg;
    cfg.widths = j.at("widths").get<std::vector<std::size_t>>();
    cfg.hidden = activation_from_name(j.value("hidden", "lrelu"));
    cfg.slope = j.value("slope", 0.2);
    cfg.output = activation_from_name(j.value("output", "identity"));
    return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["loss"] = {{"kind", loss_kind_name(cfg.loss.kind)}, {"alpha", cfg.loss.alpha}};
    switch (cfg.reg.kind) {
        case RegularizerSpec::Kind::none: j["regularizer"] = {{"kind", "none"}}; break;
        case RegularizerSpec::Kind::sn:
            j["regularizer"] = {{"kind", "sn"}, {"k_sn", cfg.reg.k_sn}, {"power_iters", cfg.reg.power_iters}};
            break;
        case RegularizerSpec::Kind::gp:
            j["regularizer"] = {{"kind", "gp"}, {"lambda", cfg.reg.gp.lambda}, {"k_gp", cfg.reg.gp.k_gp}};
            break;
    }
    j["generator"] = mlp_to_json(cfg.gen);
    j["discriminator"] = mlp_to_json(cfg.disc);
    j["optimizer"] = {{"lr", cfg.opt.lr}, {"rho", cfg.opt.rho}, {"eps", cfg.opt.eps}};
    if (cfg.data.kind == DataSource::Kind::toy) {
        const ToyDistribution& t = cfg.data.toy;
        switch (t.kind) {
            case ToyDistribution::Kind::gaussian_ring:
                j["data"] = {{"kind", "ring"},
                             {"modes", t.modes},
                             {"radius", t.radius},
                             {"stddev", t.stddev},
                             {"clip", {t.clip_lo, t.clip_hi}}};
                break;
            case ToyDistribution::Kind::grid:
                j["data"] = {{"kind", "grid"},
                             {"side", t.grid_side},
                             {"extent", t.grid_extent},
                             {"stddev", t.stddev},
                             {"clip", {t.clip_lo, t.clip_hi}}};
                break;
            case ToyDistribution::Kind::point_mass:
                j["data"] = {{"kind", "point"}, {"location", {t.location[0], t.location[1]}}};
                break;
        }
    } else {
        j["data"] = {{"kind", "mnist"}, {"images", cfg.data.mnist_images}, {"labels", cfg.data.mnist_labels}};
    }
    j["batch"] = cfg.batch;
    j["n_dis"] = cfg.n_dis;
    j["iterations"] = cfg.iterations;
    j["seed"] = cfg.seed;
    j["eval_every"] = cfg.eval_every;
    j["eval_samples"] = cfg.eval_samples;
    j["live_checks"] = cfg.live_checks;
    return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    cfg.loss.kind = loss_kind_from_name(j.at("loss").at("kind").get<std::string>());
    cfg.loss.alpha = j.at("loss").value("alpha", 1.0);
    const auto& r = j.at("regularizer");
    const std::string rk = r.at("kind").get<std::string>();
    if (rk == "none") {
        cfg.reg.kind = RegularizerSpec::Kind::none;
    } else if (rk == "sn") {
        cfg.reg.kind = RegularizerSpec::Kind::sn;
        cfg.reg.k_sn = r.value("k_sn", 1.0);
        cfg.reg.power_iters = r.value("power_iters", 1);
    } else if (rk == "gp") {
        cfg.reg.kind = RegularizerSpec::Kind::gp;
        cfg.reg.gp.lambda = r.value("lambda", 10.0);
        cfg.reg.gp.k_gp = r.value("k_gp", 1.0);
    } else {
        throw ConfigError("unknown regularizer kind '" + rk + "'");
    }
    cfg.gen = mlp_from_json(j.at("generator"));
    cfg.disc = mlp_from_json(j.at("discriminator"));
    if (j.contains("optimizer")) {
        cfg.opt.lr = j["optimizer"].value("lr", 5e-5);
        cfg.opt.rho = j["optimizer"].value("rho", 0.9);
        cfg.opt.eps = j["optimizer"].value("eps", 1e-8);
    }
    const auto& d = j.at("data");
    const std::string dk = d.at("kind").get<std::string>();
    if (dk == "ring") {
        cfg.data.kind = DataSource::Kind::toy;
        cfg.data.toy = ToyDistribution::ring(d.value("modes", 8), d.value("radius", 0.7),
                                             d.value("stddev", 0.05));
        if (d.contains("clip")) {
            cfg.data.toy.clip_lo = d["clip"][0].get<double>();
            cfg.data.toy.clip_hi = d["clip"][1].get<double>();
        }
    } else if (dk == "grid") {
        cfg.data.kind = DataSource::Kind::toy;
        cfg.data.toy =
            ToyDistribution::grid(d.value("side", 5), d.value("extent", 2.0), d.value("stddev", 0.05));
        if (d.contains("clip")) {
            cfg.data.toy.clip_lo = d["clip"][0].get<double>();
            cfg.data.toy.clip_hi = d["clip"][1].get<double>();
        }
    } else if (dk == "point") {
        cfg.data.kind = DataSource::Kind::toy;
        cfg.data.toy = ToyDistribution::point(d.at("location")[0].get<double>(),
                                              d.at("location")[1].get<double>());
    } else if (dk == "mnist") {
        cfg.data.kind = DataSource::Kind::mnist;
        cfg.data.mnist_images = d.at("images").get<std::string>();
        cfg.data.mnist_labels = d.value("labels", "");
    } else {
        throw ConfigError("unknown data kind '" + dk + "'");
    }
    cfg.batch = j.value("batch", std::size_t{64});
    cfg.n_dis = j.value("n_dis", 1);
    cfg.iterations = j.value("iterations", std::int64_t{20000});
    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.eval_every = j.value("eval_every", std::int64_t{1000});
    cfg.eval_samples = j.value("eval_samples", std::size_t{2048});
    cfg.live_checks = j.value("live_checks", true);
    return cfg;
}

inline SweepGrid sweep_grid_from_json(const nlohmann::json& j) {
    SweepGrid grid;
    for (const auto& s : j.at("loss")) grid.losses.push_back(loss_kind_from_name(s.get<std::string>()));
    grid.alphas = j.value("alpha", std::vector<double>{1.0});
    grid.k_sns = j.value("k_sn", std::vector<double>{1.0});
    for (const auto& s : j.value("seeds", std::vector<std::uint64_t>{1}))
        grid.seeds.push_back(s);
    grid.validate();
    return grid;
}

}  // namespace lipgan
