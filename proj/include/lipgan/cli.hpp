#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lipgan/svg.hpp"
#include "lipgan/trainer.hpp"

namespace lipgan {

namespace fs = std::filesystem;

namespace clidetail {

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read config file: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return j;
}

// Apply one dotted-path KEY=VALUE override; the path must already exist.
inline void apply_override(nlohmann::json& root, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) throw UsageError("--set wants KEY=VALUE, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    nlohmann::json* node = &root;
    std::size_t start = 0;
    std::vector<std::string> parts;
    while (start <= key.size()) {
        auto dot = key.find('.', start);
        if (dot == std::string::npos) {
            parts.push_back(key.substr(start));
            break;
        }
        parts.push_back(key.substr(start, dot - start));
        start = dot + 1;
    }
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i]))
            throw ConfigError("--set path '" + key + "' does not exist in the config");
        node = &(*node)[parts[i]];
    }
    if (!node->contains(parts.back()))
        throw ConfigError("--set path '" + key + "' does not exist in the config");

    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;  // bare strings stay strings
    }
    (*node)[parts.back()] = value;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write file: " + path);
    os << text;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read file: " + path);
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            t.header = cells;
            first = false;
        } else {
            t.rows.push_back(cells);
        }
    }
    return t;
}

inline std::size_t csv_col(const CsvTable& t, const std::string& name) {
    for (std::size_t i = 0; i < t.header.size(); ++i)
        if (t.header[i] == name) return i;
    throw FormatError("column '" + name + "' missing from CSV");
}

}  // namespace clidetail

// ---- artifact directory writers ----

inline void write_run_artifacts(const std::string& dir, const RunArtifacts& art) {
    fs::create_directories(dir);
    clidetail::write_text_file(dir + "/config.json", config_to_json(art.config).dump(2) + "\n");
    {
        std::ofstream os(dir + "/trace.jsonl", std::ios::binary);
        if (!os) throw IoError("cannot write trace: " + dir + "/trace.jsonl");
        write_trace_jsonl(os, art.trace);
    }
    {
        std::ofstream os(dir + "/metrics.csv", std::ios::binary);
        os << "iter,frechet,coverage,hq_fraction\n";
        char buf[128];
        for (const EvalRow& r : art.metrics) {
            std::snprintf(buf, sizeof(buf), "%lld,%.10g,%d,%.10g\n", static_cast<long long>(r.iter),
                          r.frechet, r.covered, r.hq_fraction);
            os << buf;
        }
    }
    save_checkpoint(dir + "/checkpoint_gen.bin", art.gen_params, art.config.gen, art.config.seed,
                    art.config.iterations);
    save_checkpoint(dir + "/checkpoint_disc.bin", art.disc_params, art.config.disc, art.config.seed,
                    art.config.iterations);
    nlohmann::json status;
    status["failed"] = art.failed;
    status["failed_iteration"] = art.failed_iteration;
    status["wall_seconds"] = art.wall_seconds;
    status["theorem_violations"] = art.theorem_violations;
    status["corollary_violations"] = art.corollary_violations;
    clidetail::write_text_file(dir + "/status.json", status.dump(2) + "\n");
}

// Render whatever the artifacts directory supports: an omega band from
// trace.jsonl, a log-x metric line from summary.csv, a sample scatter from
// the generator checkpoint. At least one input must be present.
inline std::vector<std::string> emit_plots(const std::string& dir) {
    std::vector<std::string> written;
    if (fs::exists(dir + "/trace.jsonl")) {
        std::ifstream is(dir + "/trace.jsonl");
        DomainTrace trace = read_trace_jsonl(is);
        clidetail::write_text_file(dir + "/omega_vs_iter.svg", svg::omega_band_svg(trace));
        written.push_back(dir + "/omega_vs_iter.svg");
    }
    if (fs::exists(dir + "/summary.csv")) {
        clidetail::CsvTable t = clidetail::read_csv(dir + "/summary.csv");
        std::size_t c_loss = clidetail::csv_col(t, "loss");
        std::size_t c_alpha = clidetail::csv_col(t, "alpha");
        std::size_t c_ksn = clidetail::csv_col(t, "k_sn");
        std::size_t c_fr = clidetail::csv_col(t, "median_frechet");
        bool ksn_varies = false;
        for (const auto& r : t.rows)
            if (r[c_ksn] != t.rows.front()[c_ksn]) ksn_varies = true;
        const std::size_t c_x = ksn_varies ? c_ksn : c_alpha;
        std::vector<svg::LogSeries> series;
        for (const auto& r : t.rows) {
            auto it = std::find_if(series.begin(), series.end(),
                                   [&](const svg::LogSeries& s) { return s.label == r[c_loss]; });
            if (it == series.end()) {
                series.push_back({r[c_loss], {}});
                it = series.end() - 1;
            }
            double x = std::strtod(r[c_x].c_str(), nullptr);
            double y = std::strtod(r[c_fr].c_str(), nullptr);
            if (x > 0.0 && std::isfinite(y)) it->points.emplace_back(x, y);
        }
        for (auto& s : series) std::sort(s.points.begin(), s.points.end());
        clidetail::write_text_file(
            dir + "/metric_vs_param.svg",
            svg::line_plot_log_x_svg(series, ksn_varies ? "k_sn" : "alpha", "median frechet"));
        written.push_back(dir + "/metric_vs_param.svg");
    }
    if (fs::exists(dir + "/config.json") && fs::exists(dir + "/checkpoint_gen.bin")) {
        ExperimentConfig cfg = config_from_json(clidetail::load_json_file(dir + "/config.json"));
        if (cfg.data.kind == DataSource::Kind::toy) {
            auto [gen, meta] = load_checkpoint(dir + "/checkpoint_gen.bin");
            Rng rng(Rng::derive_seed(cfg.seed, 9001));
            Tensor real = sample_real(cfg.data.toy, 1024, rng);
            Tensor fake = forward_raw(gen, cfg.gen, sample_noise(cfg.gen.widths.front(), 1024, rng));
            std::vector<std::pair<double, double>> rp, fp;
            for (std::size_t i = 0; i < 1024; ++i) {
                rp.emplace_back(real.values[i * 2], real.values[i * 2 + 1]);
                fp.emplace_back(fake.values[i * 2], fake.values[i * 2 + 1]);
            }
            clidetail::write_text_file(dir + "/samples_scatter.svg", svg::scatter_svg(rp, fp));
            written.push_back(dir + "/samples_scatter.svg");
        }
    }
    if (written.empty()) throw IoError("no plottable artifacts under " + dir);
    return written;
}

// ---- analyze ----

struct AnalyzeReport {
    std::size_t records = 0;
    std::size_t psi_mismatches = 0;
    std::array<double, 2> omega_union{0.0, 0.0};
    std::array<double, 2> omega_final{0.0, 0.0};
    std::size_t drift_window = 0;
    double drift_median_early = 0.0, drift_median_late = 0.0;
    double linearity_union = 0.0, linearity_final = 0.0;
};

inline AnalyzeReport analyze_trace(const DomainTrace& trace, const LossSpec& spec, std::size_t window) {
    if (trace.empty()) throw UsageError("trace is empty");
    AnalyzeReport rep;
    rep.records = trace.size();
    const LossTerm term = canonical_trace_term(spec.kind);
    for (const IterRecord& r : trace.records) {
        auto psi = gradient_range_over(spec, term, r.omega[0], r.omega[1]);
        if (psi != r.psi) ++rep.psi_mismatches;
    }
    rep.omega_union = trace.omega_union();
    rep.omega_final = trace.records.back().omega;
    rep.drift_window = window;
    std::vector<double> drift = domain_drift(trace, window);
    const std::size_t half = drift.size() / 2;
    auto median_of = [](std::vector<double> v) {
        if (v.empty()) return 0.0;
        std::sort(v.begin(), v.end());
        return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    };
    rep.drift_median_early = median_of({drift.begin(), drift.begin() + static_cast<long>(half)});
    rep.drift_median_late = median_of({drift.begin() + static_cast<long>(half), drift.end()});
    if (drift.size() < 2) rep.drift_median_early = rep.drift_median_late = median_of(drift);
    rep.linearity_union = linearity_deviation(spec, term, rep.omega_union[0], rep.omega_union[1]);
    rep.linearity_final = linearity_deviation(spec, term, rep.omega_final[0], rep.omega_final[1]);
    return rep;
}

inline nlohmann::json analyze_report_json(const AnalyzeReport& rep, const LossSpec& spec) {
    nlohmann::json j;
    j["records"] = rep.records;
    j["loss"] = loss_kind_name(spec.kind);
    j["alpha"] = spec.alpha;
    j["psi_mismatches"] = rep.psi_mismatches;
    j["omega_union"] = {rep.omega_union[0], rep.omega_union[1]};
    j["omega_final"] = {rep.omega_final[0], rep.omega_final[1]};
    j["drift"] = {{"window", rep.drift_window},
                  {"median_early", rep.drift_median_early},
                  {"median_late", rep.drift_median_late}};
    j["linearity"] = {{"term", canonical_trace_term(spec.kind) == LossTerm::fake ? "fake" : "real"},
                      {"omega_union_deviation", rep.linearity_union},
                      {"omega_final_deviation", rep.linearity_final}};
    return j;
}

// ---- verify: the bound/property suite ----

struct VerifyCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

inline std::vector<VerifyCheck> verify_suite() {
    std::vector<VerifyCheck> checks;
    auto add = [&](const std::string& name, bool pass, const std::string& detail) {
        checks.push_back({name, pass, detail});
    };
    Rng rng(20240);
    auto rnd = [&](Shape s, double lo, double hi) {
        Tensor t = Tensor::zeros(std::move(s));
        for (double& v : t.values) v = rng.uniform(lo, hi);
        return t;
    };

    {  // gradient checks across the op set
        double worst = 0.0;
        worst = std::max(worst, finite_diff_check([](Tape& t, Var x) { return t.sum(t.exp(x)); },
                                                  rnd({6}, -1.0, 1.0), 1e-5));
        worst = std::max(worst, finite_diff_check([](Tape& t, Var x) { return t.sum(t.softplus(x)); },
                                                  rnd({6}, -2.0, 2.0), 1e-5));
        worst = std::max(worst, finite_diff_check([](Tape& t, Var x) { return t.sum(t.tanh(x)); },
                                                  rnd({6}, -2.0, 2.0), 1e-5));
        worst = std::max(worst, finite_diff_check([](Tape& t, Var x) { return t.sum(t.cos(x)); },
                                                  rnd({6}, -2.0, 2.0), 1e-5));
        worst = std::max(worst, finite_diff_check([](Tape& t, Var x) { return t.l2norm(x); },
                                                  rnd({6}, 0.3, 1.5), 1e-5));
        worst = std::max(worst, finite_diff_check([](Tape& t, Var x) { return t.sum(t.square(t.log(x))); },
                                                  rnd({6}, 0.2, 2.0), 1e-5));
        add("op-gradients-vs-finite-differences", worst < 1e-5, "max rel err " + std::to_string(worst));
    }
    {  // loss tape gradients vs closed forms
        double worst = 0.0;
        for (LossKind kind : {LossKind::ns, LossKind::ls, LossKind::ls_sharp, LossKind::wgan, LossKind::cos,
                              LossKind::exp})
            for (double alpha : {1e-9, 1.0, 10.0}) {
                LossSpec spec{kind, alpha};
                Tensor fr = rnd({8}, -2.0, 2.0), ff = rnd({8}, -2.0, 2.0);
                Tape tape;
                Var vr = tape.input(fr), vf = tape.input(ff);
                Var loss = disc_loss(tape, spec, vr, vf);
                auto grads = tape.backward(loss, {vr, vf});
                for (std::size_t i = 0; i < 8; ++i) {
                    double er = pointwise_grad(spec, LossTerm::real, fr.values[i]) / 8.0;
                    double ef = pointwise_grad(spec, LossTerm::fake, ff.values[i]) / 8.0;
                    worst = std::max(worst, std::abs(grads[0].values[i] - er) / (std::abs(er) + 1e-300));
                    worst = std::max(worst, std::abs(grads[1].values[i] - ef) / (std::abs(ef) + 1e-300));
                }
            }
        add("loss-gradients-vs-closed-form", worst < 1e-10, "max rel err " + std::to_string(worst));
    }
    {  // double backward via the gradient-penalty path
        MlpConfig cfg;
        cfg.widths = {2, 5, 1};
        cfg.hidden = Activation::tanh;
        ParamStore p = init_params(cfg, 5);
        Tensor xr = rnd({4, 2}, -1.0, 1.0), xf = rnd({4, 2}, -1.0, 1.0);
        GpConfig gp{10.0, 1.0};
        std::vector<Tensor> theta = {p.weights[0], p.biases[0], p.weights[1], p.biases[1]};
        double err = finite_diff_check_multi(
            [&](Tape& t, std::vector<Var>& pv) {
                MlpVars vars{{pv[0], pv[2]}, {pv[1], pv[3]}};
                auto disc = [&](Tape& tt, Var x) { return forward(tt, vars, cfg, x); };
                Rng gp_rng(7);
                return gradient_penalty(t, disc, xr, xf, gp, gp_rng);
            },
            theta, 1e-5);
        add("gradient-penalty-double-backward", err < 1e-4, "max rel err " + std::to_string(err));
    }
    {  // gradient-penalty closed values on a linear discriminator
        Tensor w = Tensor::matrix(2, 1, {3.0, 4.0});
        auto disc = [&](Tape& t, Var x) { return t.matmul(x, t.input(w)); };
        Tensor xr = rnd({4, 2}, -1.0, 1.0), xf = rnd({4, 2}, -1.0, 1.0);
        Tape t1;
        Rng r1(3);
        double met = gradient_penalty(t1, disc, xr, xf, GpConfig{10.0, 5.0}, r1).value().item();
        Tape t2;
        Rng r2(3);
        double missed = gradient_penalty(t2, disc, xr, xf, GpConfig{10.0, 4.0}, r2).value().item();
        add("gradient-penalty-linear-values", met == 0.0 && std::abs(missed - 10.0) < 1e-9,
            "met=" + std::to_string(met) + " missed=" + std::to_string(missed));
    }
    {  // power iteration against the Jacobi oracle
        double worst = 0.0;
        for (int rep = 0; rep < 10; ++rep) {
            Tensor w = rnd({1 + rng.next_u64() % 12, 1 + rng.next_u64() % 12}, -1.0, 1.0);
            SnState st = SnState::init(1.0, w.shape[1], rng);
            double est = power_iteration_converged(w, st);
            double oracle = spectral_norm_exact(w);
            if (oracle > 0.0) worst = std::max(worst, std::abs(est - oracle) / oracle);
        }
        add("power-iteration-vs-svd-oracle", worst < 1e-9, "max rel err " + std::to_string(worst));
    }
    {  // spectral normalization exactness and the k^n product law
        double worst_norm = 0.0, worst_product = 0.0;
        for (double k_sn : {0.25, 1.0, 5.0, 50.0}) {
            MlpConfig cfg;
            cfg.widths = {6, 12, 12, 1};
            ParamStore p = init_params(cfg, 17 + static_cast<std::uint64_t>(k_sn * 4));
            std::vector<SnState> states;
            for (const Tensor& w : p.weights) {
                SnState st = SnState::init(k_sn, w.shape[1], rng);
                power_iteration_converged(w, st);
                states.push_back(std::move(st));
            }
            ParamStore normed = spectral_normalize_raw(p, states, true);
            double product = 1.0;
            for (const Tensor& w : normed.weights) {
                worst_norm = std::max(worst_norm, std::abs(spectral_norm_exact(w) - k_sn));
                product *= spectral_norm_exact(w);
            }
            worst_product = std::max(worst_product,
                                     std::abs(product - std::pow(k_sn, 3)) / std::pow(k_sn, 3));
        }
        add("spectral-normalization-exactness", worst_norm < 1e-3 && worst_product < 0.005,
            "max |sigma-k|=" + std::to_string(worst_norm) + " product rel=" + std::to_string(worst_product));
    }
    {  // Theorem 1: score spread within the product bound over the input box
        bool ok = true;
        for (double k_sn : {0.5, 1.0, 2.0}) {
            MlpConfig cfg;
            cfg.widths = {2, 16, 16, 1};
            ParamStore p = init_params(cfg, 23);
            std::vector<SnState> states;
            for (const Tensor& w : p.weights) {
                SnState st = SnState::init(k_sn, w.shape[1], rng);
                power_iteration_converged(w, st);
                states.push_back(std::move(st));
            }
            ParamStore normed = spectral_normalize_raw(p, states, true);
            double bound = domain_bound(lipschitz_upper_bound(normed), std::size_t{2}, -1.0, 1.0);
            Tensor xs = rnd({128, 2}, -1.0, 1.0);
            Tensor scores = forward_raw(normed, cfg, xs);
            auto iv = record_interval(scores);
            if (iv[1] - iv[0] > bound + 1e-6) ok = false;
        }
        add("theorem1-domain-bound", ok, "");
    }
    {  // Corollary 1: attained gradient spread within M * |Omega|
        bool ok = true;
        for (LossKind kind : {LossKind::ns, LossKind::ls, LossKind::cos, LossKind::exp}) {
            LossSpec spec{kind, 1.0};
            Tensor scores = rnd({64}, -2.0, 2.0);
            auto iv = record_interval(scores);
            auto psi = attained_gradient_interval(spec, LossTerm::real, scores);
            double m = second_derivative_max(spec, LossTerm::real, iv[0], iv[1]);
            if (psi[1] - psi[0] > m * (iv[1] - iv[0]) + 1e-9) ok = false;
        }
        add("corollary1-gradient-interval-bound", ok, "");
    }
    {  // diameter constant
        double v = domain_bound(1.0, Shape{32, 32, 3}, -1.0, 1.0);
        add("domain-bound-constant", std::abs(v - 110.85125168440814) < 1e-9, "got " + std::to_string(v));
    }
    {  // degenerate limits
        bool ok = std::abs(degenerate_limit_grad(LossKind::ns, LossTerm::real) + 0.5) < 1e-15 &&
                  std::abs(degenerate_limit_grad(LossKind::exp, LossTerm::real) - 1.0) < 1e-15 &&
                  std::abs(degenerate_limit_grad(LossKind::cos, LossTerm::gen) - std::sin(-1.0)) < 1e-15;
        for (LossKind kind : {LossKind::ns, LossKind::ls, LossKind::ls_sharp, LossKind::wgan, LossKind::cos,
                              LossKind::exp})
            for (LossTerm term : {LossTerm::real, LossTerm::fake, LossTerm::gen})
                for (double w : {-1e3, 0.0, 1e3})
                    if (std::abs(pointwise_grad({kind, 1e-25}, term, w) - degenerate_limit_grad(kind, term)) >
                        1e-9)
                        ok = false;
        add("degenerate-limit-gradients", ok, "");
    }
    return checks;
}

// ---- the CLI driver ----

inline int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Lipschitz-regularized GAN laboratory"};
    app.require_subcommand(1);

    std::string config_path, analyze_input, loss_name = "NS";
    std::string train_out = "run_out", sweep_out = "sweep_out", analyze_out;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed_override;
    double alpha = 1.0;
    std::size_t drift_window = 100;
    bool quiet = false;
    app.add_flag("--quiet", quiet, "suppress progress output");

    CLI::App* train_cmd = app.add_subcommand("train", "run one experiment");
    train_cmd->add_option("--config", config_path, "experiment config JSON")->required();
    train_cmd->add_option("--out", train_out, "artifacts directory");
    train_cmd->add_option("--set", overrides, "dotted-path config override KEY=VALUE");
    train_cmd->add_option("--seed", seed_override, "override the config seed");

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "run a parameter grid");
    sweep_cmd->add_option("--config", config_path, "sweep config JSON with base and grid")->required();
    sweep_cmd->add_option("--out", sweep_out, "artifacts directory");
    sweep_cmd->add_option("--set", overrides, "dotted-path override applied to the base config");
    sweep_cmd->add_option("--seed", seed_override, "override the base seed");

    CLI::App* analyze_cmd = app.add_subcommand("analyze", "recompute reports from a trace");
    analyze_cmd->add_option("input", analyze_input, "trace.jsonl or an artifacts directory")->required();
    analyze_cmd->add_option("--loss", loss_name, "loss kind when input is a bare trace");
    analyze_cmd->add_option("--alpha", alpha, "domain-scaling factor when input is a bare trace");
    analyze_cmd->add_option("--window", drift_window, "drift window in iterations");
    analyze_cmd->add_option("--out", analyze_out, "report directory (defaults next to the input)");

    CLI::App* verify_cmd = app.add_subcommand("verify", "run the bound/property suite");
    (void)verify_cmd;

    std::vector<const char*> argv;
    argv.push_back("lipgan");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (app.got_subcommand(train_cmd)) {
            nlohmann::json j = clidetail::load_json_file(config_path);
            for (const std::string& s : overrides) clidetail::apply_override(j, s);
            ExperimentConfig cfg = config_from_json(j);
            if (seed_override) cfg.seed = *seed_override;
            cfg.validate();
            RunArtifacts art = train(cfg);
            write_run_artifacts(train_out, art);
            emit_plots(train_out);
            if (!quiet) {
                if (art.failed)
                    std::cout << "halted: non-finite loss at iteration " << art.failed_iteration << "\n";
                std::cout << "wrote " << train_out << " (" << art.trace.size() << " iterations, "
                          << art.wall_seconds << " s)\n";
                if (!art.metrics.empty())
                    std::cout << "final frechet " << art.metrics.back().frechet << ", coverage "
                              << art.metrics.back().covered << ", hq " << art.metrics.back().hq_fraction
                              << "\n";
            }
            return 0;
        }
        if (app.got_subcommand(sweep_cmd)) {
            nlohmann::json j = clidetail::load_json_file(config_path);
            if (!j.contains("base") || !j.contains("grid"))
                throw ConfigError("sweep config wants {\"base\": {...}, \"grid\": {...}}");
            for (const std::string& s : overrides) clidetail::apply_override(j["base"], s);
            ExperimentConfig base = config_from_json(j["base"]);
            if (seed_override) base.seed = *seed_override;
            SweepGrid grid = sweep_grid_from_json(j["grid"]);
            auto progress = [&](const SweepRow& row) {
                if (!quiet)
                    std::cout << loss_kind_name(row.loss) << " alpha=" << row.alpha << " k_sn=" << row.k_sn
                              << " seed=" << row.seed << " -> " << row.status << " frechet=" << row.frechet
                              << "\n";
            };
            SweepResult res = sweep(base, grid, progress);
            fs::create_directories(sweep_out);
            clidetail::write_text_file(sweep_out + "/config.json", j.dump(2) + "\n");
            {
                std::ofstream os(sweep_out + "/sweep.csv", std::ios::binary);
                write_sweep_csv(os, res);
            }
            {
                std::ofstream os(sweep_out + "/summary.csv", std::ios::binary);
                write_sweep_summary_csv(os, res);
            }
            emit_plots(sweep_out);
            if (!quiet) std::cout << "wrote " << sweep_out << " (" << res.rows.size() << " runs)\n";
            return 0;
        }
        if (app.got_subcommand(analyze_cmd)) {
            std::string trace_path = analyze_input;
            LossSpec spec{loss_kind_from_name(loss_name), alpha};
            bool is_dir = fs::is_directory(analyze_input);
            if (is_dir) {
                trace_path = analyze_input + "/trace.jsonl";
                ExperimentConfig cfg =
                    config_from_json(clidetail::load_json_file(analyze_input + "/config.json"));
                spec = cfg.loss;
            }
            std::ifstream is(trace_path);
            if (!is) throw IoError("cannot read trace: " + trace_path);
            DomainTrace trace = read_trace_jsonl(is);
            AnalyzeReport rep = analyze_trace(trace, spec, drift_window);
            std::string report_dir = analyze_out.empty()
                                         ? (is_dir ? analyze_input : fs::path(trace_path).parent_path().string())
                                         : analyze_out;
            if (report_dir.empty()) report_dir = ".";
            fs::create_directories(report_dir);
            clidetail::write_text_file(report_dir + "/report.json",
                                       analyze_report_json(rep, spec).dump(2) + "\n");
            if (is_dir) emit_plots(analyze_input);
            if (!quiet) {
                std::cout << "records " << rep.records << ", psi mismatches " << rep.psi_mismatches << "\n";
                std::cout << "omega union [" << rep.omega_union[0] << ", " << rep.omega_union[1] << "]\n";
                std::cout << "drift median early " << rep.drift_median_early << ", late "
                          << rep.drift_median_late << "\n";
                std::cout << "linearity deviation over union " << rep.linearity_union << "\n";
                std::cout << "wrote " << report_dir << "/report.json\n";
            }
            return rep.psi_mismatches == 0 ? 0 : 1;
        }
        // verify
        std::vector<VerifyCheck> checks = verify_suite();
        bool all = true;
        for (const VerifyCheck& c : checks) {
            std::cout << (c.pass ? "pass " : "FAIL ") << c.name;
            if (!c.detail.empty()) std::cout << " (" << c.detail << ")";
            std::cout << "\n";
            all = all && c.pass;
        }
        return all ? 0 : 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace lipgan
