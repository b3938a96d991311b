#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lipgan/autodiff.hpp"
#include "lipgan/errors.hpp"
#include "lipgan/rng.hpp"
#include "lipgan/tensor.hpp"

namespace lipgan {

enum class Activation { leaky_relu, relu, tanh, identity };

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::leaky_relu: return "lrelu";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "identity";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "lrelu" || s == "leaky_relu") return Activation::leaky_relu;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "identity" || s == "linear" || s == "none") return Activation::identity;
    throw ConfigError("unknown activation '" + s + "'");
}

// Dense multilayer perceptron. Discriminators use output == identity so the
// raw score f(x) reaches the loss unsquashed; generators default to tanh so
// samples land in [-1,1]^d.
struct MlpConfig {
    std::vector<std::size_t> widths;  // input width first, output width last
    Activation hidden = Activation::leaky_relu;
    double slope = 0.2;  // leaky-relu only
    Activation output = Activation::identity;

    std::size_t layer_count() const { return widths.empty() ? 0 : widths.size() - 1; }

    void validate() const {
        if (widths.size() < 2) throw ConfigError("mlp needs at least input and output widths");
        for (std::size_t w : widths)
            if (w == 0) throw ConfigError("mlp width of zero");
        if (hidden == Activation::leaky_relu && (slope <= 0.0 || slope > 1.0))
            throw ConfigError("leaky-relu slope must lie in (0,1], got " + std::to_string(slope));
    }
};

struct ParamStore {
    std::vector<Tensor> weights;  // [in_l, out_l]
    std::vector<Tensor> biases;   // [out_l]

    std::size_t layer_count() const { return weights.size(); }
};

// Glorot-uniform weights, zero biases. Deterministic in the seed.
inline ParamStore init_params(const MlpConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ParamStore store;
    for (std::size_t l = 0; l + 1 < cfg.widths.size(); ++l) {
        const std::size_t fan_in = cfg.widths[l], fan_out = cfg.widths[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Tensor w = Tensor::zeros({fan_in, fan_out});
        for (double& v : w.values) v = rng.uniform(-bound, bound);
        store.weights.push_back(std::move(w));
        store.biases.push_back(Tensor::zeros({fan_out}));
    }
    return store;
}

// Parameters registered on a tape; weights may be replaced by normalized
// views before forward.
struct MlpVars {
    std::vector<Var> weights;
    std::vector<Var> biases;
};

inline MlpVars register_params(Tape& tape, const ParamStore& store) {
    MlpVars vars;
    for (const Tensor& w : store.weights) vars.weights.push_back(tape.input(w));
    for (const Tensor& b : store.biases) vars.biases.push_back(tape.input(b));
    return vars;
}

inline std::vector<Var> all_vars(const MlpVars& vars) {
    std::vector<Var> out = vars.weights;
    out.insert(out.end(), vars.biases.begin(), vars.biases.end());
    return out;
}

namespace detail {
inline Var activate(Tape& tape, Var x, Activation act, double slope) {
    switch (act) {
        case Activation::leaky_relu: return tape.leaky_relu(x, slope);
        case Activation::relu: return tape.relu(x);
        case Activation::tanh: return tape.tanh(x);
        case Activation::identity: return x;
    }
    return x;
}
}  // namespace detail

inline Var forward(Tape& tape, const MlpVars& vars, const MlpConfig& cfg, Var batch) {
    if (batch.value().shape.size() != 2 || batch.value().shape[1] != cfg.widths.front())
        throw ConfigError("batch shape " + shape_str(batch.value().shape) + " does not match input width " +
                          std::to_string(cfg.widths.front()));
    Var h = batch;
    const std::size_t layers = vars.weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
        h = tape.affine(h, vars.weights[l], vars.biases[l]);
        if (l + 1 < layers)
            h = detail::activate(tape, h, cfg.hidden, cfg.slope);
        else
            h = detail::activate(tape, h, cfg.output, cfg.slope);
    }
    return h;
}

// Tape-free forward for sampling and metric evaluation. Bit-identical to the
// tape path on the same inputs.
inline Tensor forward_raw(const ParamStore& store, const MlpConfig& cfg, const Tensor& batch) {
    if (batch.shape.size() != 2 || batch.shape[1] != cfg.widths.front())
        throw ConfigError("batch shape " + shape_str(batch.shape) + " does not match input width " +
                          std::to_string(cfg.widths.front()));
    Tensor h = batch;
    auto act = [&](Tensor& t, Activation a) {
        switch (a) {
            case Activation::leaky_relu:
                for (double& v : t.values) v = v > 0.0 ? v : cfg.slope * v;
                break;
            case Activation::relu:
                for (double& v : t.values) v = v > 0.0 ? v : 0.0;
                break;
            case Activation::tanh:
                for (double& v : t.values) v = std::tanh(v);
                break;
            case Activation::identity: break;
        }
    };
    for (std::size_t l = 0; l < store.layer_count(); ++l) {
        Tensor next = detail::matmul_value(h, store.weights[l], false, false);
        const std::size_t rows = next.shape[0], cols = next.shape[1];
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) next.values[i * cols + j] += store.biases[l].values[j];
        act(next, l + 1 < store.layer_count() ? cfg.hidden : cfg.output);
        h = std::move(next);
    }
    return h;
}

// ---- checkpoints: one JSON header line, then little-endian 64-bit floats ----

struct CheckpointMeta {
    std::vector<std::size_t> widths;
    std::string hidden, output;
    double slope = 0.2;
    std::uint64_t seed = 0;
    std::int64_t iteration = 0;
};

namespace detail {
inline void write_f64_le(std::ostream& os, double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 8);
}

inline double read_f64_le(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    if (!is) throw FormatError("checkpoint truncated while reading values");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const ParamStore& store, const MlpConfig& cfg,
                            std::uint64_t seed, std::int64_t iteration) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    nlohmann::json header;
    header["widths"] = cfg.widths;
    header["hidden"] = activation_name(cfg.hidden);
    header["slope"] = cfg.slope;
    header["output"] = activation_name(cfg.output);
    header["seed"] = seed;
    header["iteration"] = iteration;
    os << header.dump() << "\n";
    for (std::size_t l = 0; l < store.layer_count(); ++l) {
        for (double v : store.weights[l].values) detail::write_f64_le(os, v);
        for (double v : store.biases[l].values) detail::write_f64_le(os, v);
    }
    if (!os) throw IoError("failed writing checkpoint: " + path);
}

inline std::pair<ParamStore, CheckpointMeta> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(is, line)) throw FormatError("checkpoint missing JSON header: " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint header is not valid JSON: " + std::string(e.what()));
    }
    CheckpointMeta meta;
    meta.widths = header.at("widths").get<std::vector<std::size_t>>();
    meta.hidden = header.at("hidden").get<std::string>();
    meta.output = header.at("output").get<std::string>();
    meta.slope = header.value("slope", 0.2);
    meta.seed = header.value("seed", std::uint64_t{0});
    meta.iteration = header.value("iteration", std::int64_t{0});

    ParamStore store;
    for (std::size_t l = 0; l + 1 < meta.widths.size(); ++l) {
        Tensor w = Tensor::zeros({meta.widths[l], meta.widths[l + 1]});
        for (double& v : w.values) v = detail::read_f64_le(is);
        Tensor b = Tensor::zeros({meta.widths[l + 1]});
        for (double& v : b.values) v = detail::read_f64_le(is);
        store.weights.push_back(std::move(w));
        store.biases.push_back(std::move(b));
    }
    return {std::move(store), std::move(meta)};
}

}  // namespace lipgan
