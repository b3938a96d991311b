#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "lipgan/trainer.hpp"

using namespace lipgan;

namespace {

ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.gen.widths = {4, 16, 16, 2};
    cfg.gen.output = Activation::tanh;
    cfg.disc.widths = {2, 16, 16, 1};
    cfg.reg.kind = RegularizerSpec::Kind::sn;
    cfg.reg.k_sn = 1.0;
    cfg.data.toy = ToyDistribution::ring(8, 0.7, 0.05);
    cfg.batch = 16;
    cfg.iterations = 5;
    cfg.eval_every = 5;
    cfg.eval_samples = 64;
    cfg.seed = 7;
    return cfg;
}

bool params_differ(const ParamStore& a, const ParamStore& b) {
    for (std::size_t l = 0; l < a.layer_count(); ++l) {
        if (a.weights[l].values != b.weights[l].values) return true;
        if (a.biases[l].values != b.biases[l].values) return true;
    }
    return false;
}

}  // namespace

TEST(Trainer, SingleIterationContract) {
    ExperimentConfig cfg = tiny_config();
    cfg.iterations = 1;
    cfg.eval_every = 1;
    RunArtifacts art = train(cfg);
    EXPECT_FALSE(art.failed);
    ASSERT_EQ(art.trace.size(), 1u);
    ParamStore gen0 = init_params(cfg.gen, Rng::derive_seed(cfg.seed, 1));
    ParamStore disc0 = init_params(cfg.disc, Rng::derive_seed(cfg.seed, 2));
    EXPECT_TRUE(params_differ(art.gen_params, gen0));
    EXPECT_TRUE(params_differ(art.disc_params, disc0));
}

TEST(Trainer, DeterministicGivenSeed) {
    ExperimentConfig cfg = tiny_config();
    RunArtifacts a = train(cfg);
    RunArtifacts b = train(cfg);
    ASSERT_EQ(a.trace.size(), b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        EXPECT_EQ(a.trace.records[i].omega, b.trace.records[i].omega);
        EXPECT_EQ(a.trace.records[i].psi, b.trace.records[i].psi);
        EXPECT_EQ(a.trace.records[i].loss_d, b.trace.records[i].loss_d);
    }
    for (std::size_t l = 0; l < a.gen_params.layer_count(); ++l)
        EXPECT_EQ(a.gen_params.weights[l].values, b.gen_params.weights[l].values);
    ASSERT_EQ(a.metrics.size(), b.metrics.size());
    for (std::size_t i = 0; i < a.metrics.size(); ++i)
        EXPECT_EQ(a.metrics[i].frechet, b.metrics[i].frechet);
}

TEST(Trainer, TraceLengthMatchesIterations) {
    ExperimentConfig cfg = tiny_config();
    cfg.iterations = 9;
    cfg.eval_every = 4;
    RunArtifacts art = train(cfg);
    EXPECT_EQ(art.trace.size(), 9u);
    // eval at 4, 8 and the final iteration
    ASSERT_EQ(art.metrics.size(), 3u);
    EXPECT_EQ(art.metrics.back().iter, 9);
}

TEST(Trainer, LiveBoundsHoldOnShortRun) {
    ExperimentConfig cfg = tiny_config();
    cfg.iterations = 50;
    for (double k_sn : {0.5, 1.0}) {
        cfg.reg.k_sn = k_sn;
        RunArtifacts art = train(cfg);
        EXPECT_FALSE(art.failed);
        EXPECT_EQ(art.theorem_violations, 0u);
        EXPECT_EQ(art.corollary_violations, 0u);
    }
}

// Overflow in the loss halts the run and keeps the artifacts so far.
TEST(Trainer, NanHaltReturnsPartialArtifacts) {
    ExperimentConfig cfg = tiny_config();
    cfg.loss = {LossKind::exp, 1e10};  // exp(1e10 * f) overflows immediately
    cfg.reg.k_sn = 5.0;
    cfg.iterations = 100;
    RunArtifacts art = train(cfg);
    EXPECT_TRUE(art.failed);
    EXPECT_GE(art.failed_iteration, 0);
    EXPECT_LT(art.failed_iteration, 100);
    EXPECT_LT(art.trace.size(), 100u);
}

// The degeneration-equivalence invariant: at the alpha floor, the first
// D-step update equals the one from the analytically linear loss with slope
// grad L(0) per term, for every curved loss in the zoo.
TEST(Trainer, DegenerateAlphaMatchesLinearizedFirstUpdate) {
    for (LossKind kind : {LossKind::ns, LossKind::ls_sharp, LossKind::cos, LossKind::exp}) {
        ExperimentConfig cfg = tiny_config();
        cfg.loss = {kind, 1e-25};

        // shared first-iteration state
        Rng rng(cfg.seed);
        ParamStore gen = init_params(cfg.gen, Rng::derive_seed(cfg.seed, 1));
        ParamStore disc0 = init_params(cfg.disc, Rng::derive_seed(cfg.seed, 2));
        std::vector<SnState> states0;
        Rng sn_rng(Rng::derive_seed(cfg.seed, 3));
        for (const Tensor& w : disc0.weights) {
            SnState st = SnState::init(cfg.reg.k_sn, w.shape[1], sn_rng, 1);
            SnState warm = st;
            warm.power_iters_per_step = 50;
            power_iteration(w, warm);
            st.u = warm.u;
            states0.push_back(std::move(st));
        }
        Tensor x_real = sample_real(cfg.data.toy, cfg.batch, rng);
        Tensor z = sample_noise(cfg.gen.widths.front(), cfg.batch, rng);
        Tensor x_fake = forward_raw(gen, cfg.gen, z);

        auto first_update = [&](bool linearized) {
            ParamStore disc = disc0;
            std::vector<SnState> states = states0;
            RmsPropState opt = RmsPropState::init(disc);
            Tape tape;
            MlpVars raw = register_params(tape, disc);
            MlpVars eff = spectral_normalize(tape, raw, states, true);
            Var f_real = forward(tape, eff, cfg.disc, tape.input(x_real));
            Var f_fake = forward(tape, eff, cfg.disc, tape.input(x_fake));
            Var loss{};
            if (linearized) {
                loss = tape.add(
                    tape.scale(tape.mean(f_real), degenerate_limit_grad(kind, LossTerm::real)),
                    tape.scale(tape.mean(f_fake), degenerate_limit_grad(kind, LossTerm::fake)));
            } else {
                loss = disc_loss(tape, cfg.loss, f_real, f_fake);
            }
            std::vector<Var> wrt = all_vars(raw);
            std::vector<Tensor> grads = tape.backward(loss, std::span<const Var>(wrt));
            rmsprop_step(disc, grads, opt, cfg.opt, 0);
            std::vector<double> delta;
            for (std::size_t l = 0; l < disc.layer_count(); ++l) {
                for (std::size_t i = 0; i < disc.weights[l].size(); ++i)
                    delta.push_back(disc.weights[l].values[i] - disc0.weights[l].values[i]);
                for (std::size_t i = 0; i < disc.biases[l].size(); ++i)
                    delta.push_back(disc.biases[l].values[i] - disc0.biases[l].values[i]);
            }
            return delta;
        };

        std::vector<double> floor_update = first_update(false);
        std::vector<double> linear_update = first_update(true);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < floor_update.size(); ++i) {
            num += (floor_update[i] - linear_update[i]) * (floor_update[i] - linear_update[i]);
            den += linear_update[i] * linear_update[i];
        }
        ASSERT_GT(den, 0.0);
        EXPECT_LT(std::sqrt(num / den), 1e-6) << loss_kind_name(kind);
    }
}

TEST(Trainer, SweepSingleCell) {
    ExperimentConfig base = tiny_config();
    base.iterations = 3;
    base.eval_every = 3;
    SweepGrid grid;
    grid.losses = {LossKind::ns};
    grid.alphas = {1.0};
    grid.k_sns = {1.0};
    grid.seeds = {11};
    SweepResult res = sweep(base, grid);
    ASSERT_EQ(res.rows.size(), 1u);
    EXPECT_EQ(res.rows[0].status, "ok");
    ASSERT_EQ(res.cells.size(), 1u);
    EXPECT_EQ(res.cells[0].ok_runs, 1);
    EXPECT_EQ(res.cells[0].median_frechet, res.rows[0].frechet);
}

TEST(Trainer, SweepIsDeterministicAcrossCalls) {
    ExperimentConfig base = tiny_config();
    base.iterations = 3;
    base.eval_every = 3;
    SweepGrid grid;
    grid.losses = {LossKind::ns, LossKind::wgan};
    grid.alphas = {1.0, 1e-9};
    grid.k_sns = {1.0};
    grid.seeds = {1, 2};
    SweepResult a = sweep(base, grid);
    SweepResult b = sweep(base, grid);
    ASSERT_EQ(a.rows.size(), 8u);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_EQ(a.rows[i].frechet, b.rows[i].frechet);
        EXPECT_EQ(a.rows[i].status, b.rows[i].status);
    }
}

TEST(Trainer, SweepCsvHeaderIsPinned) {
    SweepResult res;
    SweepRow row;
    row.status = "ok";
    res.rows.push_back(row);
    std::ostringstream ss;
    write_sweep_csv(ss, res);
    std::string first = ss.str().substr(0, ss.str().find('\n'));
    EXPECT_EQ(first, "loss,alpha,k_sn,seed,frechet,coverage,hq_fraction,status");
}

TEST(Trainer, SweepContinuesPastFailingCell) {
    ExperimentConfig base = tiny_config();
    base.iterations = 3;
    base.eval_every = 3;
    base.reg.k_sn = 5.0;
    SweepGrid grid;
    grid.losses = {LossKind::exp, LossKind::wgan};
    grid.alphas = {1e10};  // overflows EXP instantly; WGAN shrugs it off
    grid.k_sns = {5.0};
    grid.seeds = {3};
    SweepResult res = sweep(base, grid);
    ASSERT_EQ(res.rows.size(), 2u);
    EXPECT_NE(res.rows[0].status, "ok");
    EXPECT_EQ(res.rows[1].status, "ok");
}

TEST(Trainer, ConfigJsonRoundTrip) {
    ExperimentConfig cfg = tiny_config();
    cfg.loss = {LossKind::cos, 1e-9};
    cfg.reg.kind = RegularizerSpec::Kind::gp;
    cfg.reg.gp = {10.0, 0.5};
    nlohmann::json j = config_to_json(cfg);
    ExperimentConfig back = config_from_json(j);
    EXPECT_EQ(config_to_json(back).dump(), j.dump());

    // and a second round through text
    nlohmann::json j2 = nlohmann::json::parse(j.dump());
    EXPECT_EQ(config_to_json(config_from_json(j2)).dump(), j.dump());
}

TEST(Trainer, ConfigValidationErrors) {
    ExperimentConfig cfg = tiny_config();
    cfg.batch = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.disc.widths.back() = 3;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.n_dis = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}
