#include <gtest/gtest.h>

#include <cmath>

#include "lipgan/losses.hpp"
#include "lipgan/rng.hpp"

using namespace lipgan;

namespace {

const LossKind kAllKinds[] = {LossKind::ns,   LossKind::ls,  LossKind::ls_sharp,
                              LossKind::wgan, LossKind::cos, LossKind::exp};
const LossTerm kAllTerms[] = {LossTerm::real, LossTerm::fake, LossTerm::gen};

double disc_loss_value(const LossSpec& spec, const Tensor& fr, const Tensor& ff) {
    Tape tape;
    return disc_loss(tape, spec, tape.input(fr), tape.input(ff)).value().item();
}

double gen_loss_value(const LossSpec& spec, const Tensor& ff) {
    Tape tape;
    return gen_loss(tape, spec, tape.input(ff)).value().item();
}

}  // namespace

TEST(Losses, DiscLossHandValues) {
    EXPECT_NEAR(disc_loss_value({LossKind::wgan, 1.0}, Tensor::row({1.0, 1.0}), Tensor::row({1.0, 1.0})), 0.0,
                1e-15);
    // sigma(0)=0.5 in both terms: -log(0.5)-log(0.5) = 2 log 2
    EXPECT_NEAR(disc_loss_value({LossKind::ns, 1.0}, Tensor::row({0.0}), Tensor::row({0.0})),
                1.3862943611198906, 1e-12);
    EXPECT_NEAR(disc_loss_value({LossKind::ls_sharp, 1.0}, Tensor::row({1.0}), Tensor::row({-1.0})), 0.0, 1e-15);
}

TEST(Losses, GenLossHandValues) {
    EXPECT_NEAR(gen_loss_value({LossKind::wgan, 1.0}, Tensor::row({2.0, 4.0})), 3.0, 1e-15);
    EXPECT_NEAR(gen_loss_value({LossKind::cos, 1.0}, Tensor::row({1.0})), -1.0, 1e-15);
    EXPECT_NEAR(gen_loss_value({LossKind::ns, 1.0}, Tensor::row({0.0})), 0.6931471805599453, 1e-12);
}

TEST(Losses, EmptyBatchRejected) {
    Tape tape;
    Var empty = tape.input(Tensor({0}, {}));
    EXPECT_THROW(gen_loss(tape, {LossKind::ns, 1.0}, empty), UsageError);
}

TEST(Losses, AlphaValidation) {
    LossSpec bad{LossKind::ns, 0.0};
    EXPECT_THROW(bad.validate(), ConfigError);
    bad.alpha = 1e-26;  // below the documented floor
    EXPECT_THROW(bad.validate(), ConfigError);
    LossSpec ok{LossKind::ns, 1e-25};
    EXPECT_NO_THROW(ok.validate());
}

TEST(Losses, PointwiseGradTableValues) {
    // LS fake term gradient is 2t.
    EXPECT_NEAR(pointwise_grad({LossKind::ls, 1.0}, LossTerm::fake, 0.478), 0.956, 1e-12);
    EXPECT_NEAR(pointwise_grad({LossKind::ls, 1.0}, LossTerm::fake, 0.522), 1.044, 1e-12);
    // NS real term gradient stays in [-0.502, -0.498] across [-0.006, 0.006].
    for (double w : {-0.006, -0.003, 0.0, 0.003, 0.006}) {
        double g = pointwise_grad({LossKind::ns, 1.0}, LossTerm::real, w);
        EXPECT_GE(g, -0.502);
        EXPECT_LE(g, -0.498);
    }
    // WGAN has constant unit gradients.
    for (double w : {-100.0, 0.0, 3.5}) {
        EXPECT_DOUBLE_EQ(pointwise_grad({LossKind::wgan, 1.0}, LossTerm::real, w), 1.0);
        EXPECT_DOUBLE_EQ(pointwise_grad({LossKind::wgan, 1.0}, LossTerm::fake, w), -1.0);
        EXPECT_DOUBLE_EQ(pointwise_grad({LossKind::wgan, 1.0}, LossTerm::gen, w), 1.0);
    }
}

TEST(Losses, ScalingChainRuleIsExact) {
    Rng rng(3);
    for (LossKind kind : kAllKinds)
        for (LossTerm term : kAllTerms)
            for (double alpha : {1e-9, 1e-3, 1.0, 10.0, 1e3}) {
                for (int i = 0; i < 20; ++i) {
                    double w = rng.uniform(-5.0, 5.0);
                    LossSpec scaled{kind, alpha};
                    LossSpec unit{kind, 1.0};
                    EXPECT_EQ(pointwise_grad(scaled, term, w), pointwise_grad(unit, term, alpha * w))
                        << loss_kind_name(kind);
                }
            }
}

// Backward of the batched loss w.r.t. the scores equals the closed-form
// pointwise gradient divided by the batch size.
TEST(Losses, TapeGradientMatchesClosedForm) {
    Rng rng(5);
    for (LossKind kind : kAllKinds)
        for (double alpha : {1e-6, 1.0, 100.0}) {
            LossSpec spec{kind, alpha};
            Tensor fr = Tensor::zeros({5});
            Tensor ff = Tensor::zeros({5});
            for (double& v : fr.values) v = rng.uniform(-2.0, 2.0);
            for (double& v : ff.values) v = rng.uniform(-2.0, 2.0);
            Tape tape;
            Var vr = tape.input(fr), vf = tape.input(ff);
            Var loss = disc_loss(tape, spec, vr, vf);
            auto grads = tape.backward(loss, {vr, vf});
            for (std::size_t i = 0; i < 5; ++i) {
                double expect_r = pointwise_grad(spec, LossTerm::real, fr.values[i]) / 5.0;
                double expect_f = pointwise_grad(spec, LossTerm::fake, ff.values[i]) / 5.0;
                EXPECT_LT(std::abs(grads[0].values[i] - expect_r) / (std::abs(expect_r) + 1e-300), 1e-10)
                    << loss_kind_name(kind) << " real";
                EXPECT_LT(std::abs(grads[1].values[i] - expect_f) / (std::abs(expect_f) + 1e-300), 1e-10)
                    << loss_kind_name(kind) << " fake";
            }

            Tape gtape;
            Var gf = gtape.input(ff);
            Var gl = gen_loss(gtape, spec, gf);
            Tensor gg = gtape.backward(gl, {gf})[0];
            for (std::size_t i = 0; i < 5; ++i) {
                double expect_g = pointwise_grad(spec, LossTerm::gen, ff.values[i]) / 5.0;
                EXPECT_LT(std::abs(gg.values[i] - expect_g) / (std::abs(expect_g) + 1e-300), 1e-10);
            }
        }
}

TEST(Losses, SecondDerivativeMaxHandValues) {
    EXPECT_DOUBLE_EQ(second_derivative_max({LossKind::wgan, 1.0}, LossTerm::real, -50.0, 50.0), 0.0);
    // sigma(1-sigma) peaks at 0.25 when the interval straddles zero
    EXPECT_DOUBLE_EQ(second_derivative_max({LossKind::ns, 1.0}, LossTerm::real, -10.0, 10.0), 0.25);
    EXPECT_NEAR(second_derivative_max({LossKind::exp, 1.0}, LossTerm::real, 0.0, 1.0), std::exp(1.0), 1e-12);
}

TEST(Losses, SecondDerivativeMaxMatchesGridScan) {
    Rng rng(7);
    for (LossKind kind : kAllKinds)
        for (LossTerm term : kAllTerms)
            for (double alpha : {0.1, 1.0, 3.0})
                for (int rep = 0; rep < 4; ++rep) {
                    double a = rng.uniform(-4.0, 4.0);
                    double b = a + rng.uniform(0.0, 5.0);
                    LossSpec spec{kind, alpha};
                    double closed = second_derivative_max(spec, term, a, b);
                    double scanned = second_derivative_max_scan(spec, term, a, b);
                    EXPECT_NEAR(scanned, closed, 1e-6 * std::max(1.0, closed))
                        << loss_kind_name(kind) << " alpha=" << alpha;
                }
}

TEST(Losses, SecondDerivativeMaxRejectsInvertedInterval) {
    EXPECT_THROW(second_derivative_max({LossKind::ns, 1.0}, LossTerm::real, 1.0, 0.0), UsageError);
    EXPECT_THROW(linearity_deviation({LossKind::ns, 1.0}, LossTerm::real, 1.0, 0.0), UsageError);
}

TEST(Losses, DegenerateLimitValues) {
    EXPECT_DOUBLE_EQ(degenerate_limit_grad(LossKind::ns, LossTerm::real), -0.5);
    EXPECT_DOUBLE_EQ(degenerate_limit_grad(LossKind::exp, LossTerm::real), 1.0);
    EXPECT_NEAR(degenerate_limit_grad(LossKind::cos, LossTerm::gen), std::sin(-1.0), 1e-15);
}

// At alpha = 1e-25 the pointwise gradient matches the degenerate limit for
// every loss and |omega| up to 1e3.
TEST(Losses, FloorAlphaAgreesWithDegenerateLimit) {
    for (LossKind kind : kAllKinds)
        for (LossTerm term : kAllTerms)
            for (double w : {-1e3, -1.0, 0.0, 0.5, 1e3}) {
                LossSpec spec{kind, 1e-25};
                EXPECT_NEAR(pointwise_grad(spec, term, w), degenerate_limit_grad(kind, term), 1e-9);
            }
}

TEST(Losses, AttainedIntervalBoundedByCurvature) {
    Rng rng(11);
    for (LossKind kind : kAllKinds)
        for (double alpha : {0.5, 1.0, 2.0}) {
            LossSpec spec{kind, alpha};
            Tensor scores = Tensor::zeros({32});
            for (double& v : scores.values) v = rng.uniform(-3.0, 3.0);
            double lo = *std::min_element(scores.values.begin(), scores.values.end());
            double hi = *std::max_element(scores.values.begin(), scores.values.end());
            double gmin = 0.0, gmax = 0.0;
            bool first = true;
            for (double s : scores.values) {
                double g = pointwise_grad(spec, LossTerm::real, s);
                gmin = first ? g : std::min(gmin, g);
                gmax = first ? g : std::max(gmax, g);
                first = false;
            }
            double m = second_derivative_max(spec, LossTerm::real, lo, hi);
            EXPECT_LE(gmax - gmin, m * (hi - lo) + 1e-9) << loss_kind_name(kind);
        }
}

TEST(Losses, LinearityDeviationHandValues) {
    // WGAN is exactly linear.
    EXPECT_DOUBLE_EQ(linearity_deviation({LossKind::wgan, 1.0}, LossTerm::real, -3.0, 7.0), 0.0);
    // NS over the k_SN=0.25 domain is numerically linear.
    EXPECT_LT(linearity_deviation({LossKind::ns, 1.0}, LossTerm::real, -0.006, 0.006), 1e-4);
}

// The cubic illustration: x^3 - x straightens out as its domain shrinks.
TEST(Losses, CubicDeviationShrinksWithDomain) {
    auto cubic = [](double x) { return x * x * x - x; };
    auto slope = [](double x) { return 3.0 * x * x - 1.0; };
    double wide = linearity_deviation_fn(cubic, slope(0.5 * (0.1 + 0.8)), 0.1, 0.8);
    double narrow = linearity_deviation_fn(cubic, slope(0.5 * (0.2 + 0.25)), 0.2, 0.25);
    EXPECT_LT(narrow, wide);
}

TEST(Losses, LinearityDeviationMonotoneOnNestedIntervals) {
    Rng rng(13);
    for (LossKind kind : kAllKinds)
        for (LossTerm term : kAllTerms)
            for (int rep = 0; rep < 3; ++rep) {
                double mid = rng.uniform(-1.5, 1.5);
                double prev = -1.0;
                for (double half : {2.0, 1.0, 0.5, 0.25, 0.1, 0.02}) {
                    double dev = linearity_deviation({kind, 1.0}, term, mid - half, mid + half);
                    if (prev >= 0.0) {
                        EXPECT_LE(dev, prev + 1e-12) << loss_kind_name(kind);
                    }
                    prev = dev;
                }
            }
}

TEST(Losses, GradientRangeOverHitsInteriorSineExtremes) {
    // real term of COS: L' = sin(t-1); over t-1 in [-3, 3] both extremes hit
    auto iv = gradient_range_over({LossKind::cos, 1.0}, LossTerm::real, -2.0, 4.0);
    EXPECT_DOUBLE_EQ(iv[0], -1.0);
    EXPECT_DOUBLE_EQ(iv[1], 1.0);
    // narrow monotone stretch: endpoints only
    auto narrow = gradient_range_over({LossKind::cos, 1.0}, LossTerm::real, 0.9, 1.1);
    EXPECT_NEAR(narrow[0], std::sin(-0.1), 1e-15);
    EXPECT_NEAR(narrow[1], std::sin(0.1), 1e-15);
}

// Loss values as printed in the zoo: spot-check the alpha transform itself.
TEST(Losses, AlphaTransformMatchesDefinition) {
    Rng rng(17);
    for (LossKind kind : kAllKinds)
        for (LossTerm term : kAllTerms)
            for (int rep = 0; rep < 10; ++rep) {
                double alpha = std::pow(10.0, rng.uniform(-6.0, 2.0));
                double w = rng.uniform(-2.0, 2.0);
                LossSpec spec{kind, alpha};
                LossSpec unit{kind, 1.0};
                EXPECT_NEAR(loss_value(spec, term, w), loss_value(unit, term, alpha * w) / alpha,
                            1e-9 * std::abs(loss_value(spec, term, w)) + 1e-300);
            }
}
