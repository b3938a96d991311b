#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lipgan/autodiff.hpp"
#include "lipgan/rng.hpp"

using namespace lipgan;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.5, double hi = 1.5) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.values) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST(Autodiff, SigmoidAtZero) {
    Tape tape;
    Var y = tape.sigmoid(tape.input(Tensor::scalar(0.0)));
    EXPECT_DOUBLE_EQ(y.value().item(), 0.5);
}

TEST(Autodiff, AffineIdentity) {
    Tape tape;
    Var x = tape.input(Tensor::matrix(1, 2, {1.0, 2.0}));
    Var w = tape.input(Tensor::identity(2));
    Var b = tape.input(Tensor::zeros({2}));
    Var y = tape.affine(x, w, b);
    EXPECT_DOUBLE_EQ(y.value().values[0], 1.0);
    EXPECT_DOUBLE_EQ(y.value().values[1], 2.0);
}

TEST(Autodiff, L2NormHandValue) {
    Tape tape;
    Var y = tape.l2norm(tape.input(Tensor::row({3.0, 4.0})));
    EXPECT_DOUBLE_EQ(y.value().item(), 5.0);  // sqrt(9 + 16)
}

TEST(Autodiff, SumOfSquaresGradient) {
    Tape tape;
    Var x = tape.input(Tensor::row({1.0, 2.0, 3.0}));
    Var y = tape.sum(tape.square(x));
    Tensor g = tape.backward(y, {x})[0];
    EXPECT_DOUBLE_EQ(g.values[0], 2.0);
    EXPECT_DOUBLE_EQ(g.values[1], 4.0);
    EXPECT_DOUBLE_EQ(g.values[2], 6.0);
}

TEST(Autodiff, NegLogSigmoidGradientAtZero) {
    Tape tape;
    Var x = tape.input(Tensor::scalar(0.0));
    Var y = tape.neg(tape.log(tape.sigmoid(x)));
    Tensor g = tape.backward(y, {x})[0];
    EXPECT_NEAR(g.values[0], -0.5, 1e-12);  // sigma(0) - 1
}

TEST(Autodiff, ConstantHasZeroGradient) {
    Tape tape;
    Var x = tape.input(Tensor::row({1.0, 2.0}));
    Var c = tape.sum(tape.input(Tensor::row({7.0, 8.0})));
    Tensor g = tape.backward(c, {x})[0];
    EXPECT_DOUBLE_EQ(g.values[0], 0.0);
    EXPECT_DOUBLE_EQ(g.values[1], 0.0);
}

TEST(Autodiff, FiniteDiffExpAtOne) {
    double err = finite_diff_check([](Tape& t, Var x) { return t.exp(x); }, Tensor::scalar(1.0), 1e-5);
    EXPECT_LT(err, 1e-6);
}

TEST(Autodiff, FiniteDiffZeroFunction) {
    double err = finite_diff_check([](Tape& t, Var x) { return t.sum(t.scale(x, 0.0)); },
                                   Tensor::row({0.3, -0.7}), 1e-5);
    EXPECT_DOUBLE_EQ(err, 0.0);
}

TEST(Autodiff, FiniteDiffTwoLayerTanhNetwork) {
    Rng rng(7);
    Tensor w1 = random_tensor({3, 4}, rng), b1 = random_tensor({4}, rng);
    Tensor w2 = random_tensor({4, 1}, rng), b2 = random_tensor({1}, rng);
    Tensor x0 = random_tensor({1, 3}, rng);
    // Gradient over every parameter of the composed network, brute force.
    double err = finite_diff_check_multi(
        [&](Tape& t, std::vector<Var>& p) {
            Var h = t.tanh(t.affine(p[4], p[0], p[1]));
            return t.sum(t.affine(h, p[2], p[3]));
        },
        {w1, b1, w2, b2, x0}, 1e-5);
    EXPECT_LT(err, 1e-5);
}

// Every primitive op agrees with central differences on random inputs.
TEST(Autodiff, AllOpsMatchFiniteDifferences) {
    Rng rng(11);
    struct Case {
        const char* name;
        std::function<Var(Tape&, Var)> fn;
        Tensor point;
    };
    Tensor vec = random_tensor({5}, rng);
    Tensor pos = random_tensor({5}, rng, 0.2, 2.0);
    Tensor mat = random_tensor({3, 4}, rng);
    Tensor other = random_tensor({5}, rng, 0.3, 1.7);
    std::vector<Case> cases;
    auto with_other = [&](auto op) {
        return [op, other](Tape& t, Var x) {
            Var o = t.input(other);
            return t.sum(op(t, x, o));
        };
    };
    cases.push_back({"add", with_other([](Tape& t, Var a, Var b) { return t.add(a, b); }), vec});
    cases.push_back({"sub", with_other([](Tape& t, Var a, Var b) { return t.sub(a, b); }), vec});
    cases.push_back({"mul", with_other([](Tape& t, Var a, Var b) { return t.mul(a, b); }), vec});
    cases.push_back({"div", with_other([](Tape& t, Var a, Var b) { return t.div(a, b); }), vec});
    cases.push_back({"neg", [](Tape& t, Var x) { return t.sum(t.neg(x)); }, vec});
    cases.push_back({"scale", [](Tape& t, Var x) { return t.sum(t.scale(x, -2.5)); }, vec});
    cases.push_back({"add_const", [](Tape& t, Var x) { return t.sum(t.add_const(x, 0.7)); }, vec});
    cases.push_back({"exp", [](Tape& t, Var x) { return t.sum(t.exp(x)); }, vec});
    cases.push_back({"log", [](Tape& t, Var x) { return t.sum(t.log(x)); }, pos});
    cases.push_back({"sin", [](Tape& t, Var x) { return t.sum(t.sin(x)); }, vec});
    cases.push_back({"cos", [](Tape& t, Var x) { return t.sum(t.cos(x)); }, vec});
    cases.push_back({"tanh", [](Tape& t, Var x) { return t.sum(t.tanh(x)); }, vec});
    cases.push_back({"sigmoid", [](Tape& t, Var x) { return t.sum(t.sigmoid(x)); }, vec});
    cases.push_back({"softplus", [](Tape& t, Var x) { return t.sum(t.softplus(x)); }, vec});
    cases.push_back({"sqrt", [](Tape& t, Var x) { return t.sum(t.sqrt(x)); }, pos});
    cases.push_back({"square", [](Tape& t, Var x) { return t.sum(t.square(x)); }, vec});
    cases.push_back({"leaky_relu", [](Tape& t, Var x) { return t.sum(t.leaky_relu(x, 0.2)); }, pos});
    cases.push_back({"mean", [](Tape& t, Var x) { return t.mean(x); }, vec});
    cases.push_back({"l2norm", [](Tape& t, Var x) { return t.l2norm(x); }, pos});
    cases.push_back({"colsum", [](Tape& t, Var x) { return t.sum(t.square(t.colsum(x))); }, mat});
    cases.push_back({"rowsum", [](Tape& t, Var x) { return t.sum(t.square(t.rowsum(x))); }, mat});
    cases.push_back({"row_l2norm", [](Tape& t, Var x) { return t.sum(t.row_l2norm(x)); }, mat});
    cases.push_back({"broadcast_col",
                     [](Tape& t, Var x) { return t.sum(t.square(t.broadcast_col(x, 3))); }, vec});
    cases.push_back({"broadcast_row",
                     [](Tape& t, Var x) { return t.sum(t.square(t.broadcast_row(x, 3))); }, vec});
    cases.push_back({"broadcast_full", [](Tape& t, Var x) {
                         return t.sum(t.square(t.broadcast_full(t.sum(x), {2, 3})));
                     },
                     vec});
    for (const auto& c : cases) {
        double err = finite_diff_check(c.fn, c.point, 1e-5);
        EXPECT_LT(err, 1e-5) << c.name;
    }
}

TEST(Autodiff, MatmulAllTransposeFlagsMatchFiniteDifferences) {
    Rng rng(13);
    for (bool ta : {false, true}) {
        for (bool tb : {false, true}) {
            Tensor a = random_tensor(ta ? Shape{4, 3} : Shape{3, 4}, rng);
            Tensor b = random_tensor(tb ? Shape{5, 4} : Shape{4, 5}, rng);
            double err_a = finite_diff_check_multi(
                [&](Tape& t, std::vector<Var>& p) { return t.sum(t.square(t.matmul(p[0], p[1], ta, tb))); },
                {a, b}, 1e-5);
            EXPECT_LT(err_a, 1e-5) << "ta=" << ta << " tb=" << tb;
        }
    }
}

TEST(Autodiff, AffineMatchesFiniteDifferencesOnBatch) {
    Rng rng(17);
    Tensor x = random_tensor({6, 3}, rng);
    Tensor w = random_tensor({3, 2}, rng);
    Tensor b = random_tensor({2}, rng);
    double err = finite_diff_check_multi(
        [&](Tape& t, std::vector<Var>& p) { return t.sum(t.square(t.affine(p[0], p[1], p[2]))); }, {x, w, b},
        1e-5);
    EXPECT_LT(err, 1e-5);
}

// Double backward: d/dtheta of the input-gradient norm of a small network
// must match finite differences of that norm over theta.
TEST(Autodiff, DoubleBackwardGradientNormMatchesFiniteDifferences) {
    Rng rng(23);
    Tensor w1 = random_tensor({3, 4}, rng), b1 = random_tensor({4}, rng);
    Tensor w2 = random_tensor({4, 1}, rng), b2 = random_tensor({1}, rng);
    Tensor x0 = random_tensor({2, 3}, rng);

    auto grad_norm = [&](Tape& tape, std::vector<Var>& p) {
        Var x = tape.input(x0);
        Var h = tape.tanh(tape.affine(x, p[0], p[1]));
        Var out = tape.sum(tape.affine(h, p[2], p[3]));
        Var gx = tape.backward_differentiable(out, {x})[0];
        return tape.l2norm(gx);
    };

    std::vector<Tensor> params = {w1, b1, w2, b2};
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> p;
        for (const Tensor& t : params) p.push_back(tape.input(t));
        Var g = grad_norm(tape, p);
        analytic = tape.backward(g, std::span<const Var>(p));
    }
    auto eval = [&](const std::vector<Tensor>& ps) {
        Tape tape;
        std::vector<Var> p;
        for (const Tensor& t : ps) p.push_back(tape.input(t));
        return grad_norm(tape, p).value().item();
    };
    const double h = 1e-5;
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i = 0; i < params[t].size(); ++i) {
            std::vector<Tensor> hi = params, lo = params;
            hi[t].values[i] += h;
            lo[t].values[i] -= h;
            double num = (eval(hi) - eval(lo)) / (2.0 * h);
            double err = std::abs(analytic[t].values[i] - num) / (std::abs(analytic[t].values[i]) + 1e-12);
            EXPECT_LT(err, 1e-4) << "tensor " << t << " coord " << i;
        }
    }
}

TEST(Autodiff, DoubleBackwardWithLeakyReluAwayFromKinks) {
    Rng rng(29);
    Tensor w1 = random_tensor({2, 4}, rng), b1 = random_tensor({4}, rng);
    Tensor w2 = random_tensor({4, 1}, rng), b2 = random_tensor({1}, rng);
    Tensor x0 = random_tensor({1, 2}, rng);

    auto grad_norm = [&](Tape& tape, std::vector<Var>& p) {
        Var x = tape.input(x0);
        Var h = tape.leaky_relu(tape.affine(x, p[0], p[1]), 0.2);
        Var out = tape.sum(tape.affine(h, p[2], p[3]));
        Var gx = tape.backward_differentiable(out, {x})[0];
        return tape.l2norm(gx);
    };
    std::vector<Tensor> params = {w1, b1, w2, b2};
    double err = finite_diff_check_multi(
        [&](Tape& t, std::vector<Var>& p) { return grad_norm(t, p); }, params, 1e-5);
    EXPECT_LT(err, 1e-4);
}

TEST(Autodiff, ReplayDeterminism) {
    Rng rng(31);
    Tape tape;
    Var x = tape.input(random_tensor({4, 3}, rng));
    Var w = tape.input(random_tensor({3, 2}, rng));
    Var b = tape.input(random_tensor({2}, rng));
    Var y = tape.mean(tape.softplus(tape.affine(x, w, b)));
    std::vector<Var> wrt = {x, w, b};
    auto g1 = tape.backward(y, std::span<const Var>(wrt));
    auto g2 = tape.backward(y, std::span<const Var>(wrt));
    for (std::size_t t = 0; t < wrt.size(); ++t) {
        ASSERT_EQ(g1[t].values.size(), g2[t].values.size());
        for (std::size_t i = 0; i < g1[t].values.size(); ++i) {
            EXPECT_EQ(g1[t].values[i], g2[t].values[i]);  // bit-identical
        }
    }
}

TEST(Autodiff, ThirdOrderRequestRejected) {
    Tape tape;
    Var x = tape.input(Tensor::row({0.5, -0.25}));
    Var y = tape.sum(tape.square(x));
    Var gx = tape.backward_differentiable(y, {x})[0];
    Var gn = tape.l2norm(gx);
    EXPECT_THROW(tape.backward_differentiable(gn, {x}), UsageError);
}

TEST(Autodiff, DifferentiableBackwardMatchesPlainBackward) {
    Rng rng(37);
    Tape tape;
    Var x = tape.input(random_tensor({3, 2}, rng));
    Var w = tape.input(random_tensor({2, 2}, rng));
    Var y = tape.mean(tape.tanh(tape.matmul(x, w)));
    Tensor plain = tape.backward(y, {w})[0];
    Var emitted = tape.backward_differentiable(y, {w})[0];
    for (std::size_t i = 0; i < plain.size(); ++i)
        EXPECT_NEAR(plain.values[i], emitted.value().values[i], 1e-15);
}

TEST(Autodiff, ErrorPaths) {
    Tape tape;
    Var a = tape.input(Tensor::row({1.0, 2.0}));
    Var b = tape.input(Tensor::row({1.0, 2.0, 3.0}));
    EXPECT_THROW(tape.add(a, b), ConfigError);
    EXPECT_THROW(tape.log(tape.input(Tensor::scalar(0.0))), DomainError);
    EXPECT_THROW(tape.log(tape.input(Tensor::scalar(-1.0))), DomainError);
    EXPECT_THROW(tape.backward(a, {a}), UsageError);  // non-scalar output

    Tape other;
    Var foreign = other.input(Tensor::scalar(1.0));
    Var s = tape.sum(a);
    EXPECT_THROW(tape.backward(s, {foreign}), UsageError);

    EXPECT_THROW(tape.matmul(a, b), ConfigError);  // rank-1 operands
}

TEST(Autodiff, ForwardValuesStayFiniteOnFiniteInputs) {
    Rng rng(41);
    Tape tape;
    Var x = tape.input(random_tensor({8, 4}, rng, -30.0, 30.0));
    for (Var v : {tape.softplus(x), tape.sigmoid(x), tape.tanh(x), tape.leaky_relu(x, 0.1)})
        EXPECT_TRUE(v.value().all_finite());
}
