#include <gtest/gtest.h>

#include <sstream>

#include "cplan/approx.hpp"

using namespace cplan;

namespace {

Matrix<double> random_batch(int rows, int cols, Rng& rng) {
    Matrix<double> x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng);
    return x;
}

Params<double> flat_copy(const Params<double>& p) { return p; }

std::vector<double> flatten(Params<double> p) {
    std::vector<double> out;
    p.for_each([&](double& v) { out.push_back(v); });
    return out;
}

}  // namespace

TEST(Forward, ZeroParametersGiveZeroOutput) {
    Rng rng(1);
    Mlp<double> net({3, 5, 2}, OutputActivation::Identity, rng);
    net.params().for_each([](double& v) { v = 0.0; });
    Rng r2(2);
    const auto y = net.forward(random_batch(4, 3, r2));
    EXPECT_EQ(y, Matrix<double>::Zero(4, 2));
}

TEST(Forward, IdentityLinearLayer) {
    Params<double> p;
    p.layers.push_back({Matrix<double>::Identity(3, 3), RowVector<double>::Zero(3)});
    const Mlp<double> net(p, OutputActivation::Identity);
    Rng rng(3);
    const auto x = random_batch(5, 3, rng);
    EXPECT_EQ(net.forward(x), x);
}

TEST(Forward, RowsAreIndependent) {
    Rng rng(4);
    Mlp<double> net({4, 8, 8, 3}, OutputActivation::Tanh, rng);
    const auto x1 = random_batch(2, 4, rng), x2 = random_batch(3, 4, rng);
    Matrix<double> both(5, 4);
    both << x1, x2;
    const auto y = net.forward(both);
    EXPECT_TRUE(y.topRows(2).isApprox(net.forward(x1), 1e-14));
    EXPECT_TRUE(y.bottomRows(3).isApprox(net.forward(x2), 1e-14));
}

TEST(Forward, WidthMismatchThrows) {
    Rng rng(5);
    Mlp<double> net({4, 8, 1}, OutputActivation::Identity, rng);
    EXPECT_THROW(net.forward(Matrix<double>::Zero(2, 3)), ShapeError);
}

TEST(Forward, OutputActivations) {
    Params<double> p;
    p.layers.push_back({Matrix<double>::Identity(1, 1), RowVector<double>::Zero(1)});
    Matrix<double> x(1, 1);
    x << 0.7;
    EXPECT_NEAR(Mlp<double>(p, OutputActivation::Logistic).forward(x)(0, 0), 1.0 / (1.0 + std::exp(-0.7)), 1e-15);
    EXPECT_NEAR(Mlp<double>(p, OutputActivation::Tanh).forward(x)(0, 0), std::tanh(0.7), 1e-15);
}

TEST(Init, GlorotBoundsAndZeroBias) {
    Rng rng(6);
    Mlp<double> net({10, 30, 5}, OutputActivation::Identity, rng);
    const double b0 = std::sqrt(6.0 / 40.0), b1 = std::sqrt(6.0 / 35.0);
    EXPECT_LE(net.params().layers[0].weight.cwiseAbs().maxCoeff(), b0);
    EXPECT_LE(net.params().layers[1].weight.cwiseAbs().maxCoeff(), b1);
    EXPECT_EQ(net.params().layers[0].bias.squaredNorm(), 0.0);
    EXPECT_EQ(net.params().count(), 10u * 30 + 30 + 30 * 5 + 5);
}

TEST(Grad, ConstantLossGivesZeroGradient) {
    Rng rng(7);
    Mlp<double> net({3, 6, 2}, OutputActivation::Identity, rng);
    LossFn<double> loss = [](const Matrix<double>& y) { return std::make_pair(4.2, Matrix<double>(Matrix<double>::Zero(y.rows(), y.cols()))); };
    const auto g = grad(net, loss, random_batch(5, 3, rng));
    EXPECT_EQ(g.squared_norm(), 0.0);
}

TEST(Grad, LinearLayerOuterProduct) {
    Rng rng(8);
    Mlp<double> net({3, 2}, OutputActivation::Identity, rng);
    Matrix<double> x(1, 3);
    x << 1.0, -2.0, 0.5;
    Matrix<double> c(1, 2);
    c << 0.3, -1.1;
    LossFn<double> loss = [&](const Matrix<double>& y) { return std::make_pair(c.cwiseProduct(y).sum(), c); };
    const auto g = grad(net, loss, x);
    const Matrix<double> expect = x.transpose() * c;  // input (x) c
    EXPECT_TRUE(g.layers[0].weight.isApprox(expect, 1e-15));
    EXPECT_TRUE(g.layers[0].bias.isApprox(c, 1e-15));
}

TEST(Grad, ReluDerivativeAtZeroIsZero) {
    // Hidden pre-activation exactly zero: nothing flows through it.
    Params<double> p;
    p.layers.push_back({Matrix<double>::Zero(1, 1), RowVector<double>::Zero(1)});
    p.layers.push_back({Matrix<double>::Ones(1, 1), RowVector<double>::Zero(1)});
    const Mlp<double> net(p, OutputActivation::Identity);
    Matrix<double> x(1, 1);
    x << 2.0;
    LossFn<double> loss = [](const Matrix<double>& y) { return std::make_pair(y.sum(), Matrix<double>(Matrix<double>::Ones(1, 1))); };
    const auto g = grad(net, loss, x);
    EXPECT_EQ(g.layers[0].weight(0, 0), 0.0);
    EXPECT_EQ(g.layers[0].bias(0), 0.0);
}

TEST(GradientCheck, TwentyRandomNetsAgreeWithFiniteDifferences) {
    Rng rng(9);
    const OutputActivation acts[3] = {OutputActivation::Identity, OutputActivation::Logistic, OutputActivation::Tanh};
    for (int trial = 0; trial < 20; ++trial) {
        const int in = 2 + static_cast<int>(uniform_index(rng, 5));
        const int h1 = 3 + static_cast<int>(uniform_index(rng, 8));
        const int h2 = 3 + static_cast<int>(uniform_index(rng, 8));
        const int out = 1 + static_cast<int>(uniform_index(rng, 4));
        Mlp<double> net({in, h1, h2, out}, acts[trial % 3], rng);
        // Nonzero biases so that kinks are not aligned with the origin.
        net.params().for_each([&](double& v) { v += 0.1 * standard_normal(rng); });
        const auto res = gradient_check(net, random_batch(6, in, rng), 100 + trial);
        EXPECT_LT(res.max_relative_error, 1e-4) << "trial " << trial;
        EXPECT_GT(res.checked, res.skipped_kinks);
    }
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    Rng rng(10);
    Mlp<double> net({3, 4, 2}, OutputActivation::Identity, rng);
    const auto before = flatten(net.params());
    auto st = AdamState<double>::for_params(net.params());
    adam_step(net.params(), Params<double>::zeros_like(net.params()), st, AdamConfig{1e-3});
    EXPECT_EQ(flatten(net.params()), before);
    EXPECT_EQ(st.step, 1);
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
    Rng rng(11);
    Mlp<double> net({3, 4, 2}, OutputActivation::Identity, rng);
    const auto before = flatten(net.params());
    Params<double> g = Params<double>::zeros_like(net.params());
    g.for_each([&](double& v) { v = standard_normal(rng); });
    auto st = AdamState<double>::for_params(net.params());
    const double lr = 1e-3;
    adam_step(net.params(), g, st, AdamConfig{lr});
    const auto after = flatten(net.params());
    const auto gs = flatten(g);
    for (std::size_t i = 0; i < gs.size(); ++i) {
        const double expected = -lr * (gs[i] > 0 ? 1.0 : -1.0);
        EXPECT_NEAR(after[i] - before[i], expected, lr * 1e-6);
    }
}

// Hand-rolled trace for one coordinate with fixed gradient g = 0.5, lr = 0.1:
//   m1 = 0.05,   v1 = 0.00025,      mhat1 = 0.5, vhat1 = 0.25  -> step 0.1 * 0.5 / (0.5 + 1e-8)
//   m2 = 0.095,  v2 = 0.00049975,   mhat2 = 0.5, vhat2 = 0.25  -> same step
TEST(Adam, TwoStepTraceMatchesHandComputation) {
    Params<double> p;
    p.layers.push_back({Matrix<double>::Constant(1, 1, 1.0), RowVector<double>::Zero(1)});
    Params<double> g = Params<double>::zeros_like(p);
    g.layers[0].weight(0, 0) = 0.5;
    auto st = AdamState<double>::for_params(p);
    const AdamConfig cfg{0.1};
    adam_step(p, g, st, cfg);
    EXPECT_NEAR(st.m.layers[0].weight(0, 0), 0.05, 1e-16);
    EXPECT_NEAR(st.v.layers[0].weight(0, 0), 0.00025, 1e-18);
    const double step = 0.1 * 0.5 / (0.5 + 1e-8);
    EXPECT_NEAR(p.layers[0].weight(0, 0), 1.0 - step, 1e-14);
    adam_step(p, g, st, cfg);
    EXPECT_NEAR(st.m.layers[0].weight(0, 0), 0.095, 1e-16);
    EXPECT_NEAR(st.v.layers[0].weight(0, 0), 0.00049975, 1e-18);
    EXPECT_NEAR(p.layers[0].weight(0, 0), 1.0 - 2 * step, 1e-14);
    EXPECT_EQ(st.step, 2);
}

TEST(Adam, ShapeMismatchThrows) {
    Rng rng(12);
    Mlp<double> a({3, 4, 2}, OutputActivation::Identity, rng), b({3, 5, 2}, OutputActivation::Identity, rng);
    auto st = AdamState<double>::for_params(a.params());
    EXPECT_THROW(adam_step(a.params(), b.params(), st, AdamConfig{}), ShapeError);
}

// Regression on a fixed batch: the loss decreases at every one of the first 50
// steps for nearly all initializations.
TEST(Adam, RegressionLossDecreasesMonotonically) {
    int monotone = 0;
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(1000 + seed);
        Mlp<double> net({3, 16, 16, 1}, OutputActivation::Identity, rng);
        const auto x = random_batch(32, 3, rng);
        Matrix<double> y(32, 1);
        for (int i = 0; i < 32; ++i) y(i, 0) = std::sin(x(i, 0)) + 0.5 * x(i, 1) * x(i, 2);
        LossFn<double> loss = [&](const Matrix<double>& out) {
            const Matrix<double> r = out - y;
            return std::make_pair(0.5 * r.squaredNorm() / 32.0, Matrix<double>(r / 32.0));
        };
        auto st = AdamState<double>::for_params(net.params());
        double prev = loss(net.forward(x)).first;
        bool ok = true;
        for (int k = 0; k < 50; ++k) {
            adam_step(net.params(), grad(net, loss, x), st, AdamConfig{1e-3});
            const double cur = loss(net.forward(x)).first;
            ok = ok && cur < prev;
            prev = cur;
        }
        monotone += ok ? 1 : 0;
    }
    EXPECT_GE(monotone, 19);
}

TEST(Determinism, ForwardGradAdamBitIdentical) {
    auto run = [] {
        Rng rng(77);
        Mlp<double> net({4, 8, 2}, OutputActivation::Tanh, rng);
        const auto x = random_batch(6, 4, rng);
        LossFn<double> loss = [](const Matrix<double>& y) { return std::make_pair(y.sum(), Matrix<double>(Matrix<double>::Ones(y.rows(), y.cols()))); };
        auto st = AdamState<double>::for_params(net.params());
        for (int k = 0; k < 5; ++k) adam_step(net.params(), grad(net, loss, x), st, AdamConfig{});
        return flatten(net.params());
    };
    EXPECT_EQ(run(), run());
}

TEST(SoftUpdate, InterpolatesTowardOnline) {
    Rng rng(13);
    Mlp<double> a({2, 3, 1}, OutputActivation::Identity, rng), b({2, 3, 1}, OutputActivation::Identity, rng);
    const auto ta = flatten(a.params()), tb = flatten(b.params());
    soft_update(a.params(), b.params(), 0.25);
    const auto r = flatten(a.params());
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(r[i], 0.75 * ta[i] + 0.25 * tb[i], 1e-15);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    Rng rng(14);
    Mlp<double> net({5, 7, 3}, OutputActivation::Logistic, rng);
    net.params().for_each([&](double& v) { v += 1e-3 * standard_normal(rng); });
    std::stringstream ss;
    write_mlp(ss, net);
    const auto back = read_mlp<double>(ss);
    EXPECT_EQ(back.layer_sizes(), net.layer_sizes());
    EXPECT_EQ(back.output_activation(), net.output_activation());
    EXPECT_EQ(flatten(flat_copy(back.params())), flatten(flat_copy(net.params())));
}

TEST(Checkpoint, FloatRoundTripIsBitExact) {
    Rng rng(15);
    Mlp<float> net({3, 4, 2}, OutputActivation::Identity, rng);
    const std::string path = ::testing::TempDir() + "/cplan_mlp_float.txt";
    save_mlp(path, net);
    const auto back = load_mlp<float>(path);
    for (std::size_t i = 0; i < net.params().layers.size(); ++i) {
        EXPECT_EQ(back.params().layers[i].weight, net.params().layers[i].weight);
        EXPECT_EQ(back.params().layers[i].bias, net.params().layers[i].bias);
    }
}

TEST(Checkpoint, MalformedInputRejected) {
    std::stringstream bad1("not-a-net 1\n");
    EXPECT_THROW(read_mlp<double>(bad1), ParseError);
    std::stringstream bad2("cplan-mlp 1\noutput identity\nlayers 1\nlayer 2 1\n0x1p+0\n");
    EXPECT_THROW(read_mlp<double>(bad2), ParseError);
    std::stringstream bad3("cplan-mlp 1\noutput swish\nlayers 0\n");
    EXPECT_THROW(read_mlp<double>(bad3), ParseError);
    EXPECT_THROW(load_mlp<double>("/nonexistent/dir/net.txt"), UsageError);
}
