#include <gtest/gtest.h>

#include "cplan/buffer.hpp"
#include "cplan/clearning.hpp"
#include "cplan/env.hpp"
#include "cplan/oracle.hpp"
#include "gradcheck.hpp"

using namespace cplan;
using namespace cplan::gradcheck;

TEST(ClassifierLoss, ConstantHalfClassifierClosedForm) {
    const double gamma = 0.9, w = 2.0;
    Params<double> p;
    p.layers.push_back({Matrix<double>::Zero(6, 1), RowVector<double>::Zero(1)});
    const ClassifierNet<double> c(Mlp<double>(p, OutputActivation::Identity));
    ClassifierBatch<double> b{Matrix<double>::Ones(2, 6), {true, false}, Eigen::VectorXd::Constant(2, w)};
    const double ln2 = std::log(2.0);
    const double expected = 0.5 * ((1.0 - gamma) * ln2 + (gamma * w * ln2 + ln2));
    EXPECT_NEAR(classifier_loss(c, b, gamma), expected, 1e-12);
}

TEST(ClassifierLoss, OutputsStrictlyInsideUnitInterval) {
    Rng rng(1);
    ClassifierNet<double> c(6, {16}, rng);
    // Huge inputs push the raw logit far past the clamp.
    const Matrix<double> x = 1e6 * random_matrix(50, 6, rng);
    const Eigen::VectorXd p = c.probability(x);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        EXPECT_GT(p(i), 0.0);
        EXPECT_LT(p(i), 1.0);
    }
    EXPECT_TRUE(c.log_odds(x).allFinite());
    EXPECT_LE(c.log_odds(x).cwiseAbs().maxCoeff(), kLogitClamp);
}

TEST(ClassifierUpdate, LossDecreasesOnFixedBatch) {
    int improved = 0;
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed));
        ClassifierNet<double> c(6, {32, 32}, rng);
        auto adam = AdamState<double>::for_params(c.net().params());
        const auto batch = random_classifier_batch(6, 64, rng);
        const double before = classifier_loss(c, batch, 0.99);
        for (int k = 0; k < 100; ++k) classifier_update(c, adam, AdamConfig{1e-3}, batch, 0.99);
        improved += classifier_loss(c, batch, 0.99) < before ? 1 : 0;
    }
    EXPECT_GE(improved, 19);
}

// Both classifier roles: the analytic gradient matches central differences.
TEST(ClassifierGradient, MatchesFiniteDifferences) {
    for (int width : {6, 4})
        for (std::uint64_t seed = 0; seed < 5; ++seed) EXPECT_LT(classifier_gradient_error(width, 100 + seed), 1e-4) << width;
}

TEST(ActorGradient, MatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) EXPECT_LT(actor_gradient_error(200 + seed), 1e-4);
}

TEST(ActorGradient, ConstantClassifierLeavesOnlyEntropyTerm) {
    Rng rng(3);
    Policy<double> pi(4, {16}, rng);
    ClassifierNet<double> c(6, {16}, rng);
    // Zero the action columns of the first layer: the classifier ignores actions.
    c.net().params().layers[0].weight.middleRows(2, 2).setZero();
    const Matrix<double> x = random_matrix(32, 4, rng);
    Matrix<double> noise(32, 2);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = standard_normal(rng);
    auto build = [&](const Matrix<double>& a) { return Agent<double>::with_actions(x, a); };
    const auto without_entropy = actor_gradient(pi, c, x, noise, build, 2, 0.0).second;
    EXPECT_LT(without_entropy.norm(), 1e-12);
    const auto entropy_only = actor_gradient(pi, c, x, noise, build, 2, 0.1).second;
    EXPECT_GT(entropy_only.norm(), 0.0);
}

TEST(ActorUpdate, BanditPrefersFavouredAction) {
    Rng rng(4);
    // log-odds = 4 * a_x: action A (a_x > 0) has higher odds than action B (a_x < 0).
    Params<double> cp;
    Matrix<double> w = Matrix<double>::Zero(6, 1);
    w(2, 0) = 4.0;
    cp.layers.push_back({w, RowVector<double>::Zero(1)});
    const ClassifierNet<double> c(Mlp<double>(cp, OutputActivation::Identity));
    Policy<double> pi(4, {32}, rng);
    auto adam = AdamState<double>::for_params(pi.net().params());
    const Matrix<double> x = random_matrix(64, 4, rng);
    auto build = [&](const Matrix<double>& a) { return Agent<double>::with_actions(x, a); };
    for (int k = 0; k < 500; ++k) {
        Matrix<double> noise(64, 2);
        for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = standard_normal(rng);
        auto [stats, g] = actor_gradient(pi, c, x, noise, build, 2, 0.1);
        adam_step(pi.net().params(), g, adam, AdamConfig{3e-3});
    }
    int favoured = 0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) favoured += pi.sample(x.row(i % 64), rng)(0, 0) > 0.0 ? 1 : 0;
    EXPECT_GT(favoured / static_cast<double>(n), 0.9);
}

TEST(Policy, SamplesInsideActionBox) {
    Rng rng(5);
    Policy<double> pi(4, {16}, rng);
    const Matrix<double> x = 50.0 * random_matrix(200, 4, rng);
    const Matrix<double> a = pi.sample(x, rng);
    EXPECT_LE(a.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_LE(pi.mean_action(x).cwiseAbs().maxCoeff(), 1.0);
}

TEST(SoftUpdate, Examples) {
    Params<double> t, o;
    t.layers.push_back({Matrix<double>::Zero(1, 1), RowVector<double>::Zero(1)});
    o.layers.push_back({Matrix<double>::Ones(1, 1), RowVector<double>::Ones(1)});
    auto a = t;
    soft_update(a, o, 1.0);
    EXPECT_EQ(a.layers[0].weight(0, 0), 1.0);
    auto b = t;
    soft_update(b, o, 0.0);
    EXPECT_EQ(b.layers[0].weight(0, 0), 0.0);
    auto c = t;
    soft_update(c, o, 0.5);
    soft_update(c, o, 0.5);
    EXPECT_DOUBLE_EQ(c.layers[0].weight(0, 0), 0.75);
    Params<double> bad;
    bad.layers.push_back({Matrix<double>::Zero(2, 1), RowVector<double>::Zero(1)});
    EXPECT_THROW(soft_update(bad, o, 0.5), ShapeError);
}

// On a 5-state chain with one-hot inputs, the bootstrapped classifier converges to
// odds C / (1 - C) = p_Geom(g | s, a) / p(g) given by the exact oracle.
TEST(ClassifierConvergence, TabularChainMatchesOracleRatio) {
    const int n = 5, na = 3;
    const double gamma = 0.7;
    const auto mdp = oracle::chain_mdp(n);
    const auto pi = oracle::uniform_policy(mdp);
    const auto M = oracle::action_occupancy(mdp, pi, gamma);
    const double pg = 1.0 / n;

    auto row = [&](int s, int a, int g) {
        RowVector<double> r = RowVector<double>::Zero(2 * n + na);
        r(s) = 1.0;
        r(n + a) = 1.0;
        r(n + na + g) = 1.0;
        return r;
    };
    auto next_of = [&](int s, int a) {
        Eigen::Index t = 0;
        mdp.P[static_cast<std::size_t>(a)].row(s).maxCoeff(&t);
        return static_cast<int>(t);
    };

    Rng rng(6);
    ClassifierNet<double> c(2 * n + na, {64, 64}, rng);
    ClassifierNet<double> target = c;
    auto adam = AdamState<double>::for_params(c.net().params());

    // Full expected batch: per (s, a) the next-state positive carries the same total
    // weight as the n uniformly drawn goals.
    const int rows = n * na * 2 * n;
    Matrix<double> x(rows, 2 * n + na);
    std::vector<bool> is_next(static_cast<std::size_t>(rows));
    int r = 0;
    for (int s = 0; s < n; ++s)
        for (int a = 0; a < na; ++a)
            for (int g = 0; g < n; ++g) {
                x.row(r) = row(s, a, next_of(s, a));
                is_next[static_cast<std::size_t>(r++)] = true;
                x.row(r) = row(s, a, g);
                is_next[static_cast<std::size_t>(r++)] = false;
            }
    for (int it = 0; it < 4000; ++it) {
        // w = E_{a' ~ pi} odds_target(s', a', g), exact over the three actions.
        Eigen::VectorXd w = Eigen::VectorXd::Zero(rows);
        r = 0;
        for (int s = 0; s < n; ++s)
            for (int a = 0; a < na; ++a)
                for (int g = 0; g < n; ++g) {
                    const int sn = next_of(s, a);
                    Matrix<double> xs(na, 2 * n + na);
                    for (int b = 0; b < na; ++b) xs.row(b) = row(sn, b, g);
                    const Eigen::VectorXd z = target.log_odds(xs);
                    w(r + 1) = z.array().exp().mean();
                    r += 2;
                }
        classifier_update(c, adam, AdamConfig{1e-3}, ClassifierBatch<double>{x, is_next, w}, gamma);
        soft_update(target.net().params(), c.net().params(), 0.05);
    }

    double worst = 0.0;
    for (int s = 0; s < n; ++s)
        for (int a = 0; a < na; ++a)
            for (int g = 0; g < n; ++g) {
                Matrix<double> q(1, 2 * n + na);
                q.row(0) = row(s, a, g);
                const double odds = std::exp(c.log_odds(q)(0));
                const double truth = M[static_cast<std::size_t>(a)](s, g) / pg;
                worst = std::max(worst, std::abs(odds - truth) / truth);
            }
    EXPECT_LT(worst, 0.10);
}

// With the Bayes-optimal action classifier substituted, the actor objective's
// best action agrees with the action maximizing the true future-goal density.
TEST(ActorObjective, BayesClassifierArgmaxMatchesDensityArgmax) {
    Rng rng(7);
    for (int inst = 0; inst < 10; ++inst) {
        const auto mdp = oracle::random_mdp(6, 3, rng);
        const auto pi = oracle::random_policy(6, 3, rng);
        const auto Da = oracle::action_occupancy(mdp, pi, 0.9);
        const Eigen::VectorXd marginal = Eigen::VectorXd::Constant(6, 1.0 / 6);
        const auto C = oracle::bayes_classifier_action(Da, marginal);
        for (int s = 0; s < 6; ++s)
            for (int g = 0; g < 6; ++g) {
                int best_c = 0, best_d = 0;
                for (int a = 1; a < 3; ++a) {
                    if (log_odds(C[static_cast<std::size_t>(a)](s, g)) > log_odds(C[static_cast<std::size_t>(best_c)](s, g))) best_c = a;
                    if (Da[static_cast<std::size_t>(a)](s, g) > Da[static_cast<std::size_t>(best_d)](s, g)) best_d = a;
                }
                EXPECT_EQ(best_c, best_d);
            }
    }
}

// Numeric health: 10^4 full agent updates on FourRooms data keep every gradient finite.
TEST(AgentUpdate, GradientNormsStayFinite) {
    const MazeSpec m = *builtin_maze("FourRooms");
    Rng rng(8);
    ReplayBuffer buf;
    for (long e = 0; e < 40; ++e) {
        auto [s, g] = reset(m, rng);
        std::vector<Transition> traj;
        for (int t = 0; t < 50; ++t) {
            const Vec2 a{2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1};
            const auto r = step(m, s, a);
            traj.push_back({s, a, r.next_state, g, e, t});
            s = r.next_state;
        }
        buf.insert_trajectory(traj);
    }
    TrainConfig cfg;
    cfg.hidden = {32, 32};
    cfg.batch_size = 64;
    Agent<float> agent(cfg, Encoder{m.extent(), kMaxAction * m.cell_size}, rng);
    bool finite = true;
    for (int k = 0; k < 10000 && finite; ++k) {
        const auto batch = buf.sample_batch(static_cast<std::size_t>(cfg.batch_size), RelabelConfig{}, rng);
        const auto st = agent.update(batch, rng);
        finite = std::isfinite(st.critic.grad_norm) && std::isfinite(st.state_critic.grad_norm) &&
                 std::isfinite(st.actor.grad_norm) && std::isfinite(st.critic.loss) && std::isfinite(st.actor.loss);
    }
    EXPECT_TRUE(finite);
    EXPECT_EQ(agent.updates(), 10000);
}

TEST(AgentCheckpoint, SaveLoadRoundTrip) {
    const MazeSpec m = *builtin_maze("FourRooms");
    Rng rng(9);
    TrainConfig cfg;
    cfg.hidden = {8};
    const Encoder enc{m.extent(), kMaxAction * m.cell_size};
    Agent<double> a(cfg, enc, rng), b(cfg, enc, rng);
    const std::string dir = ::testing::TempDir();
    a.save(dir);
    b.load(dir);
    Rng r1(1), r2(1);
    for (int i = 0; i < 10; ++i) {
        const Vec2 s{1.0 + 9.0 * uniform01(rng), 1.0 + 9.0 * uniform01(rng)}, g{5.5, 5.5};
        EXPECT_EQ(a.act(s, g, r1, true), b.act(s, g, r2, true));
    }
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.gamma = 1.0;
    EXPECT_THROW(c.validate(), UsageError);
    c = TrainConfig{};
    c.actor_lr = 0.0;
    EXPECT_THROW(c.validate(), UsageError);
    c = TrainConfig{};
    c.hidden = {};
    EXPECT_THROW(c.validate(), UsageError);
}
