#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cplan/trainer.hpp"

using namespace cplan;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::path(::testing::TempDir()) / ("cplan_trainer_" + name);
    fs::remove_all(d);
    return d;
}

// A run small enough for a unit test but long enough to pass warmup and log metrics.
ExperimentConfig tiny(const std::string& method, std::uint64_t seed = 0) {
    ExperimentConfig c;
    c.method = method;
    c.seed = seed;
    c.total_steps = 400;
    c.warmup_steps = 100;
    c.eval_interval = 200;
    c.eval_episodes = 3;
    c.metrics_window = 20;
    c.checkpoint_interval = 200;
    c.learner.batch_size = 16;
    c.learner.hidden = {16, 16};
    return c;
}

MazeSpec four_rooms() { return *builtin_maze("FourRooms"); }

Vec2 uniform_action(Rng& r) { return {(2.0 * uniform01(r) - 1.0) * kMaxAction, (2.0 * uniform01(r) - 1.0) * kMaxAction}; }

}  // namespace

TEST(Normalize, CLearningIsCPlanningWithoutWaypoints) {
    const auto c = normalize(tiny("c_learning"));
    EXPECT_EQ(c.method, "c_planning");
    EXPECT_EQ(c.label, "c_learning");
    EXPECT_EQ(c.planner.max_waypoints, 0);
    EXPECT_EQ(c.planner_scorer, "learned");
    EXPECT_FALSE(c.eval_search);
}

TEST(Normalize, BehaviorMatrix) {
    const auto opt = normalize(tiny("c_planning_optimal"));
    EXPECT_EQ(opt.method, "c_planning");
    EXPECT_EQ(opt.planner_scorer, "oracle");
    EXPECT_EQ(opt.planner.max_waypoints, PlannerConfig{}.max_waypoints);

    const auto sorb = normalize(tiny("sorb_eval"));
    EXPECT_EQ(sorb.planner.max_waypoints, 0);
    EXPECT_TRUE(sorb.eval_search);

    const auto plus = normalize(tiny("c_planning_plus_sorb"));
    EXPECT_EQ(plus.planner.max_waypoints, PlannerConfig{}.max_waypoints);
    EXPECT_TRUE(plus.eval_search);

    const auto plan = normalize(tiny("c_planning"));
    EXPECT_EQ(plan.label, "c_planning");
    EXPECT_FALSE(plan.eval_search);
}

TEST(Normalize, IdempotentAndLearnerUntouched) {
    for (const auto& tag : method_tags()) {
        const auto once = normalize(tiny(tag));
        const auto twice = normalize(once);
        EXPECT_EQ(to_config_text(once), to_config_text(twice)) << tag;
        // Learner settings never depend on the method.
        ExperimentConfig ref = tiny("c_planning");
        ref.label = once.label;
        ref.planner = once.planner;
        ref.planner_scorer = once.planner_scorer;
        ref.eval_search = once.eval_search;
        EXPECT_EQ(to_config_text(normalize(ref)), to_config_text(once)) << tag;
    }
}

TEST(Normalize, UnknownMethodRejected) { EXPECT_THROW(normalize(tiny("dqn")), UsageError); }

TEST(Config, OverridesAndComments) {
    ExperimentConfig c;
    apply_config_text(c, "# comment\n\nseed = 7\ntrain.hidden = 8,4\nplanner.max_waypoints=3\n");
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.learner.hidden, (std::vector<int>{8, 4}));
    EXPECT_EQ(c.planner.max_waypoints, 3);
    apply_override(c, "seed=9");
    EXPECT_EQ(c.seed, 9u);
}

TEST(Config, UnknownKeyAndBadValuesRejected) {
    ExperimentConfig c;
    EXPECT_THROW(apply_override(c, "train.learning_rate=1"), UsageError);
    EXPECT_THROW(apply_override(c, "seed"), UsageError);
    EXPECT_THROW(apply_override(c, "seed=abc"), UsageError);
    EXPECT_THROW(apply_override(c, "eval.deterministic=maybe"), UsageError);
    EXPECT_THROW(apply_config_text(c, "steps 100\n"), UsageError);
    EXPECT_THROW(apply_config_file(c, "/nonexistent/cplan.cfg"), UsageError);
}

TEST(Config, TextRoundTrip) {
    ExperimentConfig c = tiny("c_planning_optimal", 11);
    c.learner.entropy_coef = 0.0123;
    c.relabel.p_future = 0.25;
    ExperimentConfig d;
    apply_config_text(d, to_config_text(c));
    EXPECT_EQ(to_config_text(c), to_config_text(d));
}

TEST(Config, ValidationErrors) {
    auto bad = [](auto mutate) {
        ExperimentConfig c = normalize(tiny("c_planning"));
        mutate(c);
        return c;
    };
    EXPECT_THROW(validate(bad([](auto& c) { c.env = "NoSuchMaze"; })), UsageError);
    EXPECT_THROW(validate(bad([](auto& c) { c.eval_interval = 0; })), UsageError);
    EXPECT_THROW(validate(bad([](auto& c) { c.precision = "half"; })), UsageError);
    EXPECT_THROW(validate(bad([](auto& c) { c.planner_scorer = "magic"; })), UsageError);
    EXPECT_THROW(validate(bad([](auto& c) { c.relabel.p_next = 1.5; })), UsageError);
    EXPECT_THROW(validate(bad([](auto& c) { c.planner.max_waypoints = -1; })), UsageError);
    EXPECT_NO_THROW(validate(normalize(tiny("c_planning"))));
}

TEST(Summary, StepsToThresholdAndArea) {
    TrainSummary s;
    for (long step : {0L, 10L, 20L}) {
        EvalRecord r;
        r.step = step;
        r.min_distances = {step == 0 ? 4.0 : step == 10 ? 2.0 : 0.5};
        s.evals.push_back(r);
    }
    EXPECT_EQ(s.steps_to_threshold(1.0), 20L);
    EXPECT_EQ(s.steps_to_threshold(3.0), 10L);
    EXPECT_FALSE(s.steps_to_threshold(0.1).has_value());
    EXPECT_DOUBLE_EQ(s.area_under_distance(), 0.5 * (4 + 2) * 10 + 0.5 * (2 + 0.5) * 10);
}

TEST(Evaluate, InfiniteThresholdAlwaysSucceeds) {
    const auto spec = four_rooms();
    Rng rng(1);
    auto act = [](Vec2, Vec2, Rng& r) { return uniform_action(r); };
    const auto rec = evaluate(spec, act, 10, 50, std::numeric_limits<double>::infinity(), rng);
    EXPECT_DOUBLE_EQ(rec.success_rate(), 1.0);
    for (double d : rec.min_distances) EXPECT_GE(d, 0.0);
    EXPECT_EQ(rec.latencies_us.size(), 500u);
}

TEST(Evaluate, EmptyGraphSearchMatchesDirect) {
    const auto spec = four_rooms();
    auto act = [](Vec2 s, Vec2 g, Rng& r) { return Vec2{std::tanh(g.x - s.x), std::tanh(g.y - s.y)} + 0.3 * uniform_action(r); };
    auto scorer = [](std::span<const Vec2> a, std::span<const Vec2>) { return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(a.size())).eval(); };
    Rng r1(2), r2(2);
    const auto direct = evaluate(spec, act, 8, 50, 1.0, r1);
    SearchPolicy sp([&](Vec2 s, Vec2 g) { return act(s, g, r2); }, WaypointGraph<Vec2>{}, scorer, 1.0);
    const auto search = evaluate(spec, act, 8, 50, 1.0, r2, &sp);
    EXPECT_EQ(direct.min_distances, search.min_distances);
    EXPECT_EQ(direct.successes, search.successes);
}

TEST(Evaluate, UntrainedPolicyMatchesRandomActionBaseline) {
    const auto spec = four_rooms();
    const int len = default_episode_length(spec);
    // Baseline first: uniform random actions.
    Rng rb(3);
    auto random_act = [&](Vec2, Vec2, Rng& r) { return spec.cell_size * uniform_action(r); };
    const double baseline = evaluate(spec, random_act, 2000, len, 1.0, rb).mean_distance();

    // A single initialization has a state-dependent drift, so average over several.
    double untrained = 0.0;
    const int inits = 8;
    for (int k = 0; k < inits; ++k) {
        Rng init(40 + k), re(60 + k);
        const Agent<double> agent(TrainConfig{}, encoder_for(spec), init);
        auto policy = [&](Vec2 s, Vec2 g, Rng& r) { return agent.act(s, g, r, false); };
        untrained += evaluate(spec, policy, 250, len, 1.0, re).mean_distance() / inits;
    }
    EXPECT_NEAR(untrained, baseline, 0.10 * baseline) << "baseline " << baseline << " untrained " << untrained;
}

TEST(GraphStates, DistinctAndBounded) {
    ReplayBuffer b;
    std::vector<Transition> t;
    for (int k = 0; k < 30; ++k) t.push_back(Transition{EnvState{{double(k), 0}}, Vec2{}, EnvState{{k + 1.0, 0}}, Goal{}, 0, k});
    b.insert_trajectory(t);
    Rng rng(6);
    const auto s = graph_states(b, 10, rng);
    ASSERT_EQ(s.size(), 10u);
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = i + 1; j < s.size(); ++j) EXPECT_NE(s[i], s[j]);
    EXPECT_EQ(graph_states(b, 100, rng).size(), 30u);
    EXPECT_TRUE(graph_states(b, 0, rng).empty());
}

TEST(OracleScorerTest, PrefersNearbyGoals) {
    const auto spec = four_rooms();
    const OracleScorer sc(spec, 0.9);
    const std::vector<Vec2> from{{1.5, 1.5}, {1.5, 1.5}};
    const std::vector<Vec2> to{{2.5, 1.5}, {8.5, 8.5}};
    const auto lo = sc(from, to);
    ASSERT_EQ(lo.size(), 2);
    EXPECT_TRUE(std::isfinite(lo(0)));
    EXPECT_GT(lo(0), lo(1));
}

TEST(Train, WritesRunLayout) {
    const auto dir = fresh_dir("layout");
    const auto sum = train(tiny("c_planning"), dir);
    for (const char* f : {"config.txt", "metrics.csv", "eval.csv", "episodes.csv", "latency.csv", "report.txt", "buffer.txt"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_EQ(sum.env_steps, 400);
    EXPECT_EQ(sum.updates, 300);
    // Eval at step 0 and every interval.
    ASSERT_EQ(sum.evals.size(), 3u);
    for (std::size_t i = 0; i < sum.evals.size(); ++i) {
        EXPECT_EQ(sum.evals[i].step, static_cast<long>(200 * i));
        EXPECT_EQ(sum.evals[i].min_distances.size(), 3u);
        for (double d : sum.evals[i].min_distances) EXPECT_GE(d, 0.0);
    }
    const auto ck = list_checkpoints(dir);
    ASSERT_EQ(ck.size(), 3u);
    EXPECT_EQ(find_checkpoint(dir, "first"), ck.front().second);
    EXPECT_EQ(find_checkpoint(dir, "last"), ck.back().second);
    EXPECT_EQ(find_checkpoint(dir, "200"), ck[1].second);
    EXPECT_THROW(find_checkpoint(dir, "123"), UsageError);
    // metrics.csv: header plus one row per 20 updates.
    std::stringstream ss(slurp(dir / "metrics.csv"));
    std::string line;
    std::getline(ss, line);
    EXPECT_EQ(line, kMetricsHeader);
    int rows = 0;
    while (std::getline(ss, line)) ++rows;
    EXPECT_EQ(rows, 15);
    const auto cfg = load_run_config(dir);
    EXPECT_EQ(cfg.method, "c_planning");
    EXPECT_EQ(cfg.label, "c_planning");
}

TEST(Train, SameSeedSameOutputs) {
    const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
    train(tiny("c_planning", 3), a);
    train(tiny("c_planning", 3), b);
    for (const char* f : {"metrics.csv", "eval.csv", "episodes.csv", "buffer.txt"})
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    EXPECT_EQ(slurp(a / "checkpoints/step_400/policy.txt"), slurp(b / "checkpoints/step_400/policy.txt"));
}

TEST(Train, CLearningEqualsCPlanningWithZeroWaypoints) {
    const auto a = fresh_dir("cl"), b = fresh_dir("cp0");
    ExperimentConfig zero = tiny("c_planning", 4);
    zero.planner.max_waypoints = 0;
    const auto sa = train(tiny("c_learning", 4), a);
    const auto sb = train(zero, b);
    EXPECT_EQ(sa.updates, sb.updates);
    for (const char* f : {"metrics.csv", "eval.csv", "episodes.csv", "buffer.txt"})
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Train, UpdateCountIndependentOfMethod) {
    std::vector<long> updates;
    for (const std::string m : {"c_learning", "c_planning", "c_planning_optimal"})
        updates.push_back(train(tiny(m, 5), fresh_dir("upd_" + m)).updates);
    EXPECT_EQ(updates[0], updates[1]);
    EXPECT_EQ(updates[0], updates[2]);
}

TEST(Train, SorbWithEmptyGraphMatchesDirectEvaluation) {
    ExperimentConfig sorb = tiny("sorb_eval", 6);
    sorb.search_nodes = 0;
    const auto a = train(tiny("c_learning", 6), fresh_dir("direct"));
    const auto b = train(sorb, fresh_dir("sorb0"));
    ASSERT_EQ(a.evals.size(), b.evals.size());
    for (std::size_t i = 0; i < a.evals.size(); ++i) EXPECT_EQ(a.evals[i].min_distances, b.evals[i].min_distances);
}

TEST(Train, CheckpointReloadsSameAgent) {
    const auto dir = fresh_dir("reload");
    ExperimentConfig c = tiny("c_planning", 7);
    c.precision = "double";
    train(c, dir);
    const auto cfg = normalize(load_run_config(dir));
    const auto spec = resolve_env(cfg.env);
    const auto a = load_agent<double>(cfg, spec, find_checkpoint(dir, "last"));
    const auto b = load_agent<double>(cfg, spec, find_checkpoint(dir, "last"));
    Rng r1(0), r2(0);
    EXPECT_EQ(a.act({1.5, 1.5}, {8.5, 8.5}, r1, true), b.act({1.5, 1.5}, {8.5, 8.5}, r2, true));
    EXPECT_THROW(load_agent<double>(cfg, spec, dir / "checkpoints" / "missing"), UsageError);
    EXPECT_EQ(load_run_buffer(dir).size(), 400u);
}

TEST(Train, InvalidConfigRejectedBeforeWriting) {
    const auto dir = fresh_dir("invalid");
    ExperimentConfig c = tiny("c_planning");
    c.eval_episodes = 0;
    EXPECT_THROW(train(c, dir), UsageError);
    EXPECT_FALSE(fs::exists(dir));
}
