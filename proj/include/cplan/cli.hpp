#pragma once

// Command-line front end. Exit codes: 0 success, 1 validation or usage error,
// 2 runtime failure. Diagnostics go to stderr; results go to files.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cplan/oracle.hpp"
#include "cplan/plots.hpp"
#include "cplan/search.hpp"
#include "cplan/trainer.hpp"

namespace cplan {

// ---------------------------------------------------------------------------
// Oracle check suite: the waypoint-inference identities on random tabular MDPs.

struct OracleInstanceResult {
    int instance = 0;
    int states = 0;
    int actions = 0;
    double gamma = 0.0;
    double elbo_min_slack = 0.0;   // min over pairs of log NB(s0, sg) - ELBO(q*)
    double optimality_min_gap = 0.0;  // min over pairs and random q of ELBO(q*) - ELBO(q)
    double lagrangian_max_spread = 0.0;
    double importance_max_error = 0.0;
    double negbinom_max_row_error = 0.0;  // |row sum - 1|
};

struct OracleSuiteConfig {
    int instances = 50;
    int random_q = 1000;
    int candidates = 64;
    std::uint64_t seed = 0;
};

struct OracleSuiteResult {
    std::vector<OracleInstanceResult> instances;
    double chain_pmf_max_error = 0.0;

    bool elbo_pass() const {
        for (const auto& r : instances)
            if (r.elbo_min_slack < -1e-9) return false;
        return !instances.empty();
    }
    bool optimality_pass() const {
        for (const auto& r : instances)
            if (r.optimality_min_gap < -1e-9 || r.lagrangian_max_spread > 1e-8) return false;
        return !instances.empty();
    }
    bool importance_pass() const {
        for (const auto& r : instances)
            if (r.importance_max_error > 1e-6) return false;
        return !instances.empty();
    }
    bool negbinom_pass() const {
        for (const auto& r : instances)
            if (r.negbinom_max_row_error > 1e-9) return false;
        return chain_pmf_max_error <= 1e-12;
    }
    bool all_pass() const { return elbo_pass() && optimality_pass() && importance_pass() && negbinom_pass(); }
};

inline Eigen::VectorXd random_simplex(int n, Rng& rng) {
    std::gamma_distribution<double> gam(1.0, 1.0);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = gam(rng);
    return v / v.sum();
}

inline OracleInstanceResult check_oracle_instance(int id, const OracleSuiteConfig& cfg, Rng& rng) {
    std::uniform_int_distribution<int> ns(4, 8), na(2, 3);
    OracleInstanceResult r;
    r.instance = id;
    r.states = ns(rng);
    r.actions = na(rng);
    r.gamma = uniform01(rng) < 0.5 ? 0.5 : 0.9;
    const auto mdp = oracle::random_mdp(r.states, r.actions, rng);
    const oracle::GoalPolicy pol(oracle::random_policy(r.states, r.actions, rng));
    const Eigen::MatrixXd D = oracle::geom_occupancy(mdp, pol.for_goal(0), r.gamma);
    const Eigen::MatrixXd NB = D * D;
    r.negbinom_max_row_error = (NB.rowwise().sum().array() - 1.0).abs().maxCoeff();

    // Background distribution and a matching Bayes-optimal state classifier.
    const Eigen::VectorXd b = random_simplex(r.states, rng);
    const Eigen::MatrixXd C = oracle::bayes_classifier(D, b);

    r.elbo_min_slack = std::numeric_limits<double>::infinity();
    r.optimality_min_gap = std::numeric_limits<double>::infinity();
    for (int s0 = 0; s0 < r.states; ++s0)
        for (int sg = 0; sg < r.states; ++sg) {
            if (!(NB(s0, sg) > 0)) continue;
            const Eigen::VectorXd q = oracle::optimal_waypoint_dist(mdp, pol, s0, sg, r.gamma);
            const double e = oracle::elbo(mdp, pol, q, s0, sg, r.gamma);
            r.elbo_min_slack = std::min(r.elbo_min_slack, std::log(NB(s0, sg)) - e);
            for (int k = 0; k < cfg.random_q; ++k) {
                const Eigen::VectorXd qr = random_simplex(r.states, rng);
                r.optimality_min_gap = std::min(r.optimality_min_gap, e - oracle::elbo(mdp, pol, qr, s0, sg, r.gamma));
            }
            r.lagrangian_max_spread =
                std::max(r.lagrangian_max_spread, oracle::lagrangian_residual_spread(mdp, pol, q, s0, sg, r.gamma));

            // Importance weights from classifier scores on candidates drawn from b.
            std::vector<int> cands;
            std::discrete_distribution<int> draw(b.data(), b.data() + b.size());
            for (int k = 0; k < cfg.candidates; ++k) cands.push_back(draw(rng));
            Eigen::VectorXd d(cfg.candidates), ratio(cfg.candidates);
            for (int k = 0; k < cfg.candidates; ++k) {
                const int w = cands[static_cast<std::size_t>(k)];
                d(k) = log_odds(C(w, sg)) + log_odds(C(s0, w));
                ratio(k) = q(w) / b(w);
            }
            const Eigen::VectorXd p = softmax_weights(d);
            ratio /= ratio.sum();
            r.importance_max_error = std::max(r.importance_max_error, (p - ratio).cwiseAbs().maxCoeff());
        }
    return r;
}

// Hitting-time pmf of the two-stage geometric rollout on a self-advancing chain
// against (k + 1)(1 - gamma)^2 gamma^k.
inline double chain_pmf_error(int n = 12, double gamma = 0.7) {
    const auto mdp = oracle::chain_mdp(n);
    Eigen::MatrixXd right = Eigen::MatrixXd::Zero(n, 3);
    right.col(1).setOnes();
    const Eigen::MatrixXd NB = oracle::negbinom_density(mdp, right, gamma);
    double err = 0.0;
    for (int k = 0; k + 1 < n; ++k) {
        const double expect = (k + 1) * (1 - gamma) * (1 - gamma) * std::pow(gamma, k);
        err = std::max(err, std::abs(NB(0, k) - expect));
    }
    return err;
}

inline OracleSuiteResult run_oracle_suite(const OracleSuiteConfig& cfg) {
    OracleSuiteResult out;
    Rng rng(cfg.seed);
    for (int i = 0; i < cfg.instances; ++i) out.instances.push_back(check_oracle_instance(i, cfg, rng));
    out.chain_pmf_max_error = chain_pmf_error();
    return out;
}

inline void write_oracle_report(const OracleSuiteResult& r, const fs::path& dir) {
    fs::create_directories(dir);
    {
        CsvFile csv(dir / "residuals.csv",
                    "instance,states,actions,gamma,elbo_min_slack,optimality_min_gap,lagrangian_max_spread,"
                    "importance_max_error,negbinom_max_row_error");
        for (const auto& i : r.instances)
            csv.row(i.instance, i.states, i.actions, i.gamma, i.elbo_min_slack, i.optimality_min_gap,
                    i.lagrangian_max_spread, i.importance_max_error, i.negbinom_max_row_error);
    }
    double slack = std::numeric_limits<double>::infinity(), gap = slack, spread = 0, imp = 0, nb = 0;
    for (const auto& i : r.instances) {
        slack = std::min(slack, i.elbo_min_slack);
        gap = std::min(gap, i.optimality_min_gap);
        spread = std::max(spread, i.lagrangian_max_spread);
        imp = std::max(imp, i.importance_max_error);
        nb = std::max(nb, i.negbinom_max_row_error);
    }
    std::ofstream f(dir / "report.txt");
    auto line = [&](const char* name, bool ok, const std::string& detail) {
        f << name << " " << (ok ? "PASS" : "FAIL") << " " << detail << "\n";
    };
    const std::string n = std::to_string(r.instances.size()) + " instances";
    line("elbo_lower_bound", r.elbo_pass(), n + ", min slack " + detail::fmt(slack));
    line("waypoint_optimality", r.optimality_pass(),
         n + ", min gap " + detail::fmt(gap) + ", max lagrangian spread " + detail::fmt(spread));
    line("importance_weights", r.importance_pass(), n + ", max error " + detail::fmt(imp));
    line("negbinom_density", r.negbinom_pass(),
         "max row-sum error " + detail::fmt(nb) + ", chain pmf max error " + detail::fmt(r.chain_pmf_max_error));
    if (!f) throw std::runtime_error("cannot write oracle report");
}

// ---------------------------------------------------------------------------
// Latency benchmark.

struct LatencyRow {
    std::string method;
    std::size_t nodes = 0;
    double mean_waypoints = 0.0;
    std::vector<double> latencies_us;

    double median() const { return percentile(latencies_us, 0.5); }
};

// Per-decision latency of the direct policy and of search-wrapped acting over
// graphs of each requested size. Each decision uses a fresh (s, g) pair drawn
// from the buffer, and the search policy replans on every decision.
template <typename Scalar>
std::vector<LatencyRow> bench_latency(const Agent<Scalar>& agent, const ReplayBuffer& buffer,
                                      const std::vector<int>& sizes, int decisions, Rng& rng) {
    if (decisions < 1) throw UsageError("need at least one decision per benchmark point");
    if (buffer.empty()) throw UsageError("latency benchmark needs a non-empty buffer");
    auto scorer = [&](std::span<const Vec2> a, std::span<const Vec2> b) { return agent.state_log_odds(a, b); };
    Rng act_rng(rng());
    auto act = [&](Vec2 s, Vec2 g) { return agent.act(s, g, act_rng, true); };
    std::vector<std::pair<Vec2, Vec2>> queries;
    for (int i = 0; i < decisions; ++i)
        queries.emplace_back(buffer.at(uniform_index(rng, buffer.size())).state.position,
                             buffer.at(uniform_index(rng, buffer.size())).state.position);

    auto run = [&](SearchPolicy& sp, const std::string& method) {
        LatencyRow row;
        row.method = method;
        row.nodes = sp.graph().size();
        double planned = 0.0;
        for (const auto& [s, g] : queries) {
            sp.reset();
            sp.act(s, g);
            planned += static_cast<double>(sp.waypoints_planned());
        }
        row.latencies_us = sp.latencies_us();
        row.mean_waypoints = planned / static_cast<double>(queries.size());
        return row;
    };

    std::vector<LatencyRow> rows;
    {
        SearchPolicy direct(act, WaypointGraph<Vec2>{}, scorer, 1.0, true, false);
        rows.push_back(run(direct, "direct"));
    }
    for (int n : sizes) {
        if (n < 0) throw UsageError("graph sizes must be >= 0");
        std::vector<Vec2> states = graph_states(buffer, n, rng);
        WaypointGraph<Vec2> graph;
        if (states.size() >= 2) graph = build_graph(std::move(states), scorer);
        SearchPolicy sp(act, std::move(graph), scorer, 1.0, true, true);
        rows.push_back(run(sp, "search"));
    }
    return rows;
}

inline void write_latency_csv(const std::vector<LatencyRow>& rows, const fs::path& path) {
    CsvFile csv(path, kLatencyHeader);
    for (const auto& r : rows) append_latency_row(csv, r.method, r.mean_waypoints, r.nodes, r.latencies_us);
}

// ---------------------------------------------------------------------------
// Command dispatch.

namespace cli_detail {

inline Vec2 parse_point(const std::string& s) {
    const auto comma = s.find(',');
    if (comma == std::string::npos) throw UsageError("expected x,y but got '" + s + "'");
    return {detail::parse_double("point", detail::trim(s.substr(0, comma))),
            detail::parse_double("point", detail::trim(s.substr(comma + 1)))};
}

inline std::vector<int> parse_sizes(const std::string& s) { return detail::parse_int_list("sizes", s); }

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    f << text;
    if (!f) throw std::runtime_error("cannot write " + path.string());
}

inline ExperimentConfig build_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    ExperimentConfig cfg;
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    for (const auto& kv : overrides) apply_override(cfg, kv);
    return cfg;
}

template <typename Fn>
auto with_precision(const ExperimentConfig& cfg, Fn&& fn) {
    if (cfg.precision == "double") return fn(double{});
    return fn(float{});
}

inline int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& out) {
    const ExperimentConfig cfg = build_config(config_path, overrides);
    const auto sum = train(cfg, out);
    const auto& last = sum.evals.back();
    std::cerr << "trained " << sum.label << " for " << sum.env_steps << " steps (" << sum.updates
              << " updates) in " << detail::fmt(sum.seconds) << " s; final median min-distance "
              << detail::fmt(last.median_distance()) << ", success " << detail::fmt(last.success_rate()) << "\n";
    return 0;
}

inline int cmd_eval(const std::string& run, const std::string& which, const std::vector<std::string>& overrides,
                    const std::string& out, int episodes_override, long seed_override) {
    ExperimentConfig cfg = load_run_config(run);
    for (const auto& kv : overrides) apply_override(cfg, kv);
    cfg = normalize(cfg);
    validate(cfg);
    if (episodes_override > 0) cfg.eval_episodes = episodes_override;
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    const MazeSpec spec = resolve_env(cfg.env);
    const fs::path ckpt = find_checkpoint(run, which);
    const fs::path out_dir = out.empty() ? fs::path(run) / ("eval_" + ckpt.filename().string()) : fs::path(out);
    fs::create_directories(out_dir);
    const long step = list_checkpoints(run).empty() ? 0 : [&] {
        for (const auto& [s, p] : list_checkpoints(run))
            if (p == ckpt) return s;
        return 0L;
    }();
    return with_precision(cfg, [&](auto tag) {
        using S = decltype(tag);
        const Agent<S> agent = load_agent<S>(cfg, spec, ckpt);
        auto act = [&](Vec2 s, Vec2 g, Rng& r) { return agent.act(s, g, r, cfg.eval_deterministic); };
        Rng er = eval_rng(cfg.seed, step);
        EvalRecord rec;
        const int len = episode_length_for(cfg, spec);
        if (cfg.eval_search) {
            const ReplayBuffer buffer = load_run_buffer(run);
            auto scorer = [&](std::span<const Vec2> a, std::span<const Vec2> b) { return agent.state_log_odds(a, b); };
            std::vector<Vec2> nodes = graph_states(buffer, cfg.search_nodes, er);
            WaypointGraph<Vec2> graph;
            if (nodes.size() >= 2) graph = build_graph(std::move(nodes), scorer, cfg.search_cutoff);
            SearchPolicy sp([&](Vec2 s, Vec2 g) { return act(s, g, er); }, std::move(graph), scorer,
                            cfg.planner.reach_threshold, cfg.search_replan, true);
            rec = evaluate(spec, act, cfg.eval_episodes, len, cfg.success_threshold, er, &sp);
        } else {
            rec = evaluate(spec, act, cfg.eval_episodes, len, cfg.success_threshold, er);
        }
        rec.step = step;
        rec.seed = cfg.seed;
        {
            CsvFile csv(out_dir / "eval.csv", kEvalHeader);
            append_eval_rows(csv, rec);
        }
        {
            CsvFile csv(out_dir / "latency.csv", kLatencyHeader);
            append_latency_row(csv, cfg.eval_search ? "search" : "direct", rec.mean_waypoints_planned, rec.graph_nodes,
                               rec.latencies_us);
        }
        std::cerr << "evaluated " << ckpt.string() << ": median min-distance " << detail::fmt(rec.median_distance())
                  << ", success " << detail::fmt(rec.success_rate()) << "\n";
        return 0;
    });
}

inline int cmd_bench(const std::string& run, const std::string& which, const std::string& sizes, int decisions,
                     std::uint64_t seed, const std::string& out) {
    const ExperimentConfig cfg = normalize(load_run_config(run));
    const MazeSpec spec = resolve_env(cfg.env);
    const fs::path ckpt = find_checkpoint(run, which);
    const ReplayBuffer buffer = load_run_buffer(run);
    const auto sz = parse_sizes(sizes);
    return with_precision(cfg, [&](auto tag) {
        using S = decltype(tag);
        const Agent<S> agent = load_agent<S>(cfg, spec, ckpt);
        Rng rng(seed);
        const auto rows = bench_latency(agent, buffer, sz, decisions, rng);
        const fs::path path = out.empty() ? fs::path(run) / "latency.csv" : fs::path(out);
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        write_latency_csv(rows, path);
        for (const auto& r : rows)
            std::cerr << r.method << " nodes=" << r.nodes << " median_us=" << detail::fmt(r.median()) << "\n";
        return 0;
    });
}

inline int cmd_oracle_check(const std::string& out, int instances, std::uint64_t seed) {
    OracleSuiteConfig c;
    c.instances = instances;
    c.seed = seed;
    const auto r = run_oracle_suite(c);
    write_oracle_report(r, out);
    std::cerr << "oracle check: " << (r.all_pass() ? "all PASS" : "FAILURES") << " (" << (fs::path(out) / "report.txt").string() << ")\n";
    return r.all_pass() ? 0 : 2;
}

inline int cmd_heatmap(const std::string& run, const std::string& oracle_env, const std::string& which,
                       const std::string& start, const std::string& goal, double gamma, int resolution,
                       const std::string& out) {
    if (run.empty() == oracle_env.empty()) throw UsageError("give exactly one of --run or --oracle");
    const Vec2 s0 = parse_point(start), sg = parse_point(goal);
    Heatmap h;
    MazeSpec spec;
    std::string title;
    if (!oracle_env.empty()) {
        spec = resolve_env(oracle_env);
        if (!(gamma > 0 && gamma < 1)) throw UsageError("--gamma must lie in (0, 1)");
        const OracleScorer scorer(spec, gamma);
        h = waypoint_heatmap(spec, s0, sg, scorer, resolution);
        title = "oracle waypoint distribution, " + oracle_env + ", gamma " + detail::fmt(gamma);
    } else {
        const ExperimentConfig cfg = normalize(load_run_config(run));
        spec = resolve_env(cfg.env);
        const fs::path ckpt = find_checkpoint(run, which);
        h = with_precision(cfg, [&](auto tag) {
            using S = decltype(tag);
            const Agent<S> agent = load_agent<S>(cfg, spec, ckpt);
            auto scorer = [&](std::span<const Vec2> a, std::span<const Vec2> b) { return agent.state_log_odds(a, b); };
            return waypoint_heatmap(spec, s0, sg, scorer, resolution);
        });
        title = "learned waypoint distribution, " + ckpt.filename().string();
    }
    const fs::path path(out);
    write_text(path, heatmap_svg(h, spec, title));
    fs::path csv = path;
    csv.replace_extension(".csv");
    write_heatmap_csv(h, csv.string());
    return 0;
}

inline int cmd_curves(const std::vector<std::string>& runs, const std::string& out) {
    Panel dist{"median min distance to goal", "environment steps", {}};
    Panel critic{"critic gradient norm (mean +- std per window)", "environment steps", {}};
    Panel actor{"actor gradient norm (mean +- std per window)", "environment steps", {}};
    for (const auto& run : runs) {
        std::string name = fs::path(run).filename().string();
        if (fs::exists(fs::path(run) / "config.txt")) {
            const auto cfg = load_run_config(run);
            name = (cfg.label.empty() ? cfg.method : cfg.label) + " seed " + std::to_string(cfg.seed);
        }
        const auto [xs, ys] = median_curve(read_csv((fs::path(run) / "eval.csv").string()));
        dist.series.push_back({name, xs, ys, {}});
        const CsvTable m = read_csv((fs::path(run) / "metrics.csv").string());
        critic.series.push_back({name, m.numbers("step"), m.numbers("critic_grad_norm_mean"), m.numbers("critic_grad_norm_std")});
        actor.series.push_back({name, m.numbers("step"), m.numbers("actor_grad_norm_mean"), m.numbers("actor_grad_norm_std")});
    }
    write_text(out, curves_svg({dist, critic, actor}));
    return 0;
}

}  // namespace cli_detail

inline int run(int argc, const char* const* argv) {
    CLI::App app{"cplan: goal-conditioned RL with waypoint curricula"};
    app.require_subcommand(1);

    std::string config_path, out, run_dir, which = "last", sizes = "0,10,100,1000", oracle_env, start, goal;
    std::vector<std::string> overrides, runs;
    int episodes = 0, decisions = 1000, instances = 50, resolution = 1;
    long eval_seed = -1;
    std::uint64_t seed = 0;
    double gamma = 0.99;

    auto* train_cmd = app.add_subcommand("train", "train one method/seed into a run directory");
    train_cmd->add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
    train_cmd->add_option("--set", overrides, "override key=value (repeatable, applied after --config)");
    train_cmd->add_option("--out", out, "run directory")->required();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint of a run");
    eval_cmd->add_option("--run", run_dir, "run directory")->required();
    eval_cmd->add_option("--checkpoint", which, "first, last, or a step number");
    eval_cmd->add_option("--set", overrides, "override key=value (repeatable)");
    eval_cmd->add_option("--episodes", episodes, "number of evaluation episodes");
    eval_cmd->add_option("--seed", eval_seed, "evaluation seed (default: the run seed)");
    eval_cmd->add_option("--out", out, "output directory (default: <run>/eval_<checkpoint>)");

    auto* bench_cmd = app.add_subcommand("bench-latency", "per-decision latency of direct vs. search acting");
    bench_cmd->add_option("--run", run_dir, "run directory with checkpoint and buffer dump")->required();
    bench_cmd->add_option("--checkpoint", which, "first, last, or a step number");
    bench_cmd->add_option("--sizes", sizes, "comma-separated graph sizes");
    bench_cmd->add_option("--decisions", decisions, "decisions timed per graph size");
    bench_cmd->add_option("--seed", seed, "benchmark seed");
    bench_cmd->add_option("--out", out, "latency CSV path (default: <run>/latency.csv)");

    auto* oracle_cmd = app.add_subcommand("oracle-check", "verify waypoint-inference identities on tabular MDPs");
    oracle_cmd->add_option("--out", out, "output directory")->required();
    oracle_cmd->add_option("--instances", instances, "number of random instances")->check(CLI::PositiveNumber);
    oracle_cmd->add_option("--seed", seed, "instance generator seed");

    auto* heat_cmd = app.add_subcommand("plot-heatmap", "waypoint distribution heatmap (SVG + CSV)");
    heat_cmd->add_option("--run", run_dir, "run directory (learned classifier)");
    heat_cmd->add_option("--oracle", oracle_env, "environment for the oracle distribution");
    heat_cmd->add_option("--checkpoint", which, "first, last, or a step number");
    heat_cmd->add_option("--start", start, "start position x,y")->required();
    heat_cmd->add_option("--goal", goal, "goal position x,y")->required();
    heat_cmd->add_option("--gamma", gamma, "discount for the oracle distribution");
    heat_cmd->add_option("--resolution", resolution, "candidate points per cell side")->check(CLI::PositiveNumber);
    heat_cmd->add_option("--out", out, "SVG path")->required();

    auto* curves_cmd = app.add_subcommand("plot-curves", "distance and gradient-norm curves (SVG)");
    curves_cmd->add_option("--run", runs, "run directories (repeatable)")->required();
    curves_cmd->add_option("--out", out, "SVG path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*train_cmd) return cli_detail::cmd_train(config_path, overrides, out);
        if (*eval_cmd) return cli_detail::cmd_eval(run_dir, which, overrides, out, episodes, eval_seed);
        if (*bench_cmd) return cli_detail::cmd_bench(run_dir, which, sizes, decisions, seed, out);
        if (*oracle_cmd) return cli_detail::cmd_oracle_check(out, instances, seed);
        if (*heat_cmd) return cli_detail::cmd_heatmap(run_dir, oracle_env, which, start, goal, gamma, resolution, out);
        if (*curves_cmd) return cli_detail::cmd_curves(runs, out);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failed: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

inline int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"cplan"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace cplan
