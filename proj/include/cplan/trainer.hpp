#pragma once

// Experiment orchestration: alternate planner-driven data collection with
// C-learning updates, evaluate periodically, and write the run directory.
//
// Every method tag normalizes onto one training path. They differ only in how
// goals are commanded during collection (planner.max_waypoints and
// planner.scorer) and in how the policy is queried at evaluation (eval.search).

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cplan/approx.hpp"
#include "cplan/buffer.hpp"
#include "cplan/clearning.hpp"
#include "cplan/core.hpp"
#include "cplan/env.hpp"
#include "cplan/oracle.hpp"
#include "cplan/planner.hpp"
#include "cplan/search.hpp"

namespace cplan {

namespace fs = std::filesystem;

struct ExperimentConfig {
    std::string method = "c_planning";
    std::string label;  // method tag as given; set by normalize()
    std::string env = "FourRooms";
    std::uint64_t seed = 0;
    long total_steps = 200'000;
    int episode_length = 0;  // 0: layout default

    long eval_interval = 5000;
    int eval_episodes = 20;
    double success_threshold = 1.0;
    bool eval_deterministic = true;
    bool eval_search = false;

    long warmup_steps = 1000;
    int updates_per_step = 1;
    std::string precision = "float";
    TrainConfig learner;

    std::size_t buffer_capacity = ReplayBuffer::kDefaultCapacity;
    RelabelConfig relabel;

    PlannerConfig planner;
    std::string planner_scorer = "learned";  // learned | oracle

    int search_nodes = 200;
    double search_cutoff = kDefaultCostCutoff;
    bool search_replan = true;

    long metrics_window = 1000;
    long checkpoint_interval = 50'000;
    bool save_buffer = true;
};

inline const std::vector<std::string>& method_tags() {
    static const std::vector<std::string> tags = {"c_planning", "c_learning", "c_planning_optimal", "sorb_eval",
                                                  "c_planning_plus_sorb"};
    return tags;
}

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

template <typename T>
T parse_int(const std::string& key, const std::string& v) {
    T out{};
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw UsageError("invalid integer for " + key + ": '" + v + "'");
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || std::isnan(out))
        throw UsageError("invalid number for " + key + ": '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw UsageError("invalid boolean for " + key + ": '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(parse_int<int>(key, trim(tok)));
    if (out.empty()) throw UsageError("empty list for " + key);
    return out;
}

inline std::string join(const std::vector<int>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
    return s;
}

struct Field {
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

// Every configurable key, in the order written to config.txt.
inline const std::vector<std::pair<std::string, Field>>& fields() {
    using C = ExperimentConfig;
    auto str = [](std::string C::*m) {
        return Field{[m](const C& c) { return c.*m; }, [m](C& c, const std::string& v) { c.*m = v; }};
    };
    auto i64 = [](long C::*m) {
        return Field{[m](const C& c) { return std::to_string(c.*m); },
                     [m](C& c, const std::string& v) { c.*m = parse_int<long>("", v); }};
    };
    auto i32 = [](int C::*m) {
        return Field{[m](const C& c) { return std::to_string(c.*m); },
                     [m](C& c, const std::string& v) { c.*m = parse_int<int>("", v); }};
    };
    auto dbl = [](double C::*m) {
        return Field{[m](const C& c) { return fmt(c.*m); }, [m](C& c, const std::string& v) { c.*m = parse_double("", v); }};
    };
    auto bln = [](bool C::*m) {
        return Field{[m](const C& c) { return std::string(c.*m ? "true" : "false"); },
                     [m](C& c, const std::string& v) { c.*m = parse_bool("", v); }};
    };
    // Nested members.
    auto ld = [](double TrainConfig::*m) {
        return Field{[m](const C& c) { return fmt(c.learner.*m); },
                     [m](C& c, const std::string& v) { c.learner.*m = parse_double("", v); }};
    };
    auto li = [](int TrainConfig::*m) {
        return Field{[m](const C& c) { return std::to_string(c.learner.*m); },
                     [m](C& c, const std::string& v) { c.learner.*m = parse_int<int>("", v); }};
    };
    auto pd = [](double PlannerConfig::*m) {
        return Field{[m](const C& c) { return fmt(c.planner.*m); },
                     [m](C& c, const std::string& v) { c.planner.*m = parse_double("", v); }};
    };
    auto pi = [](int PlannerConfig::*m) {
        return Field{[m](const C& c) { return std::to_string(c.planner.*m); },
                     [m](C& c, const std::string& v) { c.planner.*m = parse_int<int>("", v); }};
    };
    auto rd = [](double RelabelConfig::*m) {
        return Field{[m](const C& c) { return fmt(c.relabel.*m); },
                     [m](C& c, const std::string& v) { c.relabel.*m = parse_double("", v); }};
    };

    static const std::vector<std::pair<std::string, Field>> table = {
        {"method", str(&C::method)},
        {"label", str(&C::label)},
        {"env", str(&C::env)},
        {"seed", Field{[](const C& c) { return std::to_string(c.seed); },
                       [](C& c, const std::string& v) { c.seed = parse_int<std::uint64_t>("", v); }}},
        {"steps", i64(&C::total_steps)},
        {"env.episode_length", i32(&C::episode_length)},
        {"eval.interval", i64(&C::eval_interval)},
        {"eval.episodes", i32(&C::eval_episodes)},
        {"eval.success_threshold", dbl(&C::success_threshold)},
        {"eval.deterministic", bln(&C::eval_deterministic)},
        {"eval.search", bln(&C::eval_search)},
        {"train.warmup_steps", i64(&C::warmup_steps)},
        {"train.updates_per_step", i32(&C::updates_per_step)},
        {"train.precision", str(&C::precision)},
        {"train.gamma", ld(&TrainConfig::gamma)},
        {"train.actor_lr", ld(&TrainConfig::actor_lr)},
        {"train.critic_lr", ld(&TrainConfig::critic_lr)},
        {"train.state_critic_lr", ld(&TrainConfig::state_critic_lr)},
        {"train.actor_loss_weight", ld(&TrainConfig::actor_loss_weight)},
        {"train.critic_loss_weight", ld(&TrainConfig::critic_loss_weight)},
        {"train.tau", ld(&TrainConfig::tau)},
        {"train.target_update_period", li(&TrainConfig::target_update_period)},
        {"train.batch_size", li(&TrainConfig::batch_size)},
        {"train.entropy_coef", ld(&TrainConfig::entropy_coef)},
        {"train.w_clip", ld(&TrainConfig::w_clip)},
        {"train.hidden", Field{[](const C& c) { return join(c.learner.hidden); },
                               [](C& c, const std::string& v) { c.learner.hidden = parse_int_list("", v); }}},
        {"buffer.capacity", Field{[](const C& c) { return std::to_string(c.buffer_capacity); },
                                  [](C& c, const std::string& v) { c.buffer_capacity = parse_int<std::size_t>("", v); }}},
        {"buffer.p_next", rd(&RelabelConfig::p_next)},
        {"buffer.p_future", rd(&RelabelConfig::p_future)},
        {"planner.max_waypoints", pi(&PlannerConfig::max_waypoints)},
        {"planner.reach_threshold", pd(&PlannerConfig::reach_threshold)},
        {"planner.candidates", pi(&PlannerConfig::candidates)},
        {"planner.temperature", pd(&PlannerConfig::temperature)},
        {"planner.max_steps_per_waypoint", pi(&PlannerConfig::max_steps_per_waypoint)},
        {"planner.scorer", str(&C::planner_scorer)},
        {"search.nodes", i32(&C::search_nodes)},
        {"search.cutoff", dbl(&C::search_cutoff)},
        {"search.replan", bln(&C::search_replan)},
        {"log.metrics_window", i64(&C::metrics_window)},
        {"log.checkpoint_interval", i64(&C::checkpoint_interval)},
        {"log.save_buffer", bln(&C::save_buffer)},
    };
    return table;
}

}  // namespace detail

// Applies one key=value override. Unknown keys and malformed values throw UsageError.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& [k, f] : detail::fields()) {
        if (k != key) continue;
        try {
            f.set(cfg, value);
        } catch (const UsageError& e) {
            throw UsageError("bad value for " + key + ": '" + value + "'");
        }
        return;
    }
    throw UsageError("unknown config key: " + key);
}

inline void apply_override(ExperimentConfig& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("override must look like key=value: " + kv);
    set_config_value(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
}

// Reads "key = value" lines; blank lines and lines starting with '#' are ignored.
inline void apply_config_text(ExperimentConfig& cfg, std::string_view text) {
    std::stringstream ss{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.find('=') == std::string::npos)
            throw UsageError("config line " + std::to_string(lineno) + " is not key=value: " + t);
        apply_override(cfg, t);
    }
}

inline void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("cannot read config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    apply_config_text(cfg, ss.str());
}

inline std::string to_config_text(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& [k, f] : detail::fields()) out += k + "=" + f.get(cfg) + "\n";
    return out;
}

inline MazeSpec resolve_env(const std::string& name) {
    if (auto m = builtin_maze(name)) return *m;
    if (fs::exists(name)) return load_maze_file(name);
    throw UsageError("unknown environment '" + name + "' (not a built-in layout or a maze file)");
}

// Maps a method tag onto the single training path:
//   c_learning           -> c_planning, planner.max_waypoints = 0
//   c_planning_optimal   -> c_planning, planner.scorer = oracle
//   sorb_eval            -> c_planning, planner.max_waypoints = 0, eval.search = true
//   c_planning_plus_sorb -> c_planning, eval.search = true
// The original tag is kept in `label`. Normalizing twice is a no-op.
inline ExperimentConfig normalize(ExperimentConfig cfg) {
    const std::string tag = cfg.method;
    if (std::find(method_tags().begin(), method_tags().end(), tag) == method_tags().end())
        throw UsageError("unknown method: " + tag);
    if (cfg.label.empty()) cfg.label = tag;
    if (tag == "c_learning" || tag == "sorb_eval") cfg.planner.max_waypoints = 0;
    if (tag == "c_planning_optimal") cfg.planner_scorer = "oracle";
    if (tag == "sorb_eval" || tag == "c_planning_plus_sorb") cfg.eval_search = true;
    cfg.method = "c_planning";
    return cfg;
}

inline void validate(const ExperimentConfig& cfg) {
    if (std::find(method_tags().begin(), method_tags().end(), cfg.method) == method_tags().end())
        throw UsageError("unknown method: " + cfg.method);
    resolve_env(cfg.env);
    if (cfg.total_steps < 0) throw UsageError("steps must be >= 0");
    if (cfg.episode_length < 0) throw UsageError("env.episode_length must be >= 0");
    if (cfg.eval_interval < 1) throw UsageError("eval.interval must be >= 1");
    if (cfg.eval_episodes < 1) throw UsageError("eval.episodes must be >= 1");
    if (!(cfg.success_threshold >= 0)) throw UsageError("eval.success_threshold must be >= 0");
    if (cfg.warmup_steps < 0) throw UsageError("train.warmup_steps must be >= 0");
    if (cfg.updates_per_step < 0) throw UsageError("train.updates_per_step must be >= 0");
    if (cfg.precision != "float" && cfg.precision != "double") throw UsageError("train.precision must be float or double");
    if (cfg.buffer_capacity < 1) throw UsageError("buffer.capacity must be >= 1");
    if (cfg.planner_scorer != "learned" && cfg.planner_scorer != "oracle")
        throw UsageError("planner.scorer must be learned or oracle");
    if (cfg.search_nodes < 0) throw UsageError("search.nodes must be >= 0");
    if (!(cfg.search_cutoff >= 0)) throw UsageError("search.cutoff must be >= 0");
    if (cfg.metrics_window < 1) throw UsageError("log.metrics_window must be >= 1");
    if (cfg.checkpoint_interval < 1) throw UsageError("log.checkpoint_interval must be >= 1");
    cfg.learner.validate();
    cfg.relabel.validate();
    cfg.planner.validate();
}

inline int episode_length_for(const ExperimentConfig& cfg, const MazeSpec& spec) {
    return cfg.episode_length > 0 ? cfg.episode_length : default_episode_length(spec);
}

// ---------------------------------------------------------------------------
// Oracle scorer: Bayes-optimal state log-odds of per-goal optimal policies on the
// cell discretization, with a uniform goal marginal over free cells.

class OracleScorer {
   public:
    OracleScorer(const MazeSpec& spec, double gamma) : spec_(spec), disc_(oracle::discretize(spec)) {
        const auto pol = oracle::optimal_goal_policy(disc_.mdp, gamma);
        const Eigen::VectorXd marginal = Eigen::VectorXd::Constant(disc_.mdp.n, 1.0 / disc_.mdp.n);
        table_ = oracle::state_log_odds_table(disc_.mdp, pol, marginal, gamma);
    }

    int state_index(Vec2 p) const {
        const int k = disc_.state_of(spec_.cell_of(p));
        if (k < 0) throw UsageError("position is not inside a free cell");
        return k;
    }

    Eigen::VectorXd operator()(std::span<const Vec2> from, std::span<const Vec2> to) const {
        Eigen::VectorXd out(static_cast<Eigen::Index>(from.size()));
        for (std::size_t i = 0; i < from.size(); ++i)
            out(static_cast<Eigen::Index>(i)) = table_(state_index(from[i]), state_index(to[i]));
        return out;
    }

    const Eigen::MatrixXd& table() const { return table_; }
    const oracle::MazeDiscretization& discretization() const { return disc_; }

   private:
    MazeSpec spec_;
    oracle::MazeDiscretization disc_;
    Eigen::MatrixXd table_;
};

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalRecord {
    long step = 0;
    std::uint64_t seed = 0;
    std::string method;
    std::vector<double> min_distances;
    std::vector<bool> successes;
    std::vector<double> latencies_us;
    double mean_waypoints_planned = 0.0;
    std::size_t graph_nodes = 0;

    double success_rate() const {
        if (successes.empty()) return 0.0;
        return static_cast<double>(std::count(successes.begin(), successes.end(), true)) / successes.size();
    }
    double median_distance() const {
        if (min_distances.empty()) return 0.0;
        std::vector<double> v = min_distances;
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
    double mean_distance() const {
        if (min_distances.empty()) return 0.0;
        return std::accumulate(min_distances.begin(), min_distances.end(), 0.0) / min_distances.size();
    }
};

inline double percentile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Seed for evaluation at a given step: independent of the training stream, and
// shared across methods so that the same episodes are compared.
inline Rng eval_rng(std::uint64_t seed, long step) {
    std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                     static_cast<std::uint32_t>(step), 0x5eedu};
    return Rng(sq);
}

// Rolls `episodes` evaluation episodes, commanding the final goal directly.
// `act(s, g, rng)` is the policy. When `search` is given, actions come from the
// search-wrapped policy instead (its per-decision latency is recorded).
template <typename Act>
EvalRecord evaluate(const MazeSpec& spec, Act&& act, int episodes, int episode_length, double success_threshold,
                    Rng& rng, SearchPolicy* search = nullptr) {
    if (episodes < 1) throw UsageError("evaluation needs at least one episode");
    EvalRecord rec;
    double planned = 0.0;
    for (int e = 0; e < episodes; ++e) {
        auto [state, goal] = reset(spec, rng);
        double min_d = goal_distance(state.position, goal.position);
        if (search) search->reset();
        for (int t = 0; t < episode_length; ++t) {
            Vec2 a;
            if (search) {
                a = search->act(state.position, goal.position);
            } else {
                const auto t0 = std::chrono::steady_clock::now();
                a = act(state.position, goal.position, rng);
                rec.latencies_us.push_back(
                    std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count());
            }
            state = step(spec, state, a).next_state;
            min_d = std::min(min_d, goal_distance(state.position, goal.position));
        }
        if (search) planned += static_cast<double>(search->waypoints_planned());
        rec.min_distances.push_back(min_d);
        rec.successes.push_back(min_d <= success_threshold);
    }
    if (search) {
        rec.latencies_us = search->latencies_us();
        rec.mean_waypoints_planned = planned / episodes;
        rec.graph_nodes = search->graph().size();
    }
    return rec;
}

// Distinct buffer states for a search graph (at most `n`, fewer if the buffer is small).
inline std::vector<Vec2> graph_states(const ReplayBuffer& buffer, int n, Rng& rng) {
    std::vector<Vec2> out;
    if (buffer.empty() || n <= 0) return out;
    const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(n), buffer.size());
    std::vector<std::size_t> idx(buffer.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t k = 0; k < want; ++k) {
        const std::size_t j = k + uniform_index(rng, idx.size() - k);
        std::swap(idx[k], idx[j]);
        out.push_back(buffer.at(idx[k]).state.position);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output files.

inline constexpr const char* kMetricsHeader =
    "step,classifier_loss,actor_loss,critic_grad_norm_mean,critic_grad_norm_std,actor_grad_norm_mean,actor_grad_norm_std";
inline constexpr const char* kEvalHeader = "step,seed,episode,min_distance,success";
inline constexpr const char* kEpisodesHeader = "episode,min_goal_distance,success,n_waypoints_used";
inline constexpr const char* kLatencyHeader = "method,num_waypoints,nodes,mean_decision_latency_us,p95_latency_us";

class CsvFile {
   public:
    CsvFile(const fs::path& path, const char* header) : f_(path) {
        if (!f_) throw std::runtime_error("cannot write " + path.string());
        f_ << header << "\n";
    }
    template <typename... T>
    void row(const T&... xs) {
        bool first = true;
        ((f_ << (first ? "" : ",") << cell(xs), first = false), ...);
        f_ << "\n";
        if (!f_) throw std::runtime_error("write failed");
    }
    void flush() { f_.flush(); }

   private:
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    static std::string cell(double v) { return detail::fmt(v); }
    static std::string cell(bool b) { return b ? "1" : "0"; }
    template <typename I>
        requires std::is_integral_v<I>
    static std::string cell(I v) { return std::to_string(v); }
    std::ofstream f_;
};

inline void append_eval_rows(CsvFile& csv, const EvalRecord& r) {
    for (std::size_t e = 0; e < r.min_distances.size(); ++e)
        csv.row(r.step, r.seed, e, r.min_distances[e], static_cast<bool>(r.successes[e]));
}

inline void append_latency_row(CsvFile& csv, const std::string& method, double waypoints, std::size_t nodes,
                               const std::vector<double>& lat) {
    csv.row(method, waypoints, nodes, mean_of(lat), percentile(lat, 0.95));
}

// Running mean/std over a metrics window.
struct WindowStats {
    std::vector<double> critic_loss, actor_loss, critic_gn, actor_gn;

    bool empty() const { return critic_loss.empty(); }
    void clear() { *this = WindowStats{}; }
    static double stdev(const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        const double m = mean_of(v);
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        return std::sqrt(s / static_cast<double>(v.size() - 1));
    }
};

// ---------------------------------------------------------------------------
// Training.

struct TrainSummary {
    fs::path run_dir;
    std::string label;
    long env_steps = 0;
    long updates = 0;
    long episodes = 0;
    std::vector<EvalRecord> evals;
    double seconds = 0.0;

    // First eval step whose median min-distance is below `threshold` (nullopt if never).
    std::optional<long> steps_to_threshold(double threshold) const {
        for (const auto& e : evals)
            if (e.median_distance() < threshold) return e.step;
        return std::nullopt;
    }
    // Trapezoidal area under the median-distance curve over env steps.
    double area_under_distance() const {
        double a = 0.0;
        for (std::size_t i = 1; i < evals.size(); ++i)
            a += 0.5 * (evals[i].median_distance() + evals[i - 1].median_distance()) *
                 static_cast<double>(evals[i].step - evals[i - 1].step);
        return a;
    }
};

inline std::string checkpoint_name(long step) { return "step_" + std::to_string(step); }

// Listing of checkpoints/<step_N> directories, sorted by step.
inline std::vector<std::pair<long, fs::path>> list_checkpoints(const fs::path& run_dir) {
    std::vector<std::pair<long, fs::path>> out;
    const fs::path root = run_dir / "checkpoints";
    if (!fs::is_directory(root)) return out;
    for (const auto& e : fs::directory_iterator(root)) {
        const std::string name = e.path().filename().string();
        if (!e.is_directory() || name.rfind("step_", 0) != 0) continue;
        try {
            out.emplace_back(detail::parse_int<long>("checkpoint", name.substr(5)), e.path());
        } catch (const UsageError&) {
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

// "first", "last", "step_N" or N.
inline fs::path find_checkpoint(const fs::path& run_dir, const std::string& which) {
    const auto all = list_checkpoints(run_dir);
    if (all.empty()) throw UsageError("no checkpoints under " + (run_dir / "checkpoints").string());
    if (which == "last" || which.empty()) return all.back().second;
    if (which == "first") return all.front().second;
    const std::string digits = which.rfind("step_", 0) == 0 ? which.substr(5) : which;
    const long want = detail::parse_int<long>("checkpoint", digits);
    for (const auto& [s, p] : all)
        if (s == want) return p;
    throw UsageError("checkpoint " + which + " not found under " + run_dir.string());
}

inline ExperimentConfig load_run_config(const fs::path& run_dir) {
    const fs::path p = run_dir / "config.txt";
    if (!fs::exists(p)) throw UsageError("missing run config: " + p.string());
    ExperimentConfig cfg;
    apply_config_file(cfg, p.string());
    return cfg;
}

inline Encoder encoder_for(const MazeSpec& spec) { return Encoder{spec.extent(), kMaxAction * spec.cell_size}; }

template <typename Scalar>
TrainSummary train_impl(const ExperimentConfig& cfg, const fs::path& run_dir) {
    const auto wall0 = std::chrono::steady_clock::now();
    const MazeSpec spec = resolve_env(cfg.env);
    const int ep_len = episode_length_for(cfg, spec);

    fs::create_directories(run_dir / "checkpoints");
    {
        std::ofstream f(run_dir / "config.txt");
        f << to_config_text(cfg);
        if (!f) throw std::runtime_error("cannot write config snapshot");
    }
    CsvFile metrics(run_dir / "metrics.csv", kMetricsHeader);
    CsvFile evals(run_dir / "eval.csv", kEvalHeader);
    CsvFile episodes(run_dir / "episodes.csv", kEpisodesHeader);

    Rng rng(cfg.seed);
    Agent<Scalar> agent(cfg.learner, encoder_for(spec), rng);
    ReplayBuffer buffer(cfg.buffer_capacity);

    std::unique_ptr<OracleScorer> oracle_scorer;
    if (cfg.planner_scorer == "oracle") oracle_scorer = std::make_unique<OracleScorer>(spec, cfg.learner.gamma);
    auto scorer = [&](std::span<const Vec2> from, std::span<const Vec2> to) -> Eigen::VectorXd {
        if (oracle_scorer) return (*oracle_scorer)(from, to);
        return agent.state_log_odds(from, to);
    };

    TrainSummary sum;
    sum.run_dir = run_dir;
    sum.label = cfg.label.empty() ? cfg.method : cfg.label;
    WindowStats window;
    long step = 0;

    auto policy_act = [&](Vec2 s, Vec2 g, Rng& r) { return agent.act(s, g, r, cfg.eval_deterministic); };
    auto run_eval = [&] {
        Rng er = eval_rng(cfg.seed, step);
        EvalRecord rec;
        if (cfg.eval_search) {
            std::vector<Vec2> nodes = graph_states(buffer, cfg.search_nodes, er);
            WaypointGraph<Vec2> graph;
            if (nodes.size() >= 2) graph = build_graph(std::move(nodes), scorer, cfg.search_cutoff);
            SearchPolicy sp([&](Vec2 s, Vec2 g) { return policy_act(s, g, er); }, std::move(graph), scorer,
                            cfg.planner.reach_threshold, cfg.search_replan, true);
            rec = evaluate(spec, policy_act, cfg.eval_episodes, ep_len, cfg.success_threshold, er, &sp);
        } else {
            rec = evaluate(spec, policy_act, cfg.eval_episodes, ep_len, cfg.success_threshold, er);
        }
        rec.step = step;
        rec.seed = cfg.seed;
        rec.method = sum.label;
        append_eval_rows(evals, rec);
        evals.flush();
        sum.evals.push_back(std::move(rec));
    };
    auto checkpoint = [&] {
        const fs::path dir = run_dir / "checkpoints" / checkpoint_name(step);
        fs::create_directories(dir);
        agent.save(dir.string());
    };
    auto flush_window = [&] {
        if (window.empty()) return;
        metrics.row(step, mean_of(window.critic_loss), mean_of(window.actor_loss), mean_of(window.critic_gn),
                    WindowStats::stdev(window.critic_gn), mean_of(window.actor_gn), WindowStats::stdev(window.actor_gn));
        window.clear();
    };

    run_eval();
    checkpoint();

    auto on_step = [&](const Transition&) {
        ++step;
        if (step > cfg.warmup_steps && !buffer.empty()) {
            for (int u = 0; u < cfg.updates_per_step; ++u) {
                const auto batch = buffer.sample_batch(static_cast<std::size_t>(cfg.learner.batch_size), cfg.relabel, rng);
                const auto st = agent.update(batch, rng);
                if (!std::isfinite(st.critic.grad_norm) || !std::isfinite(st.actor.grad_norm))
                    throw NumericError("non-finite gradient at step " + std::to_string(step));
                window.critic_loss.push_back(st.critic.loss);
                window.actor_loss.push_back(st.actor.loss);
                window.critic_gn.push_back(st.critic.grad_norm);
                window.actor_gn.push_back(st.actor.grad_norm);
                ++sum.updates;
                if (sum.updates % cfg.metrics_window == 0) flush_window();
            }
        }
        if (step % cfg.eval_interval == 0) run_eval();
        if (step % cfg.checkpoint_interval == 0) checkpoint();
    };

    const auto random_act = [](Vec2, Vec2, Rng& r) {
        return Vec2{(2.0 * uniform01(r) - 1.0) * kMaxAction, (2.0 * uniform01(r) - 1.0) * kMaxAction};
    };
    WaypointController ctl;
    while (step < cfg.total_steps) {
        const int len = static_cast<int>(std::min<long>(ep_len, cfg.total_steps - step));
        auto act = [&](Vec2 s, Vec2 g, Rng& r) {
            if (step < cfg.warmup_steps) return spec.cell_size * random_act(s, g, r);
            return agent.act(s, g, r, false);
        };
        Episode ep = collect_episode(spec, act, ctl, buffer, scorer, cfg.planner, len, cfg.success_threshold,
                                     sum.episodes, rng, on_step);
        buffer.insert_trajectory(ep.trajectory);
        episodes.row(ep.stats.episode, ep.stats.min_goal_distance, ep.stats.success, ep.stats.n_waypoints_used);
        ++sum.episodes;
    }
    flush_window();
    if (step % cfg.checkpoint_interval != 0) checkpoint();
    if (cfg.save_buffer) buffer.save((run_dir / "buffer.txt").string());
    sum.env_steps = step;

    {
        CsvFile lat(run_dir / "latency.csv", kLatencyHeader);
        const auto& last = sum.evals.back();
        append_latency_row(lat, cfg.eval_search ? "search" : "direct", last.mean_waypoints_planned, last.graph_nodes,
                           last.latencies_us);
    }
    sum.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();

    std::ofstream rep(run_dir / "report.txt");
    const auto& last = sum.evals.back();
    const auto reach = sum.steps_to_threshold(cfg.success_threshold);
    rep << "method " << sum.label << "\n"
        << "seed " << cfg.seed << "\n"
        << "env " << cfg.env << "\n"
        << "env_steps " << sum.env_steps << "\n"
        << "updates " << sum.updates << "\n"
        << "episodes " << sum.episodes << "\n"
        << "final_median_min_distance " << detail::fmt(last.median_distance()) << "\n"
        << "final_success_rate " << detail::fmt(last.success_rate()) << "\n"
        << "steps_to_threshold " << (reach ? std::to_string(*reach) : std::string("never")) << "\n"
        << "area_under_distance " << detail::fmt(sum.area_under_distance()) << "\n";
    if (!rep) throw std::runtime_error("cannot write report");
    return sum;
}

// Runs one experiment into `run_dir` (created if missing). The config is
// normalized and validated first; the written config.txt is the normalized one.
inline TrainSummary train(const ExperimentConfig& raw, const fs::path& run_dir) {
    const ExperimentConfig cfg = normalize(raw);
    validate(cfg);
    if (cfg.precision == "double") return train_impl<double>(cfg, run_dir);
    return train_impl<float>(cfg, run_dir);
}

// ---------------------------------------------------------------------------
// Loading trained artifacts.

template <typename Scalar>
Agent<Scalar> load_agent(const ExperimentConfig& cfg, const MazeSpec& spec, const fs::path& checkpoint_dir) {
    for (const char* f : {"policy.txt", "classifier.txt", "target_classifier.txt", "state_classifier.txt"})
        if (!fs::exists(checkpoint_dir / f)) throw UsageError("checkpoint is missing " + std::string(f) + ": " + checkpoint_dir.string());
    Rng rng(cfg.seed);
    Agent<Scalar> agent(cfg.learner, encoder_for(spec), rng);
    agent.load(checkpoint_dir.string());
    return agent;
}

inline ReplayBuffer load_run_buffer(const fs::path& run_dir) {
    const fs::path p = run_dir / "buffer.txt";
    if (!fs::exists(p)) throw UsageError("run has no buffer dump: " + p.string());
    return ReplayBuffer::load(p.string());
}

}  // namespace cplan
