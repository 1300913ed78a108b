#pragma once

// Training-time waypoint curriculum.
//
// Candidates are drawn from the replay buffer and scored by
//   d(w) = logodds C(w, s_g) + logodds C(s_0, w),
// which equals log(q*(w) / b(w)) up to an additive constant that depends only on
// (s_0, s_g). A softmax over d therefore samples from q* restricted to the
// candidate set, without estimating the normalizer.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cplan/buffer.hpp"
#include "cplan/core.hpp"
#include "cplan/env.hpp"

namespace cplan {

struct PlannerConfig {
    int max_waypoints = 8;           // N_g: waypoints commanded before the final goal
    double reach_threshold = 1.0;    // eps_d
    int candidates = 256;            // M
    double temperature = 1.0;
    int max_steps_per_waypoint = 20;

    void validate() const {
        if (max_waypoints < 0) throw UsageError("planner.max_waypoints must be >= 0");
        if (!(reach_threshold > 0)) throw UsageError("planner.reach_threshold must be > 0");
        if (candidates < 1) throw UsageError("planner.candidates must be >= 1");
        if (!(temperature > 0)) throw UsageError("planner.temperature must be > 0");
        if (max_steps_per_waypoint < 1) throw UsageError("planner.max_steps_per_waypoint must be >= 1");
    }
};

// Batched log-odds scorer: scorer(from, to)(i) = logodds C(from[i], to[i]).
template <typename State>
using PairScorer = std::function<Eigen::VectorXd(std::span<const State>, std::span<const State>)>;

template <typename State, typename Scorer>
Eigen::VectorXd score_candidates(const State& s0, const State& sg, std::span<const State> candidates,
                                 Scorer&& scorer) {
    if (candidates.empty()) throw UsageError("score_candidates needs at least one candidate");
    const std::vector<State> starts(candidates.size(), s0);
    const std::vector<State> goals(candidates.size(), sg);
    const Eigen::VectorXd to_goal = scorer(candidates, std::span<const State>(goals));
    const Eigen::VectorXd from_start = scorer(std::span<const State>(starts), candidates);
    return to_goal + from_start;
}

inline Eigen::VectorXd softmax_weights(const Eigen::VectorXd& scores, double temperature = 1.0) {
    if (scores.size() == 0) throw UsageError("softmax over an empty score list");
    if (!scores.allFinite()) throw UsageError("waypoint scores must be finite");
    const double top = scores.maxCoeff();
    Eigen::VectorXd w = ((scores.array() - top) / temperature).exp().matrix();
    return w / w.sum();
}

inline std::size_t sample_waypoint(const Eigen::VectorXd& scores, Rng& rng, double temperature = 1.0) {
    const Eigen::VectorXd p = softmax_weights(scores, temperature);
    const double u = uniform01(rng);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        acc += p(i);
        if (u < acc) return static_cast<std::size_t>(i);
    }
    return static_cast<std::size_t>(p.size() - 1);
}

struct WaypointController {
    std::optional<Vec2> waypoint;  // current s_w, if a waypoint is commanded
    Vec2 current_goal;
    int n_g = 0;                   // goals commanded so far (waypoints, plus one for the final goal)
    int steps_on_current = 0;
    bool final_goal = false;

    void new_episode() { *this = WaypointController{}; }
};

// Goal to command at step t. Resamples a waypoint at t = 0, when the current
// waypoint is reached, or when it has been held for max_steps_per_waypoint steps;
// once N_g waypoints have been used the final goal is commanded for the rest of
// the episode.
template <typename Scorer>
Vec2 commanded_goal(WaypointController& ctl, int t, Vec2 s_t, Vec2 s_0, Vec2 s_g, const ReplayBuffer& buffer,
                    Scorer&& scorer, const PlannerConfig& cfg, Rng& rng) {
    if (ctl.final_goal || ctl.n_g > cfg.max_waypoints) {
        ctl.final_goal = true;
        ctl.waypoint.reset();
        ctl.current_goal = s_g;
        ++ctl.steps_on_current;
        return s_g;
    }
    const bool due = t == 0 || !ctl.waypoint ||
                     goal_distance(s_t, *ctl.waypoint) <= cfg.reach_threshold ||
                     ctl.steps_on_current >= cfg.max_steps_per_waypoint;
    if (!due) {
        ++ctl.steps_on_current;
        return *ctl.waypoint;
    }
    if (ctl.n_g < cfg.max_waypoints && !buffer.empty()) {
        ++ctl.n_g;
        std::vector<Vec2> cands;
        cands.reserve(static_cast<std::size_t>(cfg.candidates));
        for (const auto& s : buffer.sample_states(static_cast<std::size_t>(cfg.candidates), rng)) cands.push_back(s.position);
        const Eigen::VectorXd d = score_candidates(s_0, s_g, std::span<const Vec2>(cands), scorer);
        ctl.waypoint = cands[sample_waypoint(d, rng, cfg.temperature)];
        ctl.current_goal = *ctl.waypoint;
        ctl.steps_on_current = 1;
        return *ctl.waypoint;
    }
    ctl.final_goal = true;
    ctl.waypoint.reset();
    ctl.n_g = cfg.max_waypoints + 1;
    ctl.current_goal = s_g;
    ctl.steps_on_current = 1;
    return s_g;
}

struct EpisodeStats {
    long episode = 0;
    double min_goal_distance = 0.0;
    bool success = false;
    int n_waypoints_used = 0;
    int distinct_goals = 0;
};

struct Episode {
    std::vector<Transition> trajectory;
    EpisodeStats stats;
};

// Rolls one episode: the policy is conditioned on the commanded goal at every
// step and each transition stores the goal it was commanded with. With
// max_waypoints == 0 every command is the final goal.
// `on_step(transition)` runs after every environment step (the trainer hooks
// gradient updates and evaluation there).
template <typename Act, typename Scorer, typename OnStep>
Episode collect_episode(const MazeSpec& spec, Act&& act, WaypointController& ctl, const ReplayBuffer& buffer,
                        Scorer&& scorer, const PlannerConfig& cfg, int episode_length, double success_threshold,
                        long episode_id, Rng& rng, OnStep&& on_step) {
    Episode ep;
    auto [state, goal] = reset(spec, rng);
    const Vec2 s0 = state.position;
    ctl.new_episode();
    double min_d = goal_distance(s0, goal.position);
    std::vector<Vec2> seen;
    for (int t = 0; t < episode_length; ++t) {
        const Vec2 cmd = commanded_goal(ctl, t, state.position, s0, goal.position, buffer, scorer, cfg, rng);
        if (std::find(seen.begin(), seen.end(), cmd) == seen.end()) seen.push_back(cmd);
        const Vec2 a = act(state.position, cmd, rng);
        const StepResult r = step(spec, state, a);
        ep.trajectory.push_back(Transition{state, a, r.next_state, Goal{cmd}, episode_id, t});
        on_step(ep.trajectory.back());
        state = r.next_state;
        min_d = std::min(min_d, goal_distance(state.position, goal.position));
    }
    ep.stats.episode = episode_id;
    ep.stats.min_goal_distance = min_d;
    ep.stats.success = min_d <= success_threshold;
    ep.stats.n_waypoints_used = std::min(ctl.n_g, cfg.max_waypoints);
    ep.stats.distinct_goals = static_cast<int>(seen.size());
    return ep;
}

template <typename Act, typename Scorer>
Episode collect_episode(const MazeSpec& spec, Act&& act, WaypointController& ctl, const ReplayBuffer& buffer,
                        Scorer&& scorer, const PlannerConfig& cfg, int episode_length, double success_threshold,
                        long episode_id, Rng& rng) {
    return collect_episode(spec, std::forward<Act>(act), ctl, buffer, std::forward<Scorer>(scorer), cfg,
                           episode_length, success_threshold, episode_id, rng, [](const Transition&) {});
}

}  // namespace cplan
