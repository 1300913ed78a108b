#pragma once

// Test-time graph search over replay-buffer states (the deployment-cost
// baseline). Edge cost between two states is -logodds C(u, v) clamped at zero;
// edges costlier than the cutoff are dropped.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "cplan/core.hpp"
#include "cplan/env.hpp"

namespace cplan {

inline constexpr double kNoEdge = std::numeric_limits<double>::infinity();
inline constexpr double kDefaultCostCutoff = 3.0;  // odds 1/e^3

inline double edge_cost(double log_odds) { return std::max(-log_odds, 0.0); }

template <typename State>
struct WaypointGraph {
    std::vector<State> nodes;
    Eigen::MatrixXd cost;  // cost(i, j), kNoEdge when absent; diagonal always absent
    double cutoff = kDefaultCostCutoff;
    std::size_t evaluations = 0;  // classifier evaluations spent building the graph

    std::size_t size() const { return nodes.size(); }
    std::size_t edge_count() const {
        std::size_t e = 0;
        for (Eigen::Index i = 0; i < cost.size(); ++i) e += std::isfinite(cost.data()[i]) ? 1 : 0;
        return e;
    }
};

template <typename State, typename Scorer>
WaypointGraph<State> build_graph(std::vector<State> states, Scorer&& scorer, double cutoff = kDefaultCostCutoff) {
    if (states.size() < 2) throw UsageError("graph needs at least two states");
    const std::size_t n = states.size();
    WaypointGraph<State> g;
    g.cutoff = cutoff;
    g.cost = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), kNoEdge);
    std::vector<State> from, to;
    from.reserve(n * (n - 1));
    to.reserve(n * (n - 1));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) {
                from.push_back(states[i]);
                to.push_back(states[j]);
            }
    const Eigen::VectorXd lo = scorer(std::span<const State>(from), std::span<const State>(to));
    g.evaluations = from.size();
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) {
                const double c = edge_cost(lo(static_cast<Eigen::Index>(k++)));
                if (c <= cutoff) g.cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c;
            }
    g.nodes = std::move(states);
    return g;
}

struct Path {
    std::vector<std::size_t> nodes;  // visited vertices in order, endpoints included
    double cost = 0.0;
};

// Dense O(V^2) Dijkstra from `src` over a cost matrix (kNoEdge = absent).
// Returns distances and predecessor indices (-1 for none).
inline std::pair<Eigen::VectorXd, std::vector<long>> dijkstra(const Eigen::MatrixXd& cost, std::size_t src) {
    const auto n = static_cast<std::size_t>(cost.rows());
    Eigen::VectorXd dist = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), kNoEdge);
    std::vector<long> prev(n, -1);
    std::vector<char> done(n, 0);
    dist(static_cast<Eigen::Index>(src)) = 0.0;
    for (std::size_t iter = 0; iter < n; ++iter) {
        std::size_t u = n;
        double best = kNoEdge;
        for (std::size_t v = 0; v < n; ++v)
            if (!done[v] && dist(static_cast<Eigen::Index>(v)) < best) {
                best = dist(static_cast<Eigen::Index>(v));
                u = v;
            }
        if (u == n) break;
        done[u] = 1;
        const auto ui = static_cast<Eigen::Index>(u);
        for (std::size_t v = 0; v < n; ++v) {
            const double c = cost(ui, static_cast<Eigen::Index>(v));
            if (done[v] || !std::isfinite(c)) continue;
            const double alt = best + c;
            if (alt < dist(static_cast<Eigen::Index>(v))) {
                dist(static_cast<Eigen::Index>(v)) = alt;
                prev[v] = static_cast<long>(u);
            }
        }
    }
    return {dist, prev};
}

inline Path shortest_path_nodes(const Eigen::MatrixXd& cost, std::size_t src, std::size_t dst) {
    auto [dist, prev] = dijkstra(cost, src);
    if (!std::isfinite(dist(static_cast<Eigen::Index>(dst)))) throw NoPathError("destination unreachable under cutoff");
    Path p;
    p.cost = dist(static_cast<Eigen::Index>(dst));
    for (long v = static_cast<long>(dst); v != -1; v = prev[static_cast<std::size_t>(v)]) p.nodes.push_back(static_cast<std::size_t>(v));
    std::reverse(p.nodes.begin(), p.nodes.end());
    return p;
}

struct WaypointPlan {
    std::vector<std::size_t> waypoints;  // graph node indices strictly between s and g
    double cost = 0.0;
};

// Shortest route s -> (graph nodes)* -> g. The endpoints join the graph through
// virtual edges scored by the same classifier and subject to the same cutoff;
// a direct s -> g edge is allowed.
template <typename State, typename Scorer>
WaypointPlan shortest_path(const WaypointGraph<State>& graph, const State& s, const State& g, Scorer&& scorer) {
    const std::size_t n = graph.size();
    const std::size_t S = n, G = n + 1;
    Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n + 2), static_cast<Eigen::Index>(n + 2), kNoEdge);
    if (n > 0) cost.topLeftCorner(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) = graph.cost;

    std::vector<State> from, to;
    for (std::size_t v = 0; v < n; ++v) {
        from.push_back(s);
        to.push_back(graph.nodes[v]);
    }
    for (std::size_t v = 0; v < n; ++v) {
        from.push_back(graph.nodes[v]);
        to.push_back(g);
    }
    from.push_back(s);
    to.push_back(g);
    const Eigen::VectorXd lo = scorer(std::span<const State>(from), std::span<const State>(to));
    auto keep = [&](double lo_val) {
        const double c = edge_cost(lo_val);
        return c <= graph.cutoff ? c : kNoEdge;
    };
    for (std::size_t v = 0; v < n; ++v) {
        cost(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(v)) = keep(lo(static_cast<Eigen::Index>(v)));
        cost(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(G)) = keep(lo(static_cast<Eigen::Index>(n + v)));
    }
    cost(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(G)) = keep(lo(static_cast<Eigen::Index>(2 * n)));

    const Path p = shortest_path_nodes(cost, S, G);
    WaypointPlan plan;
    plan.cost = p.cost;
    for (std::size_t k = 1; k + 1 < p.nodes.size(); ++k) plan.waypoints.push_back(p.nodes[k]);
    return plan;
}

// Goal-conditioned policy wrapped with waypoint search. With search disabled or an
// empty graph it is exactly the wrapped policy.
class SearchPolicy {
   public:
    using Act = std::function<Vec2(Vec2 s, Vec2 g)>;

    SearchPolicy(Act policy, WaypointGraph<Vec2> graph, std::function<Eigen::VectorXd(std::span<const Vec2>, std::span<const Vec2>)> scorer,
                 double reach_threshold, bool replan_each_step = true, bool search_enabled = true)
        : policy_(std::move(policy)),
          graph_(std::move(graph)),
          scorer_(std::move(scorer)),
          reach_threshold_(reach_threshold),
          replan_(replan_each_step),
          enabled_(search_enabled) {}

    // Forget the current plan (call at episode start).
    void reset() {
        plan_.clear();
        planned_ = false;
    }

    Vec2 act(Vec2 s, Vec2 g) {
        const auto t0 = std::chrono::steady_clock::now();
        const Vec2 target = enabled_ && graph_.size() > 0 ? next_target(s, g) : g;
        const Vec2 a = policy_(s, target);
        const auto t1 = std::chrono::steady_clock::now();
        latencies_us_.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
        return a;
    }

    // Waypoints of the current plan (graph node indices, not yet reached).
    const std::vector<std::size_t>& plan() const { return plan_; }
    const std::vector<double>& latencies_us() const { return latencies_us_; }
    std::size_t waypoints_planned() const { return last_plan_size_; }
    const WaypointGraph<Vec2>& graph() const { return graph_; }

   private:
    Vec2 next_target(Vec2 s, Vec2 g) {
        if (replan_ || !planned_) {
            try {
                plan_ = shortest_path(graph_, s, g, scorer_).waypoints;
            } catch (const NoPathError&) {
                plan_.clear();
            }
            planned_ = true;
            last_plan_size_ = plan_.size();
        }
        while (!plan_.empty() && goal_distance(s, graph_.nodes[plan_.front()]) <= reach_threshold_)
            plan_.erase(plan_.begin());
        return plan_.empty() ? g : graph_.nodes[plan_.front()];
    }

    Act policy_;
    WaypointGraph<Vec2> graph_;
    std::function<Eigen::VectorXd(std::span<const Vec2>, std::span<const Vec2>)> scorer_;
    double reach_threshold_;
    bool replan_;
    bool enabled_;
    std::vector<std::size_t> plan_;
    bool planned_ = false;
    std::size_t last_plan_size_ = 0;
    std::vector<double> latencies_us_;
};

}  // namespace cplan
