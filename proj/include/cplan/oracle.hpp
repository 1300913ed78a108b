#pragma once

// Exact finite-state ground truth: discounted occupancies, their two-stage
// (negative-binomial) composition, Bayes-optimal classifiers, the optimal
// waypoint distribution and its evidence lower bound, and goal-reaching
// optimal policies.
//
// Occupancy convention: D[s][s+] = (1 - gamma) * sum_{t>=0} gamma^t P_pi^t[s][s+],
// i.e. the geometric horizon includes t = 0.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "cplan/core.hpp"
#include "cplan/env.hpp"

namespace cplan::oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct TabularMDP {
    int n = 0;
    int num_actions = 0;
    std::vector<MatrixXd> P;  // P[a](s, s')

    void validate() const {
        if (n < 1 || num_actions < 1) throw UsageError("tabular MDP needs n >= 1 and at least one action");
        if (static_cast<int>(P.size()) != num_actions) throw ShapeError("transition tensor has wrong action count");
        for (const auto& Pa : P) {
            if (Pa.rows() != n || Pa.cols() != n) throw ShapeError("transition matrix has wrong shape");
            if ((Pa.array() < 0).any()) throw UsageError("negative transition probability");
            if (((Pa.rowwise().sum().array() - 1.0).abs() > 1e-12).any())
                throw UsageError("transition rows must sum to 1");
        }
    }
};

// pi(s, a); rows sum to one.
using TabularPolicy = MatrixXd;

// A goal-conditioned tabular policy: either one policy for every goal or one per goal state.
class GoalPolicy {
   public:
    GoalPolicy() = default;
    explicit GoalPolicy(TabularPolicy shared) : shared_(std::move(shared)) {}
    explicit GoalPolicy(std::vector<TabularPolicy> per_goal) : per_goal_(std::move(per_goal)) {}

    bool goal_independent() const { return per_goal_.empty(); }
    const TabularPolicy& for_goal(int g) const {
        return per_goal_.empty() ? shared_ : per_goal_[static_cast<std::size_t>(g)];
    }

   private:
    TabularPolicy shared_;
    std::vector<TabularPolicy> per_goal_;
};

inline MatrixXd policy_transition(const TabularMDP& mdp, const TabularPolicy& pi) {
    if (pi.rows() != mdp.n || pi.cols() != mdp.num_actions) throw ShapeError("policy shape does not match MDP");
    MatrixXd Ppi = MatrixXd::Zero(mdp.n, mdp.n);
    for (int a = 0; a < mdp.num_actions; ++a) Ppi += pi.col(a).asDiagonal() * mdp.P[static_cast<std::size_t>(a)];
    return Ppi;
}

inline void check_gamma(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw UsageError("gamma must lie in (0, 1)");
}

inline MatrixXd geom_occupancy(const TabularMDP& mdp, const TabularPolicy& pi, double gamma) {
    check_gamma(gamma);
    const MatrixXd Ppi = policy_transition(mdp, pi);
    const MatrixXd A = MatrixXd::Identity(mdp.n, mdp.n) - gamma * Ppi;
    Eigen::FullPivLU<MatrixXd> lu(A);
    if (!lu.isInvertible()) throw NumericError("occupancy system is singular");
    MatrixXd D = (1.0 - gamma) * lu.inverse();
    if (!D.allFinite()) throw NumericError("occupancy has non-finite entries");
    return D.cwiseMax(0.0);
}

inline MatrixXd negbinom_density(const TabularMDP& mdp, const TabularPolicy& pi, double gamma) {
    const MatrixXd D = geom_occupancy(mdp, pi, gamma);
    return D * D;
}

// Action-conditioned occupancy: Da[a](s, g) = sum_s' P[a](s, s') D(s', g).
inline std::vector<MatrixXd> action_occupancy(const TabularMDP& mdp, const TabularPolicy& pi, double gamma) {
    const MatrixXd D = geom_occupancy(mdp, pi, gamma);
    std::vector<MatrixXd> out;
    for (const auto& Pa : mdp.P) out.push_back(Pa * D);
    return out;
}

// C*(s, g) = D(s, g) / (D(s, g) + p(g)).
inline MatrixXd bayes_classifier(const MatrixXd& D, const VectorXd& marginal) {
    if (marginal.size() != D.cols()) throw ShapeError("marginal length does not match density table");
    MatrixXd C(D.rows(), D.cols());
    for (Eigen::Index s = 0; s < D.rows(); ++s) {
        for (Eigen::Index g = 0; g < D.cols(); ++g) {
            const double d = D(s, g);
            const double p = marginal(g);
            if (p <= 0.0 && d > 0.0)
                throw DegenerateMarginalError("marginal is zero at goal " + std::to_string(g) +
                                              " where the future density is positive");
            C(s, g) = d > 0.0 ? d / (d + p) : 0.0;
        }
    }
    return C;
}

inline std::vector<MatrixXd> bayes_classifier_action(const std::vector<MatrixXd>& Da, const VectorXd& marginal) {
    std::vector<MatrixXd> out;
    for (const auto& D : Da) out.push_back(bayes_classifier(D, marginal));
    return out;
}

// Occupancy tables of a goal-conditioned policy, one per goal (shared when goal-independent).
class OccupancyCache {
   public:
    OccupancyCache(const TabularMDP& mdp, const GoalPolicy& policy, double gamma) : mdp_(mdp), policy_(policy), gamma_(gamma) {
        check_gamma(gamma);
        tables_.resize(policy.goal_independent() ? 1 : static_cast<std::size_t>(mdp.n));
    }

    // D under pi(. | ., g).
    const MatrixXd& table(int g) {
        const std::size_t k = policy_.goal_independent() ? 0 : static_cast<std::size_t>(g);
        if (!tables_[k]) tables_[k] = geom_occupancy(mdp_, policy_.for_goal(g), gamma_);
        return *tables_[k];
    }

    // D^{pi(.|.,g)}(s, g): probability-mass of occupying g when commanded to reach g.
    double reach(int s, int g) { return table(g)(s, g); }

   private:
    const TabularMDP& mdp_;
    const GoalPolicy& policy_;
    double gamma_;
    std::vector<std::optional<MatrixXd>> tables_;
};

// Unnormalized q*(w) = D^{pi_g}(w, g) * D^{pi_w}(s0, w).
inline VectorXd waypoint_weights(const TabularMDP& mdp, const GoalPolicy& policy, int s0, int sg, double gamma) {
    OccupancyCache cache(mdp, policy, gamma);
    VectorXd w(mdp.n);
    for (int k = 0; k < mdp.n; ++k) w(k) = cache.reach(k, sg) * cache.reach(s0, k);
    return w;
}

inline VectorXd optimal_waypoint_dist(const TabularMDP& mdp, const GoalPolicy& policy, int s0, int sg, double gamma) {
    VectorXd w = waypoint_weights(mdp, policy, s0, sg, gamma);
    const double z = w.sum();
    if (!(z > 0.0)) throw UnreachableGoalError("no waypoint connects start and goal");
    return w / z;
}

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// sum_w q(w) [log D^{pi_g}(w, g) + log D^{pi_w}(s0, w) - log q(w)]; -inf if q puts
// mass where either leg has zero density.
inline double elbo(const TabularMDP& mdp, const GoalPolicy& policy, const VectorXd& q, int s0, int sg, double gamma) {
    if (q.size() != mdp.n) throw ShapeError("waypoint distribution has wrong length");
    OccupancyCache cache(mdp, policy, gamma);
    double total = 0.0;
    for (int w = 0; w < mdp.n; ++w) {
        if (q(w) <= 0.0) continue;
        const double a = cache.reach(w, sg);
        const double b = cache.reach(s0, w);
        if (a <= 0.0 || b <= 0.0) return kNegInf;
        total += q(w) * (std::log(a) + std::log(b) - std::log(q(w)));
    }
    return total;
}

// Spread (max - min) over the support of log q(w) - log D_goal(w) - log D_way(w).
// Zero exactly when q satisfies the first-order condition of the ELBO Lagrangian.
inline double lagrangian_residual_spread(const TabularMDP& mdp, const GoalPolicy& policy, const VectorXd& q, int s0,
                                        int sg, double gamma) {
    OccupancyCache cache(mdp, policy, gamma);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int w = 0; w < mdp.n; ++w) {
        if (q(w) <= 0.0) continue;
        const double r = std::log(q(w)) - std::log(cache.reach(w, sg)) - std::log(cache.reach(s0, w));
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    return hi - lo;
}

// Value iteration on V(s) = (1 - gamma) [s == goal] + gamma max_a sum_s' P[a](s, s') V(s'),
// the best achievable discounted occupancy of `goal`. Greedy ties go to the lowest action index.
inline TabularPolicy optimal_policy(const TabularMDP& mdp, int goal, double gamma, VectorXd* value_out = nullptr) {
    check_gamma(gamma);
    if (goal < 0 || goal >= mdp.n) throw UsageError("goal index out of range");
    VectorXd V = VectorXd::Zero(mdp.n);
    VectorXd r = VectorXd::Zero(mdp.n);
    r(goal) = 1.0 - gamma;
    for (int it = 0; it < 1'000'000; ++it) {
        VectorXd best = VectorXd::Constant(mdp.n, kNegInf);
        for (const auto& Pa : mdp.P) best = best.cwiseMax(Pa * V);
        VectorXd next = r + gamma * best;
        const double change = (next - V).cwiseAbs().maxCoeff();
        V = std::move(next);
        if (change < 1e-10) break;
    }
    bool reachable = mdp.n == 1;
    for (int s = 0; s < mdp.n && !reachable; ++s) reachable = s != goal && V(s) > 0.0;
    if (!reachable) throw UnreachableGoalError("goal " + std::to_string(goal) + " is unreachable from every other state");

    TabularPolicy pi = TabularPolicy::Zero(mdp.n, mdp.num_actions);
    for (int s = 0; s < mdp.n; ++s) {
        int best_a = 0;
        double best_q = kNegInf;
        for (int a = 0; a < mdp.num_actions; ++a) {
            const double q = mdp.P[static_cast<std::size_t>(a)].row(s).dot(V);
            if (q > best_q + 1e-15) {
                best_q = q;
                best_a = a;
            }
        }
        pi(s, best_a) = 1.0;
    }
    if (value_out) *value_out = V;
    return pi;
}

// One optimal policy per goal state.
inline GoalPolicy optimal_goal_policy(const TabularMDP& mdp, double gamma) {
    std::vector<TabularPolicy> per_goal;
    per_goal.reserve(static_cast<std::size_t>(mdp.n));
    for (int g = 0; g < mdp.n; ++g) per_goal.push_back(optimal_policy(mdp, g, gamma));
    return GoalPolicy(std::move(per_goal));
}

inline TabularPolicy uniform_policy(const TabularMDP& mdp) {
    return TabularPolicy::Constant(mdp.n, mdp.num_actions, 1.0 / mdp.num_actions);
}

inline TabularPolicy random_policy(int n, int num_actions, Rng& rng) {
    std::gamma_distribution<double> gam(1.0, 1.0);
    TabularPolicy pi(n, num_actions);
    for (int s = 0; s < n; ++s) {
        for (int a = 0; a < num_actions; ++a) pi(s, a) = gam(rng) + 1e-3;
        pi.row(s) /= pi.row(s).sum();
    }
    return pi;
}

// Random MDP with dense Dirichlet(1) transition rows.
inline TabularMDP random_mdp(int n, int num_actions, Rng& rng) {
    std::gamma_distribution<double> gam(1.0, 1.0);
    TabularMDP m{n, num_actions, {}};
    for (int a = 0; a < num_actions; ++a) {
        MatrixXd Pa(n, n);
        for (int s = 0; s < n; ++s) {
            for (int t = 0; t < n; ++t) Pa(s, t) = gam(rng) + 1e-3;
            Pa.row(s) /= Pa.row(s).sum();
        }
        m.P.push_back(std::move(Pa));
    }
    return m;
}

// Deterministic chain 0 - 1 - ... - (n-1) with actions {left, right, stay}.
inline TabularMDP chain_mdp(int n) {
    TabularMDP m{n, 3, {}};
    for (int a = 0; a < 3; ++a) m.P.push_back(MatrixXd::Zero(n, n));
    for (int s = 0; s < n; ++s) {
        m.P[0](s, std::max(0, s - 1)) = 1.0;
        m.P[1](s, std::min(n - 1, s + 1)) = 1.0;
        m.P[2](s, s) = 1.0;
    }
    return m;
}

// Cell-center discretization of a maze: actions {stay, up, down, left, right};
// moves into walls stay put.
struct MazeDiscretization {
    TabularMDP mdp;
    std::vector<Cell> cells;    // state index -> cell
    std::vector<int> index_of;  // cy * width + cx -> state index or -1
    int width = 0;

    int state_of(Cell c) const {
        if (c.x < 0 || c.y < 0 || c.x >= width) return -1;
        const auto k = static_cast<std::size_t>(c.y * width + c.x);
        return k < index_of.size() ? index_of[k] : -1;
    }
};

inline MazeDiscretization discretize(const MazeSpec& spec) {
    MazeDiscretization d;
    d.width = spec.width;
    d.cells = spec.free_cells();
    d.index_of.assign(static_cast<std::size_t>(spec.width * spec.height), -1);
    for (std::size_t i = 0; i < d.cells.size(); ++i)
        d.index_of[static_cast<std::size_t>(d.cells[i].y * spec.width + d.cells[i].x)] = static_cast<int>(i);
    const int n = static_cast<int>(d.cells.size());
    d.mdp = TabularMDP{n, 5, {}};
    const int dx[5] = {0, 0, 0, -1, 1};
    const int dy[5] = {0, -1, 1, 0, 0};
    for (int a = 0; a < 5; ++a) {
        MatrixXd Pa = MatrixXd::Zero(n, n);
        for (int s = 0; s < n; ++s) {
            const Cell c = d.cells[static_cast<std::size_t>(s)];
            const Cell nc{c.x + dx[a], c.y + dy[a]};
            const int t = spec.is_free(nc) ? d.state_of(nc) : s;
            Pa(s, t) = 1.0;
        }
        d.mdp.P.push_back(std::move(Pa));
    }
    return d;
}

// Bayes-optimal state classifier log-odds for a goal-conditioned policy:
// L(s, g) = log D^{pi_g}(s, g) - log p(g), clamped to +-20.
inline MatrixXd state_log_odds_table(const TabularMDP& mdp, const GoalPolicy& policy, const VectorXd& marginal,
                                     double gamma) {
    OccupancyCache cache(mdp, policy, gamma);
    MatrixXd L(mdp.n, mdp.n);
    for (int g = 0; g < mdp.n; ++g) {
        VectorXd col = cache.table(g).col(g);
        MatrixXd Dg(mdp.n, 1);
        Dg.col(0) = col;
        VectorXd pg(1);
        pg(0) = marginal(g);
        const MatrixXd C = bayes_classifier(Dg, pg);
        for (int s = 0; s < mdp.n; ++s) L(s, g) = log_odds(C(s, 0));
    }
    return L;
}

}  // namespace cplan::oracle
