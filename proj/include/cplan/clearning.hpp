#pragma once

// C-learning: contrastive future-state classifiers used as goal-conditioned
// value functions, and a squashed-Gaussian actor trained against them.
//
// Classifier loss per example (goals relabeled by the replay buffer):
//   next-state goal:   (1 - gamma) * CE(C(x), 1)
//   any other goal:    gamma * w * CE(C(x), 1) + CE(C(x), 0)
// with w = clip(C_t / (1 - C_t), 0, w_max) evaluated by the target
// state-action-goal classifier at (s', a' ~ pi(.|s', g), g) and treated as a
// constant. The state-goal classifier uses the same loss on (s, g) inputs and
// the same bootstrap weights.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <vector>

#include "cplan/approx.hpp"
#include "cplan/buffer.hpp"
#include "cplan/core.hpp"
#include "cplan/env.hpp"

namespace cplan {

struct TrainConfig {
    double gamma = 0.99;
    double actor_lr = 3e-4;
    double critic_lr = 3e-4;
    double state_critic_lr = 3e-5;
    double actor_loss_weight = 1.0;
    double critic_loss_weight = 0.5;
    double tau = 0.005;
    int target_update_period = 1;
    int batch_size = 256;
    double entropy_coef = 0.1;
    double w_clip = 20.0;
    std::vector<int> hidden = {64, 64};

    void validate() const {
        if (!(gamma > 0.0 && gamma < 1.0)) throw UsageError("gamma must lie in (0, 1)");
        if (actor_lr <= 0 || critic_lr <= 0 || state_critic_lr <= 0) throw UsageError("learning rates must be positive");
        if (tau < 0 || tau > 1) throw UsageError("tau must lie in [0, 1]");
        if (target_update_period < 1) throw UsageError("target update period must be >= 1");
        if (batch_size < 1) throw UsageError("batch size must be >= 1");
        if (entropy_coef < 0) throw UsageError("entropy coefficient must be nonnegative");
        if (hidden.empty()) throw UsageError("at least one hidden layer is required");
        for (int h : hidden)
            if (h <= 0) throw UsageError("hidden widths must be positive");
    }
};

struct GradStats {
    double loss = 0.0;
    double grad_norm = 0.0;
};

// A network producing one logit; probabilities use the logit clamped to +-20.
template <typename Scalar>
class ClassifierNet {
   public:
    ClassifierNet() = default;
    ClassifierNet(int input_width, const std::vector<int>& hidden, Rng& rng) : net_(sizes(input_width, hidden), OutputActivation::Identity, rng) {}
    explicit ClassifierNet(Mlp<Scalar> net) : net_(std::move(net)) {
        if (net_.output_width() != 1) throw ShapeError("classifier must have one output");
    }

    int input_width() const { return net_.input_width(); }
    const Mlp<Scalar>& net() const { return net_; }
    Mlp<Scalar>& net() { return net_; }

    // Clamped logits (= log-odds), one per row.
    Eigen::VectorXd log_odds(const Matrix<Scalar>& x) const {
        const Matrix<Scalar> z = net_.forward(x);
        Eigen::VectorXd out(z.rows());
        for (Eigen::Index i = 0; i < z.rows(); ++i) out(i) = clamp_logit(static_cast<double>(z(i, 0)));
        return out;
    }

    Eigen::VectorXd probability(const Matrix<Scalar>& x) const {
        Eigen::VectorXd z = log_odds(x);
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = sigmoid(z(i));
        return z;
    }

   private:
    static std::vector<int> sizes(int in, const std::vector<int>& hidden) {
        std::vector<int> s{in};
        s.insert(s.end(), hidden.begin(), hidden.end());
        s.push_back(1);
        return s;
    }

    Mlp<Scalar> net_;
};

// Inputs plus per-row targets for one classifier step.
template <typename Scalar>
struct ClassifierBatch {
    Matrix<Scalar> inputs;
    std::vector<bool> next_goal;  // true: next-state positive; false: bootstrapped/negative
    Eigen::VectorXd weight;       // bootstrap weight w for rows with next_goal == false
};

// Mean loss and dL/dlogit for a batch of clamped logits.
inline std::pair<double, Eigen::VectorXd> classifier_loss_terms(const Eigen::VectorXd& raw_logits,
                                                              const std::vector<bool>& next_goal,
                                                              const Eigen::VectorXd& weight, double gamma) {
    const auto n = raw_logits.size();
    Eigen::VectorXd d(n);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double raw = raw_logits(i);
        const double z = clamp_logit(raw);
        const bool clamped = raw != z;
        double l, dz;
        if (next_goal[static_cast<std::size_t>(i)]) {
            l = (1.0 - gamma) * softplus(-z);
            dz = -(1.0 - gamma) * sigmoid(-z);
        } else {
            const double w = weight(i);
            l = gamma * w * softplus(-z) + softplus(z);
            dz = -gamma * w * sigmoid(-z) + sigmoid(z);
        }
        total += l;
        d(i) = clamped ? 0.0 : dz / static_cast<double>(n);
    }
    return {total / static_cast<double>(n), d};
}

template <typename Scalar>
double classifier_loss(const ClassifierNet<Scalar>& c, const ClassifierBatch<Scalar>& batch, double gamma) {
    const Matrix<Scalar> z = c.net().forward(batch.inputs);
    Eigen::VectorXd raw = z.col(0).template cast<double>();
    return classifier_loss_terms(raw, batch.next_goal, batch.weight, gamma).first;
}

// Unweighted loss and the gradient of loss_weight * loss.
template <typename Scalar>
std::pair<double, Params<Scalar>> classifier_gradient(const ClassifierNet<Scalar>& c, const ClassifierBatch<Scalar>& batch,
                                                      double gamma, double loss_weight = 1.0) {
    const auto cache = c.net().forward_cached(batch.inputs);
    Eigen::VectorXd raw = cache.output.col(0).template cast<double>();
    auto [loss, dz] = classifier_loss_terms(raw, batch.next_goal, batch.weight, gamma);
    Matrix<Scalar> d_out = (loss_weight * dz).template cast<Scalar>();
    return {loss, c.net().backward(cache, d_out).grads};
}

// One Adam step on the weighted classifier loss; returns the (unweighted) loss
// and the L2 norm of the weighted parameter gradient.
template <typename Scalar>
GradStats classifier_update(ClassifierNet<Scalar>& c, AdamState<Scalar>& adam, const AdamConfig& opt,
                            const ClassifierBatch<Scalar>& batch, double gamma, double loss_weight = 1.0) {
    auto [loss, grads] = classifier_gradient(c, batch, gamma, loss_weight);
    const double gn = grads.norm();
    adam_step(c.net().params(), grads, adam, opt);
    return {loss, gn};
}

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kTanhEps = 1e-6;

// Squashed Gaussian policy over 2D actions in [-1, 1]^2 (units of kMaxAction cells).
template <typename Scalar>
class Policy {
   public:
    Policy() = default;
    Policy(int input_width, const std::vector<int>& hidden, Rng& rng) : net_(sizes(input_width, hidden), OutputActivation::Identity, rng) {}
    explicit Policy(Mlp<Scalar> net) : net_(std::move(net)) {
        if (net_.output_width() != 4) throw ShapeError("policy network must output mean and log-stddev (4 values)");
    }

    const Mlp<Scalar>& net() const { return net_; }
    Mlp<Scalar>& net() { return net_; }

    struct Sample {
        Matrix<Scalar> action;  // tanh(u)
        Matrix<Scalar> log_prob;
    };

    // Deterministic action tanh(mean) per row.
    Matrix<Scalar> mean_action(const Matrix<Scalar>& x) const {
        const Matrix<Scalar> out = net_.forward(x);
        return out.leftCols(2).array().tanh().matrix();
    }

    // Reparameterized sample with caller-supplied standard normal noise.
    Matrix<Scalar> sample_with_noise(const Matrix<Scalar>& x, const Matrix<Scalar>& noise) const {
        const Matrix<Scalar> out = net_.forward(x);
        Matrix<Scalar> log_std = out.rightCols(2).cwiseMax(Scalar(kLogStdMin)).cwiseMin(Scalar(kLogStdMax));
        Matrix<Scalar> u = out.leftCols(2) + log_std.array().exp().matrix().cwiseProduct(noise);
        return u.array().tanh().matrix();
    }

    Matrix<Scalar> sample(const Matrix<Scalar>& x, Rng& rng) const {
        Matrix<Scalar> noise(x.rows(), 2);
        for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = static_cast<Scalar>(standard_normal(rng));
        return sample_with_noise(x, noise);
    }

   private:
    static std::vector<int> sizes(int in, const std::vector<int>& hidden) {
        std::vector<int> s{in};
        s.insert(s.end(), hidden.begin(), hidden.end());
        s.push_back(4);
        return s;
    }

    Mlp<Scalar> net_;
};

struct ActorGradient {
    double loss = 0.0;
    double entropy = 0.0;  // -mean log pi
};

// Actor loss: mean over rows of  alpha * log pi(a|x) - logodds(C(s, a, g)),
// a = tanh(mean + std * noise). The classifier input is assembled by
// `classifier_input(actions)`; `action_col` is the first action column in it.
template <typename Scalar, typename BuildInput>
std::pair<ActorGradient, Params<Scalar>> actor_gradient(const Policy<Scalar>& policy,
                                                        const ClassifierNet<Scalar>& classifier,
                                                        const Matrix<Scalar>& policy_input,
                                                        const Matrix<Scalar>& noise, BuildInput&& classifier_input,
                                                        int action_col, double entropy_coef,
                                                        double loss_weight = 1.0) {
    const auto n = policy_input.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    const auto pc = policy.net().forward_cached(policy_input);
    const Matrix<Scalar>& out = pc.output;

    Matrix<double> mean = out.leftCols(2).template cast<double>();
    Matrix<double> raw_log_std = out.rightCols(2).template cast<double>();
    Matrix<double> log_std = raw_log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
    Matrix<double> stdv = log_std.array().exp().matrix();
    Matrix<double> eps = noise.template cast<double>();
    Matrix<double> u = mean + stdv.cwiseProduct(eps);
    Matrix<double> a = u.array().tanh().matrix();

    const Matrix<Scalar> cin = classifier_input(a.cast<Scalar>());
    const auto cc = classifier.net().forward_cached(cin);
    Matrix<Scalar> dz(n, 1);
    double logodds_sum = 0.0, logp_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double raw = static_cast<double>(cc.output(i, 0));
        const double z = clamp_logit(raw);
        logodds_sum += z;
        dz(i, 0) = static_cast<Scalar>(raw != z ? 0.0 : -loss_weight * inv_n);
    }
    const auto cb = classifier.net().backward(cc, dz, /*want_input_grad=*/true);
    const Matrix<double> da = cb.input_grad.middleCols(action_col, 2).template cast<double>();

    constexpr double kHalfLog2Pi = 0.91893853320467274178;
    Matrix<Scalar> d_out(n, 4);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < 2; ++j) {
            const double aj = a(i, j);
            const double one_m = 1.0 - aj * aj;
            logp_sum += -0.5 * eps(i, j) * eps(i, j) - log_std(i, j) - kHalfLog2Pi - std::log(one_m + kTanhEps);
            const double du = loss_weight * entropy_coef * inv_n * (2.0 * aj * one_m / (one_m + kTanhEps)) +
                              da(i, j) * one_m;
            d_out(i, j) = static_cast<Scalar>(du);
            const bool clamped = raw_log_std(i, j) != log_std(i, j);
            const double dls = -loss_weight * entropy_coef * inv_n + du * stdv(i, j) * eps(i, j);
            d_out(i, 2 + j) = static_cast<Scalar>(clamped ? 0.0 : dls);
        }
    }
    auto pb = policy.net().backward(pc, d_out);
    ActorGradient ag;
    ag.loss = entropy_coef * logp_sum * inv_n - logodds_sum * inv_n;
    ag.entropy = -logp_sum * inv_n;
    return {ag, std::move(pb.grads)};
}

// Maze-frame feature encoding: positions scaled into [-1, 1].
struct Encoder {
    Vec2 extent{1.0, 1.0};
    double action_scale = 1.0;  // env displacement per unit policy action

    double x(double px) const { return 2.0 * px / extent.x - 1.0; }
    double y(double py) const { return 2.0 * py / extent.y - 1.0; }
};

// Everything the learner owns: actor, both classifiers, the target classifier and optimizer states.
template <typename Scalar>
class Agent {
   public:
    Agent(const TrainConfig& cfg, const Encoder& enc, Rng& rng)
        : cfg_(cfg),
          enc_(enc),
          policy_(4, cfg.hidden, rng),
          classifier_(6, cfg.hidden, rng),
          state_classifier_(4, cfg.hidden, rng) {
        cfg_.validate();
        target_ = classifier_;
        policy_adam_ = AdamState<Scalar>::for_params(policy_.net().params());
        classifier_adam_ = AdamState<Scalar>::for_params(classifier_.net().params());
        state_adam_ = AdamState<Scalar>::for_params(state_classifier_.net().params());
    }

    const TrainConfig& config() const { return cfg_; }
    const Encoder& encoder() const { return enc_; }
    Policy<Scalar>& policy() { return policy_; }
    const Policy<Scalar>& policy() const { return policy_; }
    ClassifierNet<Scalar>& classifier() { return classifier_; }
    const ClassifierNet<Scalar>& classifier() const { return classifier_; }
    ClassifierNet<Scalar>& target_classifier() { return target_; }
    ClassifierNet<Scalar>& state_classifier() { return state_classifier_; }
    const ClassifierNet<Scalar>& state_classifier() const { return state_classifier_; }
    long updates() const { return updates_; }

    Matrix<Scalar> policy_input(std::span<const Vec2> states, std::span<const Vec2> goals) const {
        Matrix<Scalar> x(static_cast<Eigen::Index>(states.size()), 4);
        for (std::size_t i = 0; i < states.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            x(r, 0) = static_cast<Scalar>(enc_.x(states[i].x));
            x(r, 1) = static_cast<Scalar>(enc_.y(states[i].y));
            x(r, 2) = static_cast<Scalar>(enc_.x(goals[i].x));
            x(r, 3) = static_cast<Scalar>(enc_.y(goals[i].y));
        }
        return x;
    }

    // [s, a, g] rows from a policy-input matrix [s, g] and actions.
    static Matrix<Scalar> with_actions(const Matrix<Scalar>& sg, const Matrix<Scalar>& actions) {
        Matrix<Scalar> x(sg.rows(), 6);
        x.leftCols(2) = sg.leftCols(2);
        x.middleCols(2, 2) = actions;
        x.rightCols(2) = sg.rightCols(2);
        return x;
    }

    // Env-frame action for one state/goal pair.
    Vec2 act(Vec2 s, Vec2 g, Rng& rng, bool deterministic = false) const {
        const Vec2 ss[1] = {s};
        const Vec2 gg[1] = {g};
        const Matrix<Scalar> x = policy_input(ss, gg);
        const Matrix<Scalar> a = deterministic ? policy_.mean_action(x) : policy_.sample(x, rng);
        return {enc_.action_scale * static_cast<double>(a(0, 0)), enc_.action_scale * static_cast<double>(a(0, 1))};
    }

    // Log-odds of the state-goal classifier for each (s_i, g_i).
    Eigen::VectorXd state_log_odds(std::span<const Vec2> states, std::span<const Vec2> goals) const {
        return state_classifier_.log_odds(policy_input(states, goals));
    }

    struct UpdateStats {
        GradStats critic;
        GradStats state_critic;
        GradStats actor;
    };

    // One full gradient update (both classifiers, actor, target tracking). This is
    // the only update path; every method shares it.
    UpdateStats update(std::span<const RelabeledSample> batch, Rng& rng) {
        const auto n = static_cast<Eigen::Index>(batch.size());
        std::vector<Vec2> s(batch.size()), sn(batch.size()), g(batch.size());
        Matrix<Scalar> acts(n, 2);
        std::vector<bool> is_next(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            s[i] = batch[i].state.position;
            sn[i] = batch[i].next_state.position;
            g[i] = batch[i].goal;
            acts(static_cast<Eigen::Index>(i), 0) = static_cast<Scalar>(batch[i].action.x / enc_.action_scale);
            acts(static_cast<Eigen::Index>(i), 1) = static_cast<Scalar>(batch[i].action.y / enc_.action_scale);
            is_next[i] = batch[i].source == LabelSource::Next;
        }
        const Matrix<Scalar> sg = policy_input(s, g);
        const Matrix<Scalar> sng = policy_input(sn, g);

        // Bootstrap weights from the target classifier at (s', a' ~ pi(.|s', g), g).
        const Matrix<Scalar> next_actions = policy_.sample(sng, rng);
        const Eigen::VectorXd zt = target_.log_odds(with_actions(sng, next_actions));
        Eigen::VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) w(i) = std::min(std::exp(zt(i)), cfg_.w_clip);

        UpdateStats st;
        ClassifierBatch<Scalar> cb{with_actions(sg, acts), is_next, w};
        st.critic = classifier_update(classifier_, classifier_adam_, AdamConfig{cfg_.critic_lr}, cb, cfg_.gamma,
                                      cfg_.critic_loss_weight);
        ClassifierBatch<Scalar> sb{sg, is_next, w};
        st.state_critic = classifier_update(state_classifier_, state_adam_, AdamConfig{cfg_.state_critic_lr}, sb,
                                            cfg_.gamma, cfg_.critic_loss_weight);

        Matrix<Scalar> noise(n, 2);
        for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = static_cast<Scalar>(standard_normal(rng));
        auto [ag, grads] = actor_gradient(
            policy_, classifier_, sg, noise, [&](const Matrix<Scalar>& a) { return with_actions(sg, a); }, 2,
            cfg_.entropy_coef, cfg_.actor_loss_weight);
        st.actor = {ag.loss, grads.norm()};
        adam_step(policy_.net().params(), grads, policy_adam_, AdamConfig{cfg_.actor_lr});

        ++updates_;
        if (updates_ % cfg_.target_update_period == 0) soft_update(target_.net().params(), classifier_.net().params(), cfg_.tau);
        return st;
    }

    void save(const std::string& dir) const {
        save_mlp(dir + "/policy.txt", policy_.net());
        save_mlp(dir + "/classifier.txt", classifier_.net());
        save_mlp(dir + "/target_classifier.txt", target_.net());
        save_mlp(dir + "/state_classifier.txt", state_classifier_.net());
    }

    void load(const std::string& dir) {
        policy_ = Policy<Scalar>(load_mlp<Scalar>(dir + "/policy.txt"));
        classifier_ = ClassifierNet<Scalar>(load_mlp<Scalar>(dir + "/classifier.txt"));
        target_ = ClassifierNet<Scalar>(load_mlp<Scalar>(dir + "/target_classifier.txt"));
        state_classifier_ = ClassifierNet<Scalar>(load_mlp<Scalar>(dir + "/state_classifier.txt"));
        if (policy_.net().input_width() != 4 || classifier_.input_width() != 6 || state_classifier_.input_width() != 4)
            throw ShapeError("checkpoint network shapes do not match a 2D maze agent");
        policy_adam_ = AdamState<Scalar>::for_params(policy_.net().params());
        classifier_adam_ = AdamState<Scalar>::for_params(classifier_.net().params());
        state_adam_ = AdamState<Scalar>::for_params(state_classifier_.net().params());
    }

   private:
    TrainConfig cfg_;
    Encoder enc_;
    Policy<Scalar> policy_;
    ClassifierNet<Scalar> classifier_;
    ClassifierNet<Scalar> target_;
    ClassifierNet<Scalar> state_classifier_;
    AdamState<Scalar> policy_adam_;
    AdamState<Scalar> classifier_adam_;
    AdamState<Scalar> state_adam_;
    long updates_ = 0;
};

}  // namespace cplan
