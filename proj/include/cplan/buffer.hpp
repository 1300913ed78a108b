#pragma once

// Episode replay buffer with C-learning goal relabeling. The stored states also
// serve as the background distribution that waypoint candidates are drawn from.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "cplan/core.hpp"
#include "cplan/env.hpp"

namespace cplan {

struct Transition {
    EnvState state;
    Vec2 action;
    EnvState next_state;
    Goal commanded_goal;
    long episode_id = 0;
    int step_index = 0;

    friend bool operator==(const Transition&, const Transition&) = default;
};

struct RelabelConfig {
    double p_next = 0.5;
    double p_future = 0.0;
    double gamma = 0.99;  // discount of the future-offset geometric

    void validate() const {
        if (p_next < 0 || p_future < 0 || p_next + p_future > 1.0 + 1e-12)
            throw UsageError("relabel probabilities must be nonnegative with p_next + p_future <= 1");
        if (!(gamma > 0.0 && gamma < 1.0)) throw UsageError("relabel gamma must lie in (0, 1)");
    }
};

enum class LabelSource { Next, Future, Commanded, Random };

inline const char* to_string(LabelSource s) {
    switch (s) {
        case LabelSource::Next: return "next";
        case LabelSource::Future: return "future";
        case LabelSource::Commanded: return "commanded";
        case LabelSource::Random: return "random";
    }
    return "?";
}

struct RelabeledSample {
    EnvState state;
    Vec2 action;
    EnvState next_state;
    Vec2 goal;
    LabelSource source = LabelSource::Next;
    int future_offset = 0;  // steps from state to goal; set for Next (1) and Future
};

// Draws an offset in {1, ..., horizon} with P(k) proportional to gamma^(k-1).
inline int truncated_geometric(double gamma, int horizon, Rng& rng) {
    if (horizon <= 1) return 1;
    const double u = uniform01(rng);
    const double mass = 1.0 - std::pow(gamma, horizon);
    const int k = 1 + static_cast<int>(std::floor(std::log1p(-u * mass) / std::log(gamma)));
    return std::clamp(k, 1, horizon);
}

class ReplayBuffer {
   public:
    static constexpr std::size_t kDefaultCapacity = 1'000'000;

    explicit ReplayBuffer(std::size_t capacity = kDefaultCapacity) : capacity_(capacity) {
        if (capacity == 0) throw UsageError("buffer capacity must be positive");
        data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
    }

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return size_ == 0; }

    // i-th oldest stored transition.
    const Transition& at(std::size_t i) const { return data_[slot(i)]; }

    void insert_trajectory(std::span<const Transition> traj) {
        if (traj.empty()) throw UsageError("cannot insert an empty trajectory");
        for (std::size_t i = 1; i < traj.size(); ++i) {
            if (traj[i].episode_id != traj[0].episode_id) throw UsageError("trajectory mixes episodes");
            if (traj[i].step_index != traj[i - 1].step_index + 1)
                throw UsageError("trajectory steps are not consecutive");
        }
        const std::size_t last_abs = total_ + traj.size() - 1;
        for (const auto& t : traj) push(t, last_abs);
    }

    std::vector<RelabeledSample> sample_batch(std::size_t n, const RelabelConfig& relabel, Rng& rng) const {
        if (empty()) throw UsageError("cannot sample from an empty buffer");
        const std::size_t count = size_;  // snapshot
        std::vector<RelabeledSample> out;
        out.reserve(n);
        const double p_cmd = relabel.p_next + relabel.p_future + 0.5 * (1.0 - relabel.p_next - relabel.p_future);
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t i = uniform_index(rng, count);
            const Transition& t = at(i);
            RelabeledSample s{t.state, t.action, t.next_state, t.next_state.position, LabelSource::Next, 1};
            const double u = uniform01(rng);
            if (u < relabel.p_next) {
                // goal already set to next_state
            } else if (u < relabel.p_next + relabel.p_future) {
                const std::size_t last = last_index_of_episode(i);
                const int horizon = static_cast<int>(last - i) + 1;
                const int off = truncated_geometric(relabel.gamma, horizon, rng);
                s.goal = at(i + static_cast<std::size_t>(off) - 1).next_state.position;
                s.source = LabelSource::Future;
                s.future_offset = off;
            } else if (u < p_cmd) {
                s.goal = t.commanded_goal.position;
                s.source = LabelSource::Commanded;
                s.future_offset = 0;
            } else {
                s.goal = at(uniform_index(rng, count)).state.position;
                s.source = LabelSource::Random;
                s.future_offset = 0;
            }
            out.push_back(s);
        }
        return out;
    }

    std::vector<EnvState> sample_states(std::size_t m, Rng& rng) const {
        if (empty()) throw UsageError("cannot sample states from an empty buffer");
        const std::size_t count = size_;
        std::vector<EnvState> out;
        out.reserve(m);
        for (std::size_t k = 0; k < m; ++k) out.push_back(at(uniform_index(rng, count)).state);
        return out;
    }

    // Logical index of the newest stored transition in the same episode as i.
    std::size_t last_index_of_episode(std::size_t i) const {
        return end_abs_[slot(i)] - oldest_abs();
    }

    void save(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw UsageError("cannot write buffer dump: " + path);
        f << "cplan-buffer 1\n";
        f << "capacity " << capacity_ << "\n";
        f << "size " << size_ << "\n";
        char buf[64];
        auto put = [&](double v) {
            std::snprintf(buf, sizeof buf, "%a ", v);
            f << buf;
        };
        for (std::size_t i = 0; i < size_; ++i) {
            const auto& t = at(i);
            put(t.state.position.x);
            put(t.state.position.y);
            put(t.action.x);
            put(t.action.y);
            put(t.next_state.position.x);
            put(t.next_state.position.y);
            put(t.commanded_goal.position.x);
            put(t.commanded_goal.position.y);
            f << t.episode_id << " " << t.step_index << "\n";
        }
    }

    static ReplayBuffer load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw UsageError("cannot read buffer dump: " + path);
        std::string tag, key;
        int version = 0;
        std::size_t capacity = 0, size = 0;
        if (!(f >> tag >> version) || tag != "cplan-buffer" || version != 1) throw ParseError("not a cplan-buffer v1 file");
        if (!(f >> key >> capacity) || key != "capacity") throw ParseError("missing capacity");
        if (!(f >> key >> size) || key != "size") throw ParseError("missing size");
        auto get = [&]() {
            std::string tok;
            if (!(f >> tok)) throw ParseError("truncated buffer dump");
            char* end = nullptr;
            const double v = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0') throw ParseError("bad number: " + tok);
            return v;
        };
        ReplayBuffer b(capacity);
        std::vector<Transition> episode;
        for (std::size_t i = 0; i < size; ++i) {
            Transition t;
            t.state.position = {get(), get()};
            t.action = {get(), get()};
            t.next_state.position = {get(), get()};
            t.commanded_goal.position = {get(), get()};
            if (!(f >> t.episode_id >> t.step_index)) throw ParseError("truncated buffer dump");
            if (!episode.empty() && (t.episode_id != episode.back().episode_id ||
                                     t.step_index != episode.back().step_index + 1)) {
                b.insert_trajectory(episode);
                episode.clear();
            }
            episode.push_back(t);
        }
        if (!episode.empty()) b.insert_trajectory(episode);
        return b;
    }

   private:
    std::size_t oldest_abs() const { return total_ - size_; }
    std::size_t slot(std::size_t i) const { return (oldest_abs() + i) % capacity_; }

    void push(const Transition& t, std::size_t episode_end_abs) {
        const std::size_t s = total_ % capacity_;
        if (data_.size() < capacity_ && s == data_.size()) {
            data_.push_back(t);
            end_abs_.push_back(episode_end_abs);
        } else {
            data_[s] = t;
            end_abs_[s] = episode_end_abs;
        }
        ++total_;
        if (size_ < capacity_) ++size_;
    }

    std::size_t capacity_;
    std::vector<Transition> data_;
    std::vector<std::size_t> end_abs_;  // absolute insertion index of each slot's episode end
    std::size_t size_ = 0;
    std::size_t total_ = 0;
};

}  // namespace cplan
