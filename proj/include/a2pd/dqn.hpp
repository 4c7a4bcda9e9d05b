#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "a2pd/gridworld.hpp"
#include "a2pd/policy.hpp"
#include "a2pd/rng.hpp"

namespace a2pd {

// Plain DQN teacher: MSE TD loss against a frozen target network, Adam,
// epsilon-greedy exploration with a linear schedule.

struct DqnConfig {
    double gamma = 0.99;
    std::size_t replay_capacity = 10000;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::size_t target_update = 500;  // steps between target refreshes
    double eps_start = 1.0;
    double eps_end = 0.05;
    std::size_t eps_decay_steps = 20000;
    std::size_t total_steps = 50000;
    std::size_t start_steps = 500;    // transitions gathered before updates begin
    std::vector<std::size_t> hidden{64, 64};
    std::uint64_t seed = 0;

    void validate() const;
};

struct Transition {
    Tensor s;
    std::size_t a = 0;
    double r = 0.0;
    Tensor s_next;
    bool done = false;
};

// Ring buffer; batches sample uniformly without replacement.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be > 0");
    }

    void push(Transition t);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& operator[](std::size_t i) const { return data_[i]; }

    // k distinct indices into the buffer
    std::vector<std::size_t> sample_indices(std::size_t k, Rng& rng) const;

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> data_;
};

struct TeacherCurveRow {
    std::size_t step = 0;
    double episode_return = 0.0;
    double loss = 0.0;
};

struct TeacherResult {
    PolicyNet q_net;
    std::vector<TeacherCurveRow> curve; // one row per completed episode
};

TeacherResult train_teacher(const GridConfig& env_cfg, const DqnConfig& cfg);

enum class TeacherMode : std::uint8_t { OneHot = 0, Softmax = 1 };

// One-hot of argmax-Q (pre-clamp) or the clamped softmax of Q-values.
Prescription teacher_prescription(const PolicyNet& q_net, const Tensor& obs,
                                  TeacherMode mode);

// Mean greedy return over `episodes` evaluation episodes, no attack.
double greedy_return(const PolicyNet& net, const GridConfig& env_cfg,
                     std::size_t episodes);

void write_teacher_curve_csv(const std::vector<TeacherCurveRow>& curve,
                             const std::string& path);

} // namespace a2pd
