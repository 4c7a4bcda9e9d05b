#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "a2pd/tensor.hpp"

namespace a2pd {

// Deterministic N x N gridworld with continuous observations: a Gaussian
// bump (peak 1 at the agent cell) over all N^2 cells, so input gradients
// are non-degenerate and gradient attacks are meaningful.

enum class Action : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3 };
constexpr std::size_t kNumActions = 4;

struct Cell {
    int row = 0;
    int col = 0;
    bool operator==(const Cell&) const = default;
};

struct GridConfig {
    std::size_t size = 5;
    Cell start{0, 0};
    Cell goal{4, 4};
    std::vector<Cell> hazards{{1, 2}, {2, 1}};
    double goal_reward = 10.0;
    double hazard_reward = -10.0;
    double step_penalty = -0.1;
    std::size_t max_steps = 50;
    double obs_blur = 0.8; // sigma of the bump, in cell units; 0 = one-hot

    void validate() const;
    std::size_t obs_dim() const { return size * size; }
};

struct StepResult {
    Tensor obs;
    double reward = 0.0;
    bool done = false;
};

class GridWorld {
public:
    explicit GridWorld(GridConfig cfg);

    const GridConfig& config() const { return cfg_; }
    std::size_t obs_dim() const { return cfg_.obs_dim(); }

    Tensor reset(std::uint64_t seed = 0);
    StepResult step(Action a);

    bool done() const { return done_; }
    Cell agent() const { return agent_; }
    std::size_t steps_taken() const { return steps_; }

    Tensor observation() const { return observation_of(agent_); }
    Tensor observation_of(Cell c) const;

    bool is_hazard(Cell c) const;
    bool in_bounds(Cell c) const;

private:
    GridConfig cfg_;
    Cell agent_;
    std::size_t steps_ = 0;
    bool done_ = true;
};

// Brute-force search helpers (exact for the small grids this project
// uses). The optimal return is the evaluation ceiling reported next to
// measured returns.

// Best achievable episode return from the start cell, or the timeout
// return if the goal is unreachable.
double optimal_return(const GridConfig& cfg);

// Non-terminal cells reachable from the start without entering a
// terminal cell.
std::vector<Cell> reachable_cells(const GridConfig& cfg);

} // namespace a2pd
