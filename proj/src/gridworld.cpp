#include "a2pd/gridworld.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>

namespace a2pd {

void GridConfig::validate() const {
    if (size < 2) throw std::invalid_argument("GridConfig: size must be >= 2");
    if (max_steps < 1) throw std::invalid_argument("GridConfig: max_steps must be >= 1");
    if (obs_blur < 0.0) throw std::invalid_argument("GridConfig: obs_blur must be >= 0");
    auto inside = [&](Cell c) {
        return c.row >= 0 && c.col >= 0 && c.row < int(size) && c.col < int(size);
    };
    if (!inside(start) || !inside(goal))
        throw std::invalid_argument("GridConfig: start/goal out of bounds");
    if (start == goal) throw std::invalid_argument("GridConfig: start equals goal");
    for (Cell h : hazards) {
        if (!inside(h)) throw std::invalid_argument("GridConfig: hazard out of bounds");
        if (h == start) throw std::invalid_argument("GridConfig: hazard on start");
    }
}

GridWorld::GridWorld(GridConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    agent_ = cfg_.start;
}

bool GridWorld::in_bounds(Cell c) const {
    return c.row >= 0 && c.col >= 0 && c.row < int(cfg_.size) && c.col < int(cfg_.size);
}

bool GridWorld::is_hazard(Cell c) const {
    for (Cell h : cfg_.hazards)
        if (h == c) return true;
    return false;
}

Tensor GridWorld::observation_of(Cell c) const {
    std::size_t n = cfg_.size;
    Tensor obs({n * n});
    if (cfg_.obs_blur == 0.0) {
        obs[std::size_t(c.row) * n + std::size_t(c.col)] = 1.0;
        return obs;
    }
    double inv = 1.0 / (2.0 * cfg_.obs_blur * cfg_.obs_blur);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t col = 0; col < n; ++col) {
            double dr = double(r) - double(c.row);
            double dc = double(col) - double(c.col);
            obs[r * n + col] = std::exp(-(dr * dr + dc * dc) * inv);
        }
    return obs;
}

Tensor GridWorld::reset(std::uint64_t /*seed*/) {
    agent_ = cfg_.start;
    steps_ = 0;
    done_ = false;
    return observation();
}

StepResult GridWorld::step(Action a) {
    if (done_) throw std::logic_error("GridWorld: step() after episode end");
    Cell next = agent_;
    switch (a) {
    case Action::Up: next.row -= 1; break;
    case Action::Down: next.row += 1; break;
    case Action::Left: next.col -= 1; break;
    case Action::Right: next.col += 1; break;
    }
    if (in_bounds(next)) agent_ = next; // walls block, position unchanged
    ++steps_;

    StepResult res;
    if (agent_ == cfg_.goal) {
        res.reward = cfg_.goal_reward;
        done_ = true;
    } else if (is_hazard(agent_)) {
        res.reward = cfg_.hazard_reward;
        done_ = true;
    } else {
        res.reward = cfg_.step_penalty;
        done_ = steps_ >= cfg_.max_steps;
    }
    res.done = done_;
    res.obs = observation();
    return res;
}

namespace {

// BFS distances from start over non-terminal cells; -1 = unreachable.
std::vector<int> bfs_distances(const GridConfig& cfg) {
    int n = int(cfg.size);
    std::vector<int> dist(std::size_t(n) * std::size_t(n), -1);
    auto id = [n](Cell c) { return std::size_t(c.row) * std::size_t(n) + std::size_t(c.col); };
    auto terminal = [&](Cell c) {
        if (c == cfg.goal) return true;
        for (Cell h : cfg.hazards)
            if (h == c) return true;
        return false;
    };
    std::deque<Cell> queue{cfg.start};
    dist[id(cfg.start)] = 0;
    while (!queue.empty()) {
        Cell c = queue.front();
        queue.pop_front();
        if (terminal(c)) continue; // episodes end here, no onward moves
        const Cell moves[4] = {{c.row - 1, c.col}, {c.row + 1, c.col},
                               {c.row, c.col - 1}, {c.row, c.col + 1}};
        for (Cell m : moves) {
            if (m.row < 0 || m.col < 0 || m.row >= n || m.col >= n) continue;
            if (dist[id(m)] != -1) continue;
            dist[id(m)] = dist[id(c)] + 1;
            queue.push_back(m);
        }
    }
    return dist;
}

} // namespace

double optimal_return(const GridConfig& cfg) {
    cfg.validate();
    auto dist = bfs_distances(cfg);
    int n = int(cfg.size);
    int dgoal = dist[std::size_t(cfg.goal.row) * std::size_t(n) + std::size_t(cfg.goal.col)];
    double timeout = double(cfg.max_steps) * cfg.step_penalty;
    if (dgoal < 0 || std::size_t(dgoal) > cfg.max_steps) return timeout;
    double via_goal = double(dgoal - 1) * cfg.step_penalty + cfg.goal_reward;
    return std::max(via_goal, timeout);
}

std::vector<Cell> reachable_cells(const GridConfig& cfg) {
    cfg.validate();
    auto dist = bfs_distances(cfg);
    int n = int(cfg.size);
    std::vector<Cell> out;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            Cell cell{r, c};
            if (dist[std::size_t(r) * std::size_t(n) + std::size_t(c)] < 0) continue;
            if (cell == cfg.goal) continue;
            bool hazard = false;
            for (Cell h : cfg.hazards) hazard |= (h == cell);
            if (!hazard) out.push_back(cell);
        }
    return out;
}

} // namespace a2pd
