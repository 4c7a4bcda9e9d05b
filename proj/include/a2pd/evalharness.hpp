#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "a2pd/attacks.hpp"
#include "a2pd/distill.hpp"
#include "a2pd/gridworld.hpp"
#include "a2pd/policy.hpp"

namespace a2pd {

// Robustness evaluation: the adversary perturbs only the policy's input;
// the environment always advances on the true state.

struct EvalStats {
    std::vector<double> returns;  // one per episode
    double mean_return = 0.0;
    double std_return = 0.0;      // sample std (n-1), exactly 0 for constant samples
    double mean_gap = 0.0;        // prescription gap at visited clean states
    double mean_jr = 0.0;         // smoothed input-gradient norm at visited clean states
};

// Runs `episodes` episodes with per-episode seeds base_seed + index; at
// every step the observation is attacked, the policy acts greedily on the
// attacked observation. Episode-parallel execution gives bit-identical
// results to serial.
EvalStats evaluate(const PolicyNet& policy, const GridConfig& env_cfg,
                   const AttackSpec& attack, std::size_t episodes,
                   std::uint64_t base_seed, double jr_eta = 1.0 / 3.0);

// 100 * attacked / clean. Undefined for a zero clean return.
double relative_robustness(double r_attacked, double r_clean);

struct GapReport {
    double mean = 0.0;
    std::array<std::size_t, 20> histogram{}; // gap in [0,1], 20 equal bins
};

GapReport gap_report(const PolicyNet& policy, const std::vector<Tensor>& states);

// Mean per-epoch wall seconds per configuration (first min(50, total)
// epochs of each log).
std::vector<std::pair<std::string, double>>
timing_report(const std::vector<std::pair<std::string, TrainLog>>& configs);

struct EvalReport {
    std::string policy_id;
    AttackSpec attack;
    std::size_t episodes = 0;
    double mean_return = 0.0;
    double std_return = 0.0;
    double relative_robustness_pct = 0.0;
    double mean_gap = 0.0;
    double mean_jr_norm = 0.0;
};

// JSON with exactly the report keys; CSV ledger row appended (header on
// first write).
std::string eval_report_json(const EvalReport& report);
void append_results_csv(const EvalReport& report, const std::string& path);

} // namespace a2pd
