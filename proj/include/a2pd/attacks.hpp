#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "a2pd/policy.hpp"
#include "a2pd/tensor.hpp"

namespace a2pd {

// Test-time adversaries. All of them ascend the one-hot cross entropy of
// the policy's prescription toward the designated action, stay inside the
// epsilon l-inf ball and clip to the [0,1] observation box. They are
// deterministic functions of (net, observation, spec).

enum class AttackFamily : std::uint8_t { None, Fgsm, Pgd, Jsma };

// How the raw input gradient turns into a step direction. Sign is the
// classic l-inf steepest ascent; Renorm scales the gradient to unit
// l-inf norm instead.
enum class GradProjection : std::uint8_t { Sign, Renorm };

struct AttackSpec {
    AttackFamily family = AttackFamily::None;
    double epsilon = 0.0;
    int steps = 1;        // PGD iterations
    int jsma_budget = 1;  // max coordinates JSMA may touch
    GradProjection projection = GradProjection::Sign;

    void validate() const;
    std::string label() const;
};

// d(ce)/d(observations) for a batch of rows, parameters held constant.
Tensor ce_input_gradient(const PolicyNet& net, const Tensor& states,
                         std::span<const std::size_t> a_t);

Tensor fgsm(const PolicyNet& net, const Tensor& obs, std::size_t a_t, double eps);

Tensor pgd(const PolicyNet& net, const Tensor& obs, std::size_t a_t, double eps, int k,
           GradProjection projection = GradProjection::Sign);

Tensor jsma(const PolicyNet& net, const Tensor& obs, std::size_t a_t, double eps,
            int budget);

// PGD applied to every row of a batch at once (used by adversarial
// training); row b equals pgd() on that row.
Tensor pgd_batch(const PolicyNet& net, const Tensor& states,
                 std::span<const std::size_t> a_t, double eps, int k,
                 GradProjection projection = GradProjection::Sign);

// Attack the observation for the policy's own greedy action at `obs`
// (family None returns it unchanged).
Tensor apply_attack(const PolicyNet& net, const Tensor& obs, const AttackSpec& spec);

} // namespace a2pd
