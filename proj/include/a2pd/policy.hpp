#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "a2pd/rng.hpp"
#include "a2pd/tape.hpp"
#include "a2pd/tensor.hpp"

namespace a2pd {

// Probability clamp for prescriptions. Keeps every entry in
// [kProbClamp, 1-kProbClamp] so renormalized entropies and -log terms
// stay finite.
constexpr double kProbClamp = 1e-6;

// Probability vector over the discrete actions.
struct Prescription {
    std::vector<double> probs;
    std::size_t size() const { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }
};

// Feed-forward policy: tanh hidden layers, linear logits, softmax head.
// Doubles as a Q-network (the logits are then Q-values).
class PolicyNet {
public:
    PolicyNet() = default;

    // layer_sizes = {d, hidden..., |A|}
    PolicyNet(std::vector<std::size_t> layer_sizes, Rng& rng);
    PolicyNet(std::vector<std::size_t> layer_sizes, std::vector<Tensor> params);

    std::size_t input_dim() const { return layer_sizes_.front(); }
    std::size_t num_actions() const { return layer_sizes_.back(); }
    const std::vector<std::size_t>& layer_sizes() const { return layer_sizes_; }

    std::span<const Tensor> params() const { return params_; }
    std::span<Tensor> params_mut() { return params_; }
    std::size_t param_count() const;

    // raw logits / Q-values for one observation
    Tensor logits(const Tensor& obs) const;

    friend bool operator==(const PolicyNet&, const PolicyNet&) = default;

private:
    std::vector<std::size_t> layer_sizes_;
    std::vector<Tensor> params_; // W0,b0,W1,b1,...
};

// Clamped softmax of the logits, renormalized to sum exactly 1.
Prescription prescribe(const PolicyNet& net, const Tensor& obs);

// Softmax + clamp + renormalization applied to raw values (e.g. Q-values).
Prescription softmax_prescription(std::span<const double> logits);

// Greedy action; ties break to the smallest index.
std::size_t select_action(const Prescription& p);

// Top probability minus the runner-up. Needs at least two actions.
double prescription_gap(const Prescription& p);

// Signed gap of a designated action versus the best other action:
// p[a] - max_{j != a} p[j]. Positive iff `a` is the unique argmax.
double action_gap(const Prescription& p, std::size_t a);

// Tape builder: clamped renormalized softmax over each row of a logits
// matrix [B x |A|]. Shares the semantics of prescribe().
Val prescription_rows(Tape& t, Val logits);

// Binary checkpoint ("A2PD" magic, little-endian). Returns/accepts the
// weights in layer order.
void save_checkpoint(const PolicyNet& net, const std::string& path);
PolicyNet load_checkpoint(const std::string& path);

constexpr std::uint32_t kCheckpointVersion = 1;

} // namespace a2pd
