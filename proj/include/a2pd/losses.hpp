#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "a2pd/policy.hpp"
#include "a2pd/tape.hpp"

namespace a2pd {

// Shared loss settings. eta weights the target-probability factor of the
// gap-maximization loss, beta weights the input-gradient regularizer.
// log_base == 0 means natural logarithm; any base > 1 rescales by
// 1/ln(base). smoothing keeps the gradient norm differentiable at zero.
struct LossConfig {
    double eta = 1.0 / 3.0;
    double beta = 0.01;
    double log_base = 0.0;
    double smoothing = 1e-12;
    bool squared_norm = false; // ablation: |g|^2 + eps instead of sqrt(|g|^2 + eps)

    void validate() const;
    double log_scale() const;
};

// Gap-maximization loss for one prescription:
//   -p[a_T]^eta * H(q),  q_a = p[a] / (1 - p[a_T]) over a != a_T,
// with natural-log entropy and 0*log(0) = 0. Ranges in [-log(|A|-1), 0].
double pgm_loss(const Prescription& p, std::size_t a_t, double eta, double log_base = 0.0);

// Smoothed Euclidean norm of d(pgm_loss)/d(observation).
double jr_loss(const PolicyNet& net, const Tensor& obs, std::size_t a_t,
               const LossConfig& cfg);

struct A2pdParts {
    double total = 0.0;
    double pgm = 0.0;
    double jr = 0.0;
};

// total = pgm + beta * jr, parts reported for logging.
A2pdParts a2pd_loss(const PolicyNet& net, const Tensor& obs, std::size_t a_t,
                    const LossConfig& cfg);

// One-hot cross entropy: -log p[a_T]. Clamping keeps it finite.
double ce_loss(const Prescription& p, std::size_t a_t, double log_base = 0.0);

// KL(teacher || student) over clamped prescriptions.
double kl_pd_loss(const Prescription& student, const Prescription& teacher,
                  double log_base = 0.0);

// --- tape builders (batched) ---------------------------------------------
//
// These compose the same losses on a tape, applied row-wise to a batch of
// prescriptions [B x |A|]. Used by the trainers and the attacks, where
// gradients (and for the JR path, gradients of gradients) are needed.

// Per-row gap-maximization losses [B].
Val pgm_rows(Tape& t, Val prescriptions, std::span<const std::size_t> a_t,
             double eta, double log_base = 0.0);

// Per-row one-hot cross entropies [B].
Val ce_rows(Tape& t, Val prescriptions, std::span<const std::size_t> a_t,
            double log_base = 0.0);

// Per-row KL(teacher || student) [B]; teacher enters as a constant.
Val kl_rows(Tape& t, Val student_prescriptions, const Tensor& teacher_prescriptions,
            double log_base = 0.0);

// Builds prescriptions + per-row pgm losses + per-row smoothed gradient
// norms for a parameter batch, returning the scalar training objective
//   mean_b pgm_b + beta * mean_b jr_b
// with the component means exposed for logging. When beta == 0 the second
// backward pass is skipped entirely and jr_mean reports 0.
struct A2pdBatch {
    std::unique_ptr<Tape> tape; // heap tape: the Vals keep pointing at it
    Val objective;              // scalar node
    std::vector<Val> param_vars;
    double pgm_mean = 0.0;
    double jr_mean = 0.0;
    double total = 0.0;
};

A2pdBatch a2pd_batch_objective(std::span<const Tensor> params, const Tensor& states,
                               std::span<const std::size_t> a_t, const LossConfig& cfg,
                               bool force_jr = false);

} // namespace a2pd
